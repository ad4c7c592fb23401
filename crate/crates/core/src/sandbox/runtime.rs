//! Interpreter configuration (`runtimes.toml`).
//!
//! ```toml
//! [python]
//! command = ["python3", "-I", "-S", "-B", "{harness}", "{source}", "{entry}"]
//! source_name = "guest.py"
//! harness = "python"
//! ```
//!
//! Placeholders: `{source}` (guest source path), `{harness}` (built-in
//! harness script path, only when `harness` is set), `{entry}` (entry
//! function name, empty for whole-file runs), `{dir}` (scratch directory).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SandboxError;

pub const PYTHON_HARNESS: &str = include_str!("../../assets/harness.py");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarnessKind {
    Python,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSpec {
    pub command: Vec<String>,
    #[serde(default = "default_source_name")]
    pub source_name: String,
    #[serde(default)]
    pub harness: Option<HarnessKind>,
}

fn default_source_name() -> String {
    "guest.src".into()
}

impl RuntimeSpec {
    /// Isolated mode without `site`: guests see only the standard library.
    pub fn python() -> Self {
        RuntimeSpec {
            command: ["python3", "-I", "-S", "-B", "{harness}", "{source}", "{entry}"].map(String::from).to_vec(),
            source_name: "guest.py".into(),
            harness: Some(HarnessKind::Python),
        }
    }

    pub(crate) fn render_args(&self, source: &Path, harness: Option<&Path>, entry: &str, dir: &Path) -> Vec<String> {
        self.command
            .iter()
            .map(|arg| {
                arg.replace("{source}", &source.to_string_lossy())
                    .replace("{harness}", &harness.map(|h| h.to_string_lossy().into_owned()).unwrap_or_default())
                    .replace("{entry}", entry)
                    .replace("{dir}", &dir.to_string_lossy())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuntimeMap(pub BTreeMap<String, RuntimeSpec>);

impl Default for RuntimeMap {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert("python".to_string(), RuntimeSpec::python());
        RuntimeMap(m)
    }
}

impl RuntimeMap {
    pub fn from_toml(text: &str) -> Result<Self, SandboxError> {
        let map: RuntimeMap = toml::from_str(text).map_err(|e| SandboxError::Config(e.to_string()))?;
        for (tag, spec) in &map.0 {
            if spec.command.is_empty() {
                return Err(SandboxError::Config(format!("runtime {tag}: empty command")));
            }
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, SandboxError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SandboxError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn get(&self, tag: &str) -> Result<&RuntimeSpec, SandboxError> {
        self.0.get(tag).ok_or_else(|| SandboxError::UnknownRuntime(tag.to_string()))
    }
}

/// Resolves a program name against `PATH` the way `execvp` would.
pub(crate) fn resolve_binary(name: &str) -> Option<std::path::PathBuf> {
    if name.contains('/') {
        let p = Path::new(name);
        return p.is_file().then(|| p.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_runtime_table() {
        let m = RuntimeMap::from_toml(
            r#"
            [python]
            command = ["python3", "{harness}", "{source}", "{entry}"]
            source_name = "main.py"
            harness = "python"

            [sh]
            command = ["sh", "{source}"]
            "#,
        )
        .unwrap();
        assert_eq!(m.get("sh").unwrap().source_name, "guest.src");
        assert_eq!(m.get("python").unwrap().harness, Some(HarnessKind::Python));
        assert!(matches!(m.get("ruby"), Err(SandboxError::UnknownRuntime(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RuntimeMap::from_toml("[x]\ncommand=[\"a\"]\nbogus=1").is_err());
        assert!(RuntimeMap::from_toml("[x]\ncommand=[]").is_err());
    }

    #[test]
    fn placeholders_substituted() {
        let spec = RuntimeSpec::python();
        let args = spec.render_args(Path::new("/s/guest.py"), Some(Path::new("/s/h.py")), "", Path::new("/s"));
        assert_eq!(args, vec!["python3", "-I", "-S", "-B", "/s/h.py", "/s/guest.py", ""]);
    }
}
