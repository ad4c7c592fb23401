use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::RequestParams;
use crate::model::Composition;
use crate::oracle::OracleConfig;
use crate::sandbox::{RuntimeMap, SandboxConfig};
use crate::synth::SynthConfig;

/// Everything a run needs, from one TOML file. Relative paths resolve
/// against the file's directory. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every random choice in a run derives from this.
    #[serde(default)]
    pub master_seed: u64,
    /// Seed problems, JSONL.
    pub seeds: PathBuf,
    /// Where artifacts go.
    pub out_dir: PathBuf,
    /// Concurrent sandbox guests; 0 means all cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub composition: CompositionConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default)]
    pub runtimes: RuntimeMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Canned responses chosen by prompt substrings.
    Keyed,
    /// Strict replay of recorded transcripts, one file per stage.
    Scripted,
    /// OpenAI-compatible chat completions endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Rules file for `keyed`.
    pub rules: Option<PathBuf>,
    /// Transcript directory for `scripted`.
    pub transcripts: Option<PathBuf>,
    /// Overrides the endpoint environment variable for `http`.
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_s: u64,
    pub max_in_flight: usize,
    /// Write each stage's traffic to `transcripts/<stage>.jsonl` under the output directory.
    pub record: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Http,
            rules: None,
            transcripts: None,
            endpoint: None,
            model: None,
            timeout_s: 120,
            max_in_flight: 4,
            record: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyWeights {
    pub single_extension: f64,
    pub same_type_fusion: f64,
    pub cross_type_fusion: f64,
}

impl Default for StrategyWeights {
    fn default() -> Self {
        StrategyWeights { single_extension: 1.0, same_type_fusion: 1.0, cross_type_fusion: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    /// Problems attempted per run.
    pub count: usize,
    pub weights: StrategyWeights,
    /// Taxonomy JSON; the built-in one when unset.
    pub taxonomy: Option<PathBuf>,
    /// Modification instructions, one per line; built-in when unset.
    pub instructions: Option<PathBuf>,
    /// Decoding for problem, generator and solver requests.
    pub request: RequestParams,
    /// Decoding for adjudication requests.
    pub adjudicator: RequestParams,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            count: 10,
            weights: StrategyWeights::default(),
            taxonomy: None,
            instructions: None,
            request: RequestParams::default(),
            adjudicator: RequestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompositionConfig {
    pub random: usize,
    pub adversarial: usize,
    pub direct: usize,
    /// Extra inputs drawn per pool to replace cases the oracle discards.
    pub spare: usize,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        let r = Composition::RELEASE;
        CompositionConfig { random: r.random, adversarial: r.adversarial, direct: r.direct, spare: 2 }
    }
}

impl CompositionConfig {
    pub fn target(&self) -> Composition {
        Composition { random: self.random, adversarial: self.adversarial, direct: self.direct }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        resolve(base_dir, &mut cfg.seeds);
        resolve(base_dir, &mut cfg.out_dir);
        for p in [
            cfg.provider.rules.as_mut(),
            cfg.provider.transcripts.as_mut(),
            cfg.generation.taxonomy.as_mut(),
            cfg.generation.instructions.as_mut(),
            cfg.sandbox.scratch_root.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base_dir, p);
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn check(&self) -> Result<()> {
        let w = &self.generation.weights;
        let weights = [w.single_extension, w.same_type_fusion, w.cross_type_fusion];
        if weights.iter().any(|&x| !x.is_finite() || x < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("strategy weights must be non-negative with a positive sum".into()));
        }
        match self.provider.kind {
            ProviderKind::Keyed if self.provider.rules.is_none() => {
                return Err(Error::Config("provider.kind = \"keyed\" needs provider.rules".into()))
            }
            ProviderKind::Scripted if self.provider.transcripts.is_none() => {
                return Err(Error::Config("provider.kind = \"scripted\" needs provider.transcripts".into()))
            }
            _ => {}
        }
        if self.oracle.bf_count == 0 || self.oracle.optimized_count == 0 {
            return Err(Error::Config("oracle.bf_count and oracle.optimized_count must be positive".into()));
        }
        if self.oracle.n_min == 0 {
            return Err(Error::Config("oracle.n_min must be positive".into()));
        }
        Ok(())
    }
}

/// A 64-bit seed for one labelled random choice.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let e = PipelineConfig::from_toml("seeds = \"s\"\nout_dir = \"o\"\nbogus = 1\n", Path::new("/x"));
        assert!(matches!(e, Err(Error::Config(_))));
        let e = PipelineConfig::from_toml("seeds = \"s\"\nout_dir = \"o\"\n[oracle]\nnmin = 3\n", Path::new("/x"));
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn defaults_and_relative_paths() {
        let c = PipelineConfig::from_toml("seeds = \"s.jsonl\"\nout_dir = \"/abs\"\n", Path::new("/base")).unwrap();
        assert_eq!(c.seeds, PathBuf::from("/base/s.jsonl"));
        assert_eq!(c.out_dir, PathBuf::from("/abs"));
        assert_eq!(c.composition.target(), Composition::RELEASE);
        assert_eq!(c.oracle.n_min, 3);
        assert_eq!(c.oracle.calibration.k, 3.0);
    }

    #[test]
    fn seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(7, "x"), derive_seed(7, "x"));
    }
}
