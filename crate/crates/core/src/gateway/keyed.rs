//! Canned responses selected by prompt content.
//!
//! ```toml
//! [[rule]]
//! match = ["Random Input Generator", "maximum subarray"]
//! response_files = ["max_subarray/random_gen.txt"]
//!
//! [[rule]]
//! match = ["VERDICT"]
//! responses = ["VERDICT: UNDETERMINED"]
//! repeat = true
//! ```
//!
//! The first rule whose substrings all occur in the prompt answers it. Each
//! rule hands out its responses in order; `repeat` keeps serving the last one.

use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{Completion, CompletionRequest, GatewayError, Provider};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    rule: Vec<RuleSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    #[serde(rename = "match")]
    needles: Vec<String>,
    #[serde(default)]
    responses: Vec<String>,
    #[serde(default)]
    response_files: Vec<String>,
    #[serde(default)]
    repeat: bool,
}

#[derive(Debug)]
struct Rule {
    needles: Vec<String>,
    responses: Vec<String>,
    repeat: bool,
}

#[derive(Debug)]
pub struct KeyedProvider {
    rules: Vec<Rule>,
    cursors: Mutex<Vec<usize>>,
}

impl KeyedProvider {
    /// Parses rules; `response_files` resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, GatewayError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        let mut rules = Vec::new();
        for (i, spec) in file.rule.into_iter().enumerate() {
            if spec.needles.is_empty() {
                return Err(GatewayError::Config(format!("rule {i}: empty match list")));
            }
            let mut responses = spec.responses;
            for f in &spec.response_files {
                let path = base_dir.join(f);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| GatewayError::Config(format!("rule {i}: {}: {e}", path.display())))?;
                responses.push(text);
            }
            if responses.is_empty() {
                return Err(GatewayError::Config(format!("rule {i}: no responses")));
            }
            rules.push(Rule { needles: spec.needles, responses, repeat: spec.repeat });
        }
        let n = rules.len();
        Ok(KeyedProvider { rules, cursors: Mutex::new(vec![0; n]) })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn preview(prompt: &str) -> String {
    let flat: String = prompt.split_whitespace().collect::<Vec<_>>().join(" ");
    flat.chars().take(120).collect()
}

impl Provider for KeyedProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let (i, rule) = self
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.needles.iter().all(|n| req.prompt.contains(n.as_str())))
            .ok_or_else(|| GatewayError::NoResponse(preview(&req.prompt)))?;
        let mut cursors = self.cursors.lock().unwrap();
        let at = cursors[i];
        let text = match rule.responses.get(at) {
            Some(t) => {
                cursors[i] += 1;
                t
            }
            None if rule.repeat => rule.responses.last().expect("rules have responses"),
            None => return Err(GatewayError::NoResponse(format!("rule {i} used up: {}", preview(&req.prompt)))),
        };
        Ok(Completion::text(text.clone()))
    }
}
