//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Completion, CompletionRequest, GatewayError, Provider};

/// Base URL, e.g. `https://api.openai.com/v1`.
pub const ENV_ENDPOINT: &str = "PROBSMITH_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "PROBSMITH_LLM_API_KEY";
/// Model used when a request carries no provider tag.
pub const ENV_MODEL: &str = "PROBSMITH_LLM_MODEL";

#[derive(Debug)]
pub struct HttpProvider {
    url: String,
    api_key: Option<String>,
    default_model: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u32>,
    completion_tokens: Option<u32>,
}

impl HttpProvider {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        default_model: &str,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let base = endpoint.trim_end_matches('/');
        let url =
            if base.ends_with("/chat/completions") { base.to_string() } else { format!("{base}/chat/completions") };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpProvider { url, api_key, default_model: default_model.to_string(), client })
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        let endpoint =
            std::env::var(ENV_ENDPOINT).map_err(|_| GatewayError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok();
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o-mini".into());
        Self::new(&endpoint, key, &model, Duration::from_secs(600))
    }
}

impl Provider for HttpProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let model = if req.provider_tag.is_empty() { &self.default_model } else { &req.provider_tag };
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut call = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let transport = |message: String| GatewayError::Transport { attempts: 1, message };
        let resp = call.send().map_err(|e| transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let message = resp.text().unwrap_or_default().chars().take(500).collect();
            return Err(GatewayError::Rejected { status: status.as_u16(), message });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| transport(format!("bad response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| transport("response has no message content".into()))?;
        let usage = parsed.usage;
        Ok(Completion {
            text,
            prompt_tokens: usage.as_ref().and_then(|u| u.prompt_tokens),
            completion_tokens: usage.as_ref().and_then(|u| u.completion_tokens),
        })
    }
}
