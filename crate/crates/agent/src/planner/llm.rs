use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::prompt::{build_prompt, Prompt, PromptPart};
use super::{PlanRequest, Planner, PlannerError};

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
    pub api_base: String,
    pub api_key: Option<String>,
    pub model: String,
    /// Send images inline; otherwise they are described in text.
    pub multimodal: bool,
    pub temperature: f64,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl LlmConfig {
    pub fn new(api_base: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            api_base: api_base.into(),
            api_key: None,
            model: model.into(),
            multimodal: true,
            temperature: 0.0,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `LLM_API_BASE`, `LLM_API_KEY`, `LLM_MODEL` and
    /// `LLM_MULTIMODAL` (`0` or `false` for text-only models).
    pub fn from_env() -> Result<Self, PlannerError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let base = var("LLM_API_BASE").ok_or_else(|| PlannerError::Config("LLM_API_BASE is not set".into()))?;
        let model = var("LLM_MODEL").ok_or_else(|| PlannerError::Config("LLM_MODEL is not set".into()))?;
        let multimodal = var("LLM_MULTIMODAL").map_or(true, |v| !matches!(v.to_ascii_lowercase().as_str(), "0" | "false" | "no"));
        Ok(Self { api_key: var("LLM_API_KEY"), multimodal, ..Self::new(base, model) })
    }
}

/// Planner backed by a chat-completions endpoint.
pub struct LlmPlanner {
    config: LlmConfig,
    agent: ureq::Agent,
    warnings: Vec<String>,
}

impl LlmPlanner {
    pub fn new(config: LlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent, warnings: Vec::new() }
    }

    pub fn request_body(&self, prompt: &Prompt) -> Value {
        let user = if self.config.multimodal {
            let parts: Vec<Value> = prompt
                .parts
                .iter()
                .map(|p| match p {
                    PromptPart::Text(t) => json!({"type": "text", "text": t}),
                    PromptPart::Image { png, .. } => {
                        let data = base64::engine::general_purpose::STANDARD.encode(png);
                        json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}})
                    }
                })
                .collect();
            Value::Array(parts)
        } else {
            let text: Vec<String> = prompt
                .parts
                .iter()
                .map(|p| match p {
                    PromptPart::Text(t) => t.clone(),
                    PromptPart::Image { name, .. } => format!("[image {name}]"),
                })
                .collect();
            Value::String(text.join("\n\n"))
        };
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": user},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, String)> {
        let url = format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let retry = status == 429 || status >= 500;
            return Err((retry, format!("HTTP {status}: {}", text.chars().take(300).collect::<String>())));
        }
        let v: Value = resp.body_mut().read_json().map_err(|e| (false, format!("bad response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| (false, "response has no choices[0].message.content".into()))
    }
}

impl Planner for LlmPlanner {
    fn respond(&mut self, req: &PlanRequest) -> Result<String, PlannerError> {
        let body = self.request_body(&build_prompt(req, self.config.multimodal));
        let mut delay = self.config.initial_backoff;
        let mut last = String::new();
        for n in 1..=self.config.max_attempts.max(1) {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    log::warn!("planner request {n} failed: {msg}");
                    self.warnings.push(format!("attempt {n}: {msg}"));
                    last = msg;
                    if !retry {
                        break;
                    }
                    if n < self.config.max_attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(PlannerError::Transport(last))
    }

    fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}
