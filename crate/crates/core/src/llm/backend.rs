use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::template::TemplateId;
use crate::error::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One call to a backend. `template` names the stage the conversation
/// belongs to; network backends ignore it.
#[derive(Debug, Clone)]
pub struct Completion<'a> {
    pub template: Option<TemplateId>,
    pub messages: &'a [Message],
    pub temperature: f64,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, req: &Completion<'_>) -> Result<String, BackendError>;
}

/// Generic chat-completion endpoint (`POST {base}/chat/completions`).
#[derive(Debug, Clone)]
pub struct NetworkBackend {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
}

impl NetworkBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            timeout: Duration::from_secs(120),
        }
    }

    fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

impl Backend for NetworkBackend {
    fn id(&self) -> String {
        format!("network:{}", self.model)
    }

    fn complete(&self, req: &Completion<'_>) -> Result<String, BackendError> {
        if self.api_key.trim().is_empty() {
            return Err(BackendError::Credential("empty API key".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let body = json!({
            "model": self.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        let mut resp = agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Credential(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(BackendError::Transport(format!("HTTP {status}"))),
            _ => return Err(BackendError::Rejected(format!("HTTP {status}: {}", truncate(&text)))),
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Rejected(format!("response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Rejected(format!("no message content in {}", truncate(&text))))
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}
