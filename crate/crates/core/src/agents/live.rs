//! Chat-completion backend speaking the standard wire protocol.
//!
//! A request is one JSON document {model, messages: [(role, content)],
//! temperature: 0}; the reply is parsed from the first choice's message
//! content, tolerating code fences around the JSON object. Transport
//! failures retry with exponential backoff; schema repair retries are
//! driven by the pipeline through `repair_note`.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::{prompts, AgentBackend, AgentError, AgentRequest, AgentRole, TaskKind};

/// Endpoint descriptor. The auth token is read from the environment
/// variable named in `auth_env` so it never lands in config files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiveBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Optional per-role overrides keyed by "semantic", "scoring",
    /// "arbiter", or "persona".
    #[serde(default)]
    pub role_models: BTreeMap<String, String>,
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    #[serde(default = "default_transport_retries")]
    pub transport_retries: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_auth_env() -> String {
    "KT_AGENT_TOKEN".to_string()
}

fn default_transport_retries() -> usize {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

pub struct LiveBackend {
    cfg: LiveBackendConfig,
    client: reqwest::blocking::Client,
}

impl LiveBackend {
    pub fn new(cfg: LiveBackendConfig) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| AgentError::Backend(format!("http client: {e}")))?;
        Ok(LiveBackend { cfg, client })
    }

    fn model_for(&self, role: &AgentRole) -> &str {
        let key = match role {
            AgentRole::Semantic => "semantic",
            AgentRole::Scoring => "scoring",
            AgentRole::Arbiter => "arbiter",
            AgentRole::Persona(_) => "persona",
        };
        self.cfg.role_models.get(key).map(String::as_str).unwrap_or(&self.cfg.model)
    }

    fn token(&self) -> Result<String, AgentError> {
        std::env::var(&self.cfg.auth_env).map_err(|_| {
            AgentError::Backend(format!("auth token env var {} not set", self.cfg.auth_env))
        })
    }
}

/// Build the chat-completion request body for one agent call.
pub fn build_request_body(model: &str, req: &AgentRequest) -> Value {
    let round = req
        .payload
        .get("round")
        .and_then(Value::as_u64)
        .map(|r| r as u8);
    let payload_json =
        serde_json::to_string_pretty(req.payload).unwrap_or_else(|_| req.payload.to_string());
    let mut user = prompts::render(&req.role, req.task, &payload_json, round);
    if let Some(repair) = &req.repair_note {
        user.push_str("\n\nYour previous reply was invalid: ");
        user.push_str(repair);
        user.push_str("\nReply with ONLY the corrected JSON object.");
    }
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": "You are a precise annotation agent. Always answer with one JSON object and no surrounding text."},
            {"role": "user", "content": user}
        ],
        "temperature": 0
    })
}

/// Pull the first choice's content out of a chat-completion reply and parse
/// it as JSON, stripping Markdown code fences when present.
pub fn extract_json_reply(body: &Value) -> Result<Value, String> {
    let content = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or("reply missing choices[0].message.content")?;
    let trimmed = content.trim();
    let stripped = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .map(|s| s.trim_end_matches("```").trim())
        .unwrap_or(trimmed);
    serde_json::from_str(stripped).map_err(|e| format!("reply content is not JSON: {e}"))
}

impl AgentBackend for LiveBackend {
    fn respond(&self, req: &AgentRequest) -> Result<Value, AgentError> {
        let body = build_request_body(self.model_for(&req.role), req);
        let token = self.token()?;

        let mut last_err = String::new();
        for attempt in 0..=self.cfg.transport_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1)),
                ));
            }
            let sent = self
                .client
                .post(&self.cfg.endpoint)
                .bearer_auth(&token)
                .json(&body)
                .send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: Value = resp
                            .json()
                            .map_err(|e| AgentError::Backend(format!("bad reply body: {e}")))?;
                        return extract_json_reply(&parsed).map_err(AgentError::Schema);
                    }
                    last_err = format!("http {status}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        break; // non-retryable
                    }
                }
                Err(e) => last_err = format!("transport: {e}"),
            }
        }
        Err(AgentError::Backend(last_err))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Persona;

    #[test]
    fn request_body_has_wire_shape() {
        let payload = json!({"kc_id": "k1", "name": "fractions lcd"});
        let req = AgentRequest {
            role: AgentRole::Semantic,
            task: TaskKind::Completion,
            payload: &payload,
            repair_note: None,
        };
        let body = build_request_body("test-model", &req);
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0);
        let messages = body["messages"].as_array().unwrap();
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0]["role"], "system");
        assert!(messages[1]["content"].as_str().unwrap().contains("fractions lcd"));
    }

    #[test]
    fn repair_note_is_appended() {
        let payload = json!({"round": 2});
        let req = AgentRequest {
            role: AgentRole::Persona(Persona::Structure),
            task: TaskKind::Vote,
            payload: &payload,
            repair_note: Some("scores.x = 9 outside 0..=5".into()),
        };
        let body = build_request_body("m", &req);
        let user = body["messages"][1]["content"].as_str().unwrap();
        assert!(user.contains("previous reply was invalid"));
        assert!(user.contains("outside 0..=5"));
    }

    #[test]
    fn reply_extraction_handles_code_fences() {
        let body = json!({"choices": [{"message": {"content": "```json\n{\"relation\": \"none\", \"direction\": \"undirected\"}\n```"}}]});
        let v = extract_json_reply(&body).unwrap();
        assert_eq!(v["relation"], "none");
    }

    #[test]
    fn missing_content_is_an_error() {
        let body = json!({"choices": []});
        assert!(extract_json_reply(&body).is_err());
    }
}
