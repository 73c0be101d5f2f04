use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::VerdictValue;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: &str) -> Self {
        ChatMessage { role: role.to_string(), content: content.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub n: u32,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClientError {
    /// Network failure, timeout or server-side error; worth retrying.
    Transport(String),
    /// The endpoint refused the request; retrying will not help.
    Rejected(String),
}

/// Returns the `n` sampled completions for a request, ordered by sample index.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, ClientError>;
}

/// Deterministic offline client. Responses are taken from the keyed script
/// whose key appears in the last user message, else the shared script, else
/// derived from a hash of the prompt.
#[derive(Debug, Default)]
pub struct MockClient {
    script: Vec<String>,
    keyed: BTreeMap<String, Vec<String>>,
    fail: bool,
    calls: AtomicUsize,
}

impl MockClient {
    pub fn hashed() -> Self {
        Self::default()
    }

    pub fn scripted(script: Vec<String>) -> Self {
        MockClient { script, ..Self::default() }
    }

    pub fn keyed(keyed: BTreeMap<String, Vec<String>>, fallback: Vec<String>) -> Self {
        MockClient { script: fallback, keyed, ..Self::default() }
    }

    /// A client whose every call fails with a transport error.
    pub fn unreachable() -> Self {
        MockClient { fail: true, ..Self::default() }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn hashed_response(prompt: &str, i: u32) -> String {
        let mut h = Sha256::new();
        h.update(prompt.as_bytes());
        h.update(i.to_le_bytes());
        let d = h.finalize();
        let v = VerdictValue::ALL[d[0] as usize % 3];
        format!("Offline response {} for sample {i}.\nVERDICT: {}", hex::encode(&d[..4]), v.marker())
    }
}

impl ChatClient for MockClient {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail {
            return Err(ClientError::Transport("mock endpoint is unreachable".into()));
        }
        let prompt = request.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or_default();
        let script = self.keyed.iter().find(|(k, _)| prompt.contains(k.as_str())).map(|(_, s)| s).unwrap_or(&self.script);
        Ok((0..request.n)
            .map(|i| match script.is_empty() {
                true => Self::hashed_response(prompt, i),
                false => script[i as usize % script.len()].clone(),
            })
            .collect())
    }
}

/// Client for the common chat-completions wire shape.
pub struct HttpClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpClient { endpoint: endpoint.to_string(), model: model.to_string(), api_key, agent }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        json!({
            "model": self.model,
            "messages": request.messages,
            "n": request.n,
            "temperature": request.temperature,
        })
    }
}

/// Extracts `choices[].message.content` ordered by `choices[].index`.
pub(crate) fn parse_choices(body: &Value) -> Result<Vec<String>, ClientError> {
    let choices = body.get("choices").and_then(Value::as_array).ok_or_else(|| ClientError::Transport("response lacks `choices`".into()))?;
    let mut out = Vec::with_capacity(choices.len());
    for (pos, c) in choices.iter().enumerate() {
        let index = c.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
        let content = c
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ClientError::Transport(format!("choice {pos} lacks message content")))?;
        out.push((index, content.to_string()));
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, c)| c).collect())
}

impl ChatClient for HttpClient {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, ClientError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(self.body(request)).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body: Value = resp.body_mut().read_json().map_err(|e| ClientError::Transport(format!("status {status}: {e}")))?;
        match status {
            200..=299 => parse_choices(&body),
            408 | 429 | 500..=599 => Err(ClientError::Transport(format!("status {status}: {body}"))),
            _ => Err(ClientError::Rejected(format!("status {status}: {body}"))),
        }
    }
}
