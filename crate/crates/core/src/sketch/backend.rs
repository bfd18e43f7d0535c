//! Pluggable vision-LLM backends for the sketch pipeline.
//!
//! A backend receives an ordered list of parts (text, images) plus a
//! JSON-response directive and returns the model's reply text. Two
//! implementations ship with the crate:
//!
//! * [`HttpLlmBackend`] — a generic HTTP JSON client. The request body is
//!   `{"model": ..., "response": "json"|"text", "parts": [...]}` where image
//!   parts carry base64 data and their media type; the credential is read
//!   from a configured environment variable and sent as a bearer token. The
//!   response body must be JSON: either `{"content": "<reply>"}` or the
//!   reply document itself. Any endpoint honoring this contract can serve
//!   the pipeline.
//! * [`MockLlmBackend`] — a deterministic scripted backend for tests and
//!   offline runs, keyed by the SHA-256 of the first image part of each
//!   request (the original sketch is always the first image part, so
//!   renaming files never changes behavior). Each key holds a queue of
//!   replies consumed call by call; a reply of `{"__error": "msg"}` injects
//!   a backend failure.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde_json::Value;

use crate::artifacts::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend request timed out")]
    Timeout,
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("no backend configured")]
    NotConfigured,
    #[error("scripted backend error: {0}")]
    Scripted(String),
}

#[derive(Debug, Clone)]
pub enum RequestPart {
    Text(String),
    Image { media_type: String, bytes: Vec<u8> },
}

/// Ordered parts plus a JSON-response directive.
#[derive(Debug, Clone)]
pub struct BackendRequest {
    pub parts: Vec<RequestPart>,
    pub json_response: bool,
}

impl BackendRequest {
    pub fn first_image(&self) -> Option<&[u8]> {
        self.parts.iter().find_map(|p| match p {
            RequestPart::Image { bytes, .. } => Some(bytes.as_slice()),
            RequestPart::Text(_) => None,
        })
    }
}

/// A vision-capable model endpoint. Implementations must be shareable across
/// worker threads.
pub trait LlmBackend: Send + Sync {
    /// Sends the request and returns the model's reply text.
    fn generate(&self, request: &BackendRequest) -> Result<String, BackendError>;
}

/// Generic HTTP JSON chat+vision client.
pub struct HttpLlmBackend {
    endpoint: String,
    model: String,
    credential_env: Option<String>,
    timeout: Duration,
}

/// Default request time budget for HTTP backends.
pub const DEFAULT_BACKEND_TIMEOUT: Duration = Duration::from_secs(60);

impl HttpLlmBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        credential_env: Option<String>,
        timeout: Duration,
    ) -> Self {
        HttpLlmBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            credential_env,
            timeout,
        }
    }
}

impl LlmBackend for HttpLlmBackend {
    fn generate(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let parts: Vec<Value> = request
            .parts
            .iter()
            .map(|part| match part {
                RequestPart::Text(text) => serde_json::json!({"type": "text", "text": text}),
                RequestPart::Image { media_type, bytes } => serde_json::json!({
                    "type": "image",
                    "media_type": media_type,
                    "data": base64::engine::general_purpose::STANDARD.encode(bytes),
                }),
            })
            .collect();
        let body = serde_json::json!({
            "model": self.model,
            "response": if request.json_response { "json" } else { "text" },
            "parts": parts,
        });

        let mut builder = ureq::post(&self.endpoint);
        if let Some(var) = &self.credential_env {
            let key =
                std::env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?;
            builder = builder.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = builder
            .config()
            .timeout_global(Some(self.timeout))
            .build()
            .send_json(body)
            .map_err(map_ureq_error)?;
        let reply: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("response body is not JSON: {e}")))?;
        match reply.get("content").and_then(Value::as_str) {
            Some(content) => Ok(content.to_string()),
            None => Ok(reply.to_string()),
        }
    }
}

fn map_ureq_error(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::StatusCode(code) => {
            BackendError::Transport(format!("backend returned status {code}"))
        }
        other => BackendError::Transport(other.to_string()),
    }
}

/// Deterministic scripted backend keyed by image checksum.
pub struct MockLlmBackend {
    scripts: Mutex<HashMap<String, VecDeque<Value>>>,
}

impl MockLlmBackend {
    pub fn new(scripts: HashMap<String, Vec<Value>>) -> Self {
        MockLlmBackend {
            scripts: Mutex::new(
                scripts
                    .into_iter()
                    .map(|(k, v)| (k, VecDeque::from(v)))
                    .collect(),
            ),
        }
    }

    /// Loads a script file: a JSON object mapping image SHA-256 (hex) to the
    /// ordered list of replies for that image.
    pub fn from_script_file(path: &std::path::Path) -> Result<Self, BackendError> {
        let bytes = std::fs::read(path)
            .map_err(|e| BackendError::Scripted(format!("cannot read script {path:?}: {e}")))?;
        Self::from_script_bytes(&bytes)
    }

    pub fn from_script_bytes(bytes: &[u8]) -> Result<Self, BackendError> {
        let doc: Value = serde_json::from_slice(bytes)
            .map_err(|e| BackendError::Scripted(format!("script is not JSON: {e}")))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| BackendError::Scripted("script must be an object".into()))?;
        let mut scripts = HashMap::new();
        for (key, replies) in obj {
            let list = replies
                .as_array()
                .ok_or_else(|| BackendError::Scripted(format!("script for {key} must be an array")))?;
            scripts.insert(key.clone(), list.clone());
        }
        Ok(Self::new(scripts))
    }

    /// The script key for an image: its SHA-256 in hex.
    pub fn key_for_image(bytes: &[u8]) -> String {
        sha256_hex(bytes)
    }
}

impl LlmBackend for MockLlmBackend {
    fn generate(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let image = request
            .first_image()
            .ok_or_else(|| BackendError::Scripted("request carries no image part".into()))?;
        let key = Self::key_for_image(image);
        let mut scripts = self.scripts.lock().expect("mock script lock");
        let queue = scripts
            .get_mut(&key)
            .ok_or_else(|| BackendError::Scripted(format!("no script for image {key}")))?;
        let reply = queue
            .pop_front()
            .ok_or_else(|| BackendError::Scripted(format!("script for image {key} exhausted")))?;
        if let Some(message) = reply.get("__error").and_then(Value::as_str) {
            return Err(BackendError::Scripted(message.to_string()));
        }
        Ok(reply.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request_with_image(bytes: &[u8]) -> BackendRequest {
        BackendRequest {
            parts: vec![
                RequestPart::Text("prompt".into()),
                RequestPart::Image {
                    media_type: "image/png".into(),
                    bytes: bytes.to_vec(),
                },
            ],
            json_response: true,
        }
    }

    #[test]
    fn mock_replays_script_in_order() {
        let image = b"fake image bytes";
        let key = MockLlmBackend::key_for_image(image);
        let mock = MockLlmBackend::new(HashMap::from([(
            key,
            vec![
                serde_json::json!({"step": 1}),
                serde_json::json!({"step": 2}),
            ],
        )]));
        let req = request_with_image(image);
        assert_eq!(mock.generate(&req).unwrap(), r#"{"step":1}"#);
        assert_eq!(mock.generate(&req).unwrap(), r#"{"step":2}"#);
        assert!(matches!(
            mock.generate(&req),
            Err(BackendError::Scripted(_))
        ));
    }

    #[test]
    fn mock_injects_errors() {
        let image = b"img";
        let mock = MockLlmBackend::new(HashMap::from([(
            MockLlmBackend::key_for_image(image),
            vec![serde_json::json!({"__error": "boom"})],
        )]));
        let err = mock.generate(&request_with_image(image)).unwrap_err();
        assert!(matches!(err, BackendError::Scripted(m) if m == "boom"));
    }

    #[test]
    fn mock_is_keyed_by_content_not_name() {
        // Two different byte strings get separate queues; same bytes share one.
        let a = b"aaa";
        let b = b"bbb";
        let mock = MockLlmBackend::new(HashMap::from([
            (MockLlmBackend::key_for_image(a), vec![serde_json::json!(1)]),
            (MockLlmBackend::key_for_image(b), vec![serde_json::json!(2)]),
        ]));
        assert_eq!(mock.generate(&request_with_image(b)).unwrap(), "2");
        assert_eq!(mock.generate(&request_with_image(a)).unwrap(), "1");
    }

    #[test]
    fn script_file_parsing() {
        let doc = serde_json::json!({
            "abc123": [{"type": "SA"}, {"family": "Uniform"}]
        });
        let mock = MockLlmBackend::from_script_bytes(doc.to_string().as_bytes()).unwrap();
        let scripts = mock.scripts.lock().unwrap();
        assert_eq!(scripts["abc123"].len(), 2);
    }
}
