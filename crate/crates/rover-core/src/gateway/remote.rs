//! Chat-completions HTTP backend with retries and exponential backoff.

use std::time::Duration;

use serde_json::{json, Value};

use super::{b64, Backend, GatewayError, ModelRequest, ModelResponse, Segment};
use crate::rng::derive_rng;

/// Connection settings for an OpenAI-compatible chat endpoint. The API key
/// is named by environment variable so credentials stay out of configs and
/// transcripts.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL up to the API root, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_retries: u32,
    /// Exponential backoff base; retry n sleeps roughly `base * 2^n`.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: String::new(),
            model: String::new(),
            api_key_env: "ROVER_API_KEY".into(),
            max_retries: 3,
            backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    id: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Backend(format!("client construction: {e}")))?;
        Ok(RemoteBackend {
            id: format!("remote({})", config.model),
            config,
            client,
        })
    }

    fn api_key(&self) -> Result<String, GatewayError> {
        std::env::var(&self.config.api_key_env).map_err(|_| {
            GatewayError::Backend(format!(
                "environment variable {} is not set",
                self.config.api_key_env
            ))
        })
    }

    fn post_once(&self, payload: &Value) -> Result<String, GatewayError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let resp = self
            .client
            .post(&url)
            .bearer_auth(self.api_key()?)
            .json(payload)
            .send()
            .map_err(|e| GatewayError::Backend(format!("transport: {e}")))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| GatewayError::Backend(format!("reading body: {e}")))?;
        if !status.is_success() {
            return Err(GatewayError::Backend(format!(
                "status {status}: {}",
                body.chars().take(500).collect::<String>()
            )));
        }
        parse_chat_response(&body)
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let payload = build_payload(req, &self.config.model)?;
        let mut rng = derive_rng(0, &format!("backoff/{}", req.fingerprint_hex()));
        let mut last_err = None;
        for attempt in 0..self.config.max_retries.max(1) {
            match self.post_once(&payload) {
                Ok(text) => return Ok(ModelResponse::for_request(req, &self.id, text)),
                Err(e) => last_err = Some(e),
            }
            if attempt + 1 < self.config.max_retries.max(1) {
                let jitter = rand::Rng::gen_range(&mut rng, 0.5..1.5);
                let sleep = self.config.backoff.mul_f64(f64::from(1 << attempt) * jitter);
                std::thread::sleep(sleep);
            }
        }
        Err(last_err.unwrap_or_else(|| GatewayError::Backend("no attempts made".into())))
    }
}

/// Render a request as a chat payload: one system message plus one user
/// message whose content interleaves text parts and inline-encoded images
/// in request order.
pub fn build_payload(req: &ModelRequest, model: &str) -> Result<Value, GatewayError> {
    let mut parts = Vec::new();
    for seg in &req.context.segments {
        match seg {
            Segment::Text { text } => parts.push(json!({"type": "text", "text": text})),
            Segment::Frame { frame } => {
                let png = frame.payload.as_ref().ok_or_else(|| {
                    GatewayError::Input(format!("frame {} has no image payload", frame.id))
                })?;
                parts.push(json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:image/png;base64,{}", b64::encode(png))}
                }));
            }
        }
    }
    Ok(json!({
        "model": model,
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
        "messages": [
            {"role": "system", "content": req.system_prompt},
            {"role": "user", "content": parts},
        ],
    }))
}

fn parse_chat_response(body: &str) -> Result<String, GatewayError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Backend(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| {
            GatewayError::Backend(format!(
                "response lacks choices[0].message.content: {}",
                body.chars().take(300).collect::<String>()
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{FrameRef, TokenSeq};

    fn request_with_payload_frames(n: usize) -> ModelRequest {
        let mut ctx = TokenSeq::new();
        ctx.push_text("Initial robot scene: ");
        for t in 0..n {
            ctx.push_frame(FrameRef::with_payload(t, vec![t as u8; 4]));
            ctx.push_text(format!("\nFrame {t} follows\n"));
        }
        let mut req = ModelRequest::new("sys", ctx);
        req.temperature = 0.25;
        req
    }

    #[test]
    fn payload_interleaves_parts_in_order() {
        let req = request_with_payload_frames(3);
        let payload = build_payload(&req, "test-model").unwrap();
        assert_eq!(payload["model"], "test-model");
        assert_eq!(payload["temperature"], 0.25);
        let parts = payload["messages"][1]["content"].as_array().unwrap();
        let images: Vec<&Value> = parts
            .iter()
            .filter(|p| p["type"] == "image_url")
            .collect();
        assert_eq!(images.len(), 3);
        // Image parts appear in frame order: the encoded bytes differ per frame.
        let urls: Vec<&str> = images
            .iter()
            .map(|p| p["image_url"]["url"].as_str().unwrap())
            .collect();
        assert!(urls[0].starts_with("data:image/png;base64,"));
        assert_ne!(urls[0], urls[1]);
        // First part is the leading text, so ordering is preserved.
        assert_eq!(parts[0]["type"], "text");
        assert_eq!(parts[1]["type"], "image_url");
    }

    #[test]
    fn payload_requires_image_bytes() {
        let mut ctx = TokenSeq::new();
        ctx.push_frame(FrameRef::new(0));
        let req = ModelRequest::new("sys", ctx);
        assert!(matches!(
            build_payload(&req, "m"),
            Err(GatewayError::Input(_))
        ));
    }

    #[test]
    fn chat_response_field_extraction() {
        let ok = r#"{"choices":[{"message":{"content":"hello"}}]}"#;
        assert_eq!(parse_chat_response(ok).unwrap(), "hello");
        assert!(parse_chat_response(r#"{"choices":[]}"#).is_err());
        assert!(parse_chat_response("not json").is_err());
    }

    #[test]
    fn unreachable_endpoint_errors_after_retries() {
        std::env::set_var("ROVER_TEST_KEY", "k");
        let backend = RemoteBackend::new(RemoteConfig {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key_env: "ROVER_TEST_KEY".into(),
            max_retries: 2,
            backoff: Duration::from_millis(1),
            timeout: Duration::from_millis(200),
        })
        .unwrap();
        let err = backend.generate(&request_with_payload_frames(1));
        assert!(matches!(err, Err(GatewayError::Backend(_))));
    }
}
