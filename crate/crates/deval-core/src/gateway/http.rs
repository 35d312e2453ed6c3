//! Remote chat-completions client: bearer auth, token-bucket rate limiting,
//! and bounded exponential-backoff retries for transient failures.

use std::sync::Mutex;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use super::{validate_history, ChatMessage, GatewayError, Model, ModelConfig, Role, TokenBucket};

pub struct HttpModel {
    name: String,
    client: reqwest::blocking::Client,
    limiter: Mutex<(TokenBucket, Instant)>,
}

impl HttpModel {
    pub fn new(cfg: &ModelConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        if cfg.endpoint_url.is_empty() {
            return Err(GatewayError::BadConfig("endpoint_url is empty"));
        }
        if cfg.api_key.is_none() {
            return Err(GatewayError::MissingApiKey);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::Transport { attempts: 0, detail: e.to_string() })?;
        Ok(HttpModel {
            name: cfg.model_name.clone(),
            client,
            limiter: Mutex::new((TokenBucket::new(cfg.rate_limit_rps), Instant::now())),
        })
    }

    /// Block until the rate limiter grants a slot. The bucket is debited
    /// inside the lock; the sleep happens outside it so waiting callers
    /// queue up without serializing their actual requests.
    fn throttle(&self) {
        let wait = {
            let mut guard = self.limiter.lock().expect("limiter lock");
            let now = Instant::now();
            let elapsed = now.duration_since(guard.1);
            guard.1 = now;
            guard.0.advance_and_take(elapsed)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

fn role_str(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// Text-only messages use the plain string content shape; messages carrying
/// an image switch to content parts with a data-URL image part.
fn wire_message(msg: &ChatMessage) -> Value {
    match &msg.image {
        None => json!({ "role": role_str(msg.role), "content": msg.text }),
        Some(bytes) => {
            let url = format!("data:image/x-portable-pixmap;base64,{}", BASE64.encode(bytes));
            let mut parts = Vec::new();
            if !msg.text.is_empty() {
                parts.push(json!({ "type": "text", "text": msg.text }));
            }
            parts.push(json!({ "type": "image_url", "image_url": { "url": url } }));
            json!({ "role": role_str(msg.role), "content": parts })
        }
    }
}

fn retryable_status(status: u16) -> bool {
    status >= 500 || status == 429 || status == 408
}

fn extract_reply(value: &Value) -> Result<String, GatewayError> {
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| {
            GatewayError::Protocol("response lacks choices[0].message.content".to_string())
        })
}

impl Model for HttpModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete_chat(
        &self,
        history: &[ChatMessage],
        cfg: &ModelConfig,
    ) -> Result<String, GatewayError> {
        validate_history(history)?;
        let key = cfg.api_key.as_deref().ok_or(GatewayError::MissingApiKey)?;
        let url = format!("{}/chat/completions", cfg.endpoint_url.trim_end_matches('/'));
        let body = json!({
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
            "messages": history.iter().map(wire_message).collect::<Vec<_>>(),
        });
        let attempts = cfg.retry.max_attempts.max(1);
        let mut last_detail = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(cfg.retry.backoff_base * 2u32.pow(attempt - 2));
            }
            self.throttle();
            match self.client.post(&url).bearer_auth(key).json(&body).send() {
                Err(e) => last_detail = e.to_string(),
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        let value: Value =
                            resp.json().map_err(|e| GatewayError::Protocol(e.to_string()))?;
                        return extract_reply(&value);
                    }
                    let excerpt: String =
                        resp.text().unwrap_or_default().chars().take(200).collect();
                    if !retryable_status(status) {
                        return Err(GatewayError::Provider { status, body: excerpt });
                    }
                    last_detail = format!("status {status}: {excerpt}");
                }
            }
        }
        Err(GatewayError::Transport { attempts, detail: last_detail })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_messages_use_the_plain_content_shape() {
        let wire = wire_message(&ChatMessage::user("count them"));
        assert_eq!(wire["role"], "user");
        assert_eq!(wire["content"], "count them");
    }

    #[test]
    fn image_messages_become_data_url_content_parts() {
        let wire = wire_message(&ChatMessage::user_with_image("", vec![0x50, 0x36]));
        let parts = wire["content"].as_array().unwrap();
        assert_eq!(parts.len(), 1);
        let url = parts[0]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/x-portable-pixmap;base64,"));
        assert!(url.ends_with(&BASE64.encode([0x50u8, 0x36])));

        let wire = wire_message(&ChatMessage::user_with_image("caption", vec![1, 2, 3]));
        let parts = wire["content"].as_array().unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0]["text"], "caption");
    }

    #[test]
    fn retryability_follows_status_semantics() {
        for status in [500, 502, 503, 429, 408] {
            assert!(retryable_status(status), "{status} should retry");
        }
        for status in [400, 401, 403, 404, 422] {
            assert!(!retryable_status(status), "{status} must not retry");
        }
    }

    #[test]
    fn reply_extraction_requires_the_standard_shape() {
        let good = json!({ "choices": [ { "message": { "content": "Final answer: 5" } } ] });
        assert_eq!(extract_reply(&good).unwrap(), "Final answer: 5");
        let bad = json!({ "choices": [] });
        assert!(extract_reply(&bad).is_err());
    }

    #[test]
    fn construction_requires_endpoint_and_key() {
        let mut cfg = ModelConfig { endpoint_url: "http://localhost:9".to_string(), ..Default::default() };
        assert!(matches!(HttpModel::new(&cfg), Err(GatewayError::MissingApiKey)));
        cfg.api_key = Some("k".to_string());
        assert!(HttpModel::new(&cfg).is_ok());
        cfg.endpoint_url.clear();
        assert!(matches!(HttpModel::new(&cfg), Err(GatewayError::BadConfig(_))));
    }
}
