use std::sync::Mutex;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde_json::{json, Value};
use thiserror::Error;

use super::PromptSpec;

pub const ENDPOINT_ENV: &str = "WRANGLE_LLM_ENDPOINT";
pub const KEY_ENV: &str = "WRANGLE_LLM_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("{0} is not set")]
    MissingConfig(&'static str),
    #[error("completion service rejected the credentials (HTTP {0})")]
    AuthError(u16),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("transport error: {0}")]
    TransportError(String),
}

/// Client for an OpenAI-style completions endpoint.
pub struct CompletionClient {
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    max_attempts: u32,
    base_delay: Duration,
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl CompletionClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::TransportError(e.to_string()))?;
        Ok(CompletionClient {
            endpoint: endpoint.into(),
            api_key,
            http,
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            min_interval: Duration::ZERO,
            last_request: Mutex::new(None),
        })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| LlmError::MissingConfig(ENDPOINT_ENV))?;
        Self::new(endpoint, std::env::var(KEY_ENV).ok())
    }

    pub fn with_retry(mut self, max_attempts: u32, base_delay: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.base_delay = base_delay;
        self
    }

    /// Spacing enforced between any two requests from this client.
    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    fn pace(&self) {
        let mut last = self.last_request.lock().expect("pace lock");
        if let Some(t) = *last {
            let wait = self.min_interval.saturating_sub(t.elapsed());
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        *last = Some(Instant::now());
    }

    pub fn complete(&self, request_id: &str, prompt: &str, spec: &PromptSpec) -> Result<String, LlmError> {
        let body = json!({
            "model": spec.model,
            "prompt": prompt,
            "max_tokens": spec.max_generation_tokens,
            "temperature": spec.temperature,
        });
        let mut last_err = LlmError::TransportError("no attempt made".into());
        for attempt in 1..=self.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.base_delay * 2u32.pow(attempt - 2));
            }
            self.pace();
            debug!("completion request {request_id} attempt {attempt}");
            let mut req = self.http.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    warn!("completion request {request_id}: {e}");
                    last_err = LlmError::TransportError(e.to_string());
                    continue;
                }
            };
            let status = resp.status().as_u16();
            match status {
                200..=299 => {
                    let v: Value = resp.json().map_err(|e| LlmError::TransportError(e.to_string()))?;
                    let text = extract_text(&v).ok_or_else(|| LlmError::TransportError(format!("no completion text in {v}")))?;
                    debug!("completion response {request_id}: {} chars", text.len());
                    return Ok(text);
                }
                401 | 403 => return Err(LlmError::AuthError(status)),
                429 => last_err = LlmError::RateLimited(attempt),
                500..=599 => last_err = LlmError::TransportError(format!("HTTP {status}")),
                _ => return Err(LlmError::TransportError(format!("HTTP {status}"))),
            }
            warn!("completion request {request_id}: HTTP {status}, retrying");
        }
        Err(last_err)
    }
}

fn extract_text(v: &Value) -> Option<String> {
    let choice = v.get("choices")?.get(0)?;
    choice.get("text").or_else(|| choice.get("message").and_then(|m| m.get("content"))).and_then(Value::as_str).map(str::to_owned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves the given status/body pairs in order, one per connection.
    fn serve(responses: Vec<(u16, &'static str)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut s, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(s.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\ncontent-length: {}\r\ncontent-type: application/json\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        format!("http://{addr}/v1/completions")
    }

    fn client(url: String) -> CompletionClient {
        CompletionClient::new(url, Some("k".into())).unwrap().with_retry(3, Duration::from_millis(10))
    }

    #[test]
    fn retries_then_succeeds() {
        let url = serve(vec![(503, "{}"), (429, "{}"), (200, r#"{"choices":[{"text":"df = df.dropna()"}]}"#)]);
        assert_eq!(client(url).complete("t", "p", &PromptSpec::default()).unwrap(), "df = df.dropna()");
    }

    #[test]
    fn chat_shape_accepted() {
        let url = serve(vec![(200, r#"{"choices":[{"message":{"content":"x = 1"}}]}"#)]);
        assert_eq!(client(url).complete("t", "p", &PromptSpec::default()).unwrap(), "x = 1");
    }

    #[test]
    fn auth_error_is_not_retried() {
        let url = serve(vec![(401, "{}")]);
        assert!(matches!(client(url).complete("t", "p", &PromptSpec::default()), Err(LlmError::AuthError(401))));
    }

    #[test]
    fn rate_limit_exhausts() {
        let url = serve(vec![(429, "{}"), (429, "{}"), (429, "{}")]);
        assert!(matches!(client(url).complete("t", "p", &PromptSpec::default()), Err(LlmError::RateLimited(3))));
    }
}
