use std::collections::BTreeMap;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{excerpt, Backend, BackendError, BackendRequest, Purpose};

pub const API_KEY_ENV: &str = "CODIAL_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Chat-completions endpoint, e.g. `https://host/v1/chat/completions`.
    pub url: String,
    pub model: String,
    pub temperature_overrides: BTreeMap<Purpose, f32>,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            url: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            temperature_overrides: BTreeMap::new(),
            timeout_ms: 30_000,
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

/// OpenAI-compatible chat-completions client with retry on transient errors.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    attempts: Mutex<Vec<Result<u16, String>>>,
}

impl HttpBackend {
    /// Builds the client. Must not be called from inside an async runtime.
    pub fn new(config: HttpConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Transport { message: e.to_string() })?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
            attempts: Mutex::new(Vec::new()),
        })
    }

    /// Reads the key from `CODIAL_API_KEY`.
    pub fn from_env(config: HttpConfig) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(config, key)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// HTTP status (or transport error) of every attempt made so far.
    pub fn attempt_log(&self) -> Vec<Result<u16, String>> {
        self.attempts.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn body(&self, request: &BackendRequest) -> Value {
        let temperature = self
            .config
            .temperature_overrides
            .get(&request.purpose)
            .copied()
            .unwrap_or(request.temperature);
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let mut call = self.client.post(&self.config.url).json(body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let record = |r: Result<u16, String>| self.attempts.lock().unwrap_or_else(|p| p.into_inner()).push(r);
        let response = match call.send() {
            Ok(r) => r,
            Err(e) => {
                record(Err(e.to_string()));
                return Err(if e.is_timeout() {
                    BackendError::Timeout {
                        timeout_ms: self.config.timeout_ms,
                    }
                } else {
                    BackendError::Transport { message: e.to_string() }
                });
            }
        };
        let status = response.status().as_u16();
        record(Ok(status));
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    timeout_ms: self.config.timeout_ms,
                }
            } else {
                BackendError::Transport { message: e.to_string() }
            }
        })?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status {
                status,
                body: excerpt(&text, 500),
            });
        }
        parse_reply(&text)
    }
}

fn parse_reply(text: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::Parse { message: e.to_string() })?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Parse {
            message: format!("no choices[0].message.content in {}", excerpt(text, 200)),
        })
}

impl Backend for HttpBackend {
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let body = self.body(request);
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for n in 0..attempts {
            if n > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (n - 1).min(16));
                thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(reply) => return Ok(reply),
                Err(e) if e.is_transient() => {
                    tracing::warn!(purpose = %request.purpose, attempt = n + 1, error = %e, "backend call failed");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves the given (status, body) responses in order, one per connection.
    fn serve(responses: Vec<(u16, String)>, delay: Duration) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                thread::sleep(delay);
                let mut stream = reader.into_inner();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
            bodies
        });
        (url, handle)
    }

    fn ok_body(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    fn config(url: String) -> HttpConfig {
        HttpConfig {
            url,
            backoff_ms: 1,
            timeout_ms: 2_000,
            ..HttpConfig::default()
        }
    }

    #[test]
    fn retries_after_server_error() {
        let (url, server) = serve(vec![(500, "oops".into()), (200, ok_body("Downtown"))], Duration::ZERO);
        let backend = HttpBackend::new(config(url), Some("k".into())).unwrap();
        let req = BackendRequest::new(Purpose::ValueFromInstruction, "sys", "user");
        assert_eq!(backend.complete(&req).unwrap(), "Downtown");
        assert_eq!(backend.attempt_log(), vec![Ok(500), Ok(200)]);
        let bodies = server.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(sent["messages"][1]["content"], "user");
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (url, server) = serve(vec![(503, "a".into()), (503, "b".into()), (503, "c".into())], Duration::ZERO);
        let backend = HttpBackend::new(config(url), None).unwrap();
        let err = backend
            .complete(&BackendRequest::new(Purpose::Intent, "", ""))
            .unwrap_err();
        assert_eq!(err, BackendError::Status { status: 503, body: "c".into() });
        assert_eq!(backend.attempt_log().len(), 3);
        server.join().unwrap();
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, server) = serve(vec![(401, "denied".into())], Duration::ZERO);
        let backend = HttpBackend::new(config(url), None).unwrap();
        let err = backend.complete(&BackendRequest::new(Purpose::Intent, "", "")).unwrap_err();
        assert!(matches!(err, BackendError::Status { status: 401, .. }));
        assert_eq!(backend.attempt_log().len(), 1);
        server.join().unwrap();
    }

    #[test]
    fn timeout_budget() {
        let (url, _server) = serve(vec![(200, ok_body("late"))], Duration::from_millis(800));
        let mut cfg = config(url);
        cfg.timeout_ms = 100;
        cfg.max_attempts = 1;
        let backend = HttpBackend::new(cfg, None).unwrap();
        let err = backend.complete(&BackendRequest::new(Purpose::Intent, "", "")).unwrap_err();
        assert!(matches!(err, BackendError::Timeout { timeout_ms: 100 }), "{err:?}");
    }

    #[test]
    fn temperature_override_and_parse_errors() {
        let mut cfg = HttpConfig::default();
        cfg.temperature_overrides.insert(Purpose::Codegen, 0.2);
        let b = HttpBackend::new(cfg, None).unwrap();
        let body = b.body(&BackendRequest::new(Purpose::Codegen, "", ""));
        assert!((body["temperature"].as_f64().unwrap() - 0.2).abs() < 1e-6);
        assert!(matches!(parse_reply("{}"), Err(BackendError::Parse { .. })));
        assert_eq!(parse_reply(&ok_body("x")).unwrap(), "x");
    }

    #[test]
    fn config_from_toml_like_json() {
        let c: HttpConfig = serde_json::from_str(
            r#"{"url":"http://x","model":"m","temperature_overrides":{"codegen":0.5},"timeout_ms":10}"#,
        )
        .unwrap();
        assert_eq!(c.temperature_overrides[&Purpose::Codegen], 0.5);
        assert_eq!(c.max_attempts, 3);
    }
}
