//! Chat-completions adapter for OpenAI-compatible endpoints.
//!
//! The relay sends the shared trajectory as an assistant-message prefix to
//! be continued. Backends that reject that shape (HTTP 400) are retried with
//! a user-message wrapper — `Continue this reasoning exactly where it
//! stops:` — and the fallback is flagged on the resulting chunk.
//!
//! The bearer token is read from the environment variable named in the
//! config, never from the config itself, and is redacted from all Debug
//! output. Transient failures (transport errors, 429, 5xx) are retried with
//! exponential backoff and jitter; a run that exhausts its attempts aborts
//! the shot rather than fabricating tokens.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::AgentError;

/// Connection settings for one remote model. The key itself stays in the
/// environment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token.
    pub key_env_var: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retry_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_max_in_flight() -> usize {
    4
}
fn default_retry_attempts() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    250
}
fn default_timeout_s() -> u64 {
    30
}

/// A completed remote generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteCompletion {
    pub text: String,
    /// True when the assistant-prefix continuation was rejected and the
    /// user-message wrapper was used instead.
    pub used_continuation_fallback: bool,
}

/// Counting gate capping concurrent requests across all worker threads.
struct InFlightGate {
    limit: usize,
    state: Mutex<usize>,
    freed: Condvar,
}

impl InFlightGate {
    fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), state: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut in_flight = self.state.lock().expect("gate poisoned");
        while *in_flight >= self.limit {
            in_flight = self.freed.wait(in_flight).expect("gate poisoned");
        }
        *in_flight += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a InFlightGate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.gate.state.lock().expect("gate poisoned");
        *in_flight -= 1;
        self.gate.freed.notify_one();
    }
}

pub struct RemoteClient {
    config: RemoteConfig,
    api_key: String,
    http: reqwest::blocking::Client,
    gate: InFlightGate,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl RemoteClient {
    /// Builds a client, resolving the API key from the configured
    /// environment variable.
    pub fn new(config: RemoteConfig) -> Result<Self, AgentError> {
        let api_key = std::env::var(&config.key_env_var)
            .map_err(|_| AgentError::MissingApiKey(config.key_env_var.clone()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| AgentError::RemoteBackend { attempts: 0, message: e.to_string() })?;
        let gate = InFlightGate::new(config.max_in_flight);
        Ok(Self { config, api_key, http, gate })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// One chat completion: private context as the system message, the task
    /// prompt as the user message and, when present, the shared trajectory
    /// as an assistant prefix to continue.
    pub fn complete(
        &self,
        system: &str,
        prompt: &str,
        assistant_prefix: Option<&str>,
        max_tokens: usize,
    ) -> Result<RemoteCompletion, AgentError> {
        let _slot = self.gate.acquire();
        let mut fallback = false;
        let mut last_error = String::from("no attempts made");
        let mut attempt = 0;
        while attempt < self.config.retry_attempts {
            let body = self.request_body(system, prompt, assistant_prefix, max_tokens, fallback);
            match self.send_once(&body) {
                Ok(text) => return Ok(RemoteCompletion { text, used_continuation_fallback: fallback }),
                Err(SendError::RejectedRequest(msg))
                    if assistant_prefix.is_some() && !fallback =>
                {
                    // Assistant-prefix continuation refused; re-shape the
                    // request without burning a retry attempt.
                    log::warn!("assistant continuation rejected, wrapping as user message: {msg}");
                    fallback = true;
                    last_error = msg;
                    continue;
                }
                Err(SendError::RejectedRequest(msg)) => {
                    return Err(AgentError::RemoteBackend { attempts: attempt + 1, message: msg });
                }
                Err(SendError::Malformed(msg)) => {
                    return Err(AgentError::RemoteMalformed(msg));
                }
                Err(SendError::Transient(msg)) => {
                    last_error = msg;
                    attempt += 1;
                    if attempt < self.config.retry_attempts {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(AgentError::RemoteBackend {
            attempts: self.config.retry_attempts,
            message: last_error,
        })
    }

    fn request_body(
        &self,
        system: &str,
        prompt: &str,
        assistant_prefix: Option<&str>,
        max_tokens: usize,
        fallback: bool,
    ) -> serde_json::Value {
        let mut messages = vec![json!({"role": "system", "content": system})];
        match (assistant_prefix, fallback) {
            (Some(prefix), false) => {
                messages.push(json!({"role": "user", "content": prompt}));
                messages.push(json!({"role": "assistant", "content": prefix}));
            }
            (Some(prefix), true) => {
                let wrapped = format!(
                    "{prompt}\n\nContinue this reasoning exactly where it stops:\n{prefix}"
                );
                messages.push(json!({"role": "user", "content": wrapped}));
            }
            (None, _) => {
                messages.push(json!({"role": "user", "content": prompt}));
            }
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "max_tokens": max_tokens,
            "temperature": self.config.temperature,
        })
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<String, SendError> {
        let response = self
            .http
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| SendError::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| SendError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(SendError::Transient(format!("HTTP {status}")));
        }
        if status.is_client_error() {
            return Err(SendError::RejectedRequest(format!("HTTP {status}: {}", snippet(&text))));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| SendError::Malformed(format!("{e}: {}", snippet(&text))))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| SendError::Malformed("empty choices array".into()))?;
        Ok(choice.message.content)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.config.retry_base_ms << (attempt - 1).min(6);
        // Jitter decorrelates retry storms; timing randomness never feeds
        // back into experiment results.
        let jitter = rand::random_range(0..=base / 2);
        Duration::from_millis(base + jitter)
    }
}

enum SendError {
    /// Worth retrying: transport failure, 429 or 5xx.
    Transient(String),
    /// 4xx other than 429 — the request shape is the problem.
    RejectedRequest(String),
    /// 2xx that does not parse as a chat completion.
    Malformed(String),
}

fn snippet(text: &str) -> String {
    let cut: String = text.chars().take(160).collect();
    if cut.len() < text.len() {
        format!("{cut}…")
    } else {
        cut
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debug_output_redacts_the_key() {
        std::env::set_var("ROUNDTABLE_TEST_KEY_A", "sk-super-secret-value");
        let client = RemoteClient::new(RemoteConfig {
            endpoint: "http://127.0.0.1:1/v1/chat/completions".into(),
            model: "test-model".into(),
            temperature: 0.7,
            key_env_var: "ROUNDTABLE_TEST_KEY_A".into(),
            max_in_flight: 2,
            retry_attempts: 1,
            retry_base_ms: 1,
            timeout_s: 1,
        })
        .unwrap();
        let shown = format!("{client:?}");
        assert!(!shown.contains("sk-super-secret-value"));
        assert!(shown.contains("<redacted>"));
    }

    #[test]
    fn missing_key_is_an_error() {
        let err = RemoteClient::new(RemoteConfig {
            endpoint: "http://127.0.0.1:1".into(),
            model: "m".into(),
            temperature: 0.7,
            key_env_var: "ROUNDTABLE_TEST_KEY_DOES_NOT_EXIST".into(),
            max_in_flight: 1,
            retry_attempts: 1,
            retry_base_ms: 1,
            timeout_s: 1,
        })
        .unwrap_err();
        assert!(matches!(err, AgentError::MissingApiKey(_)));
    }

    #[test]
    fn request_body_shapes() {
        std::env::set_var("ROUNDTABLE_TEST_KEY_B", "k");
        let client = RemoteClient::new(RemoteConfig {
            endpoint: "http://127.0.0.1:1".into(),
            model: "m".into(),
            temperature: 0.4,
            key_env_var: "ROUNDTABLE_TEST_KEY_B".into(),
            max_in_flight: 1,
            retry_attempts: 1,
            retry_base_ms: 1,
            timeout_s: 1,
        })
        .unwrap();

        let plain = client.request_body("sys", "prompt", None, 64, false);
        assert_eq!(plain["messages"].as_array().unwrap().len(), 2);
        assert_eq!(plain["max_tokens"], 64);
        assert_eq!(plain["model"], "m");

        let continued = client.request_body("sys", "prompt", Some("so far"), 64, false);
        let msgs = continued["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[2]["role"], "assistant");
        assert_eq!(msgs[2]["content"], "so far");

        let wrapped = client.request_body("sys", "prompt", Some("so far"), 64, true);
        let msgs = wrapped["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 2);
        let content = msgs[1]["content"].as_str().unwrap();
        assert!(content.contains("Continue this reasoning exactly where it stops:"));
        assert!(content.contains("so far"));
    }

    #[test]
    fn gate_caps_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        let gate = Arc::new(InFlightGate::new(2));
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let gate = Arc::clone(&gate);
            let current = Arc::clone(&current);
            let peak = Arc::clone(&peak);
            handles.push(std::thread::spawn(move || {
                let _guard = gate.acquire();
                let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                current.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
