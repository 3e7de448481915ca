//! OpenAI-compatible chat-completions client.

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tracing::warn;

use super::{Backend, CallSite, ChatRequest, ChatResponse, GatewayError, TransportStatus, Usage};

pub const DEFAULT_CONCURRENCY: usize = 4;

/// Counting semaphore bounding in-flight requests across every live
/// backend that shares it.
#[derive(Debug)]
pub struct RequestLimiter {
    available: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a RequestLimiter);

impl RequestLimiter {
    pub fn new(limit: usize) -> Arc<Self> {
        Arc::new(RequestLimiter { available: Mutex::new(limit.max(1)), freed: Condvar::new() })
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, base_delay: Duration::from_millis(500) }
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl LiveConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        LiveConfig { base_url: base_url.into(), timeout: Duration::from_secs(120), retry: RetryPolicy::default() }
    }
}

pub struct LiveBackend {
    endpoint: String,
    api_key: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
    limiter: Arc<RequestLimiter>,
}

impl fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveBackend").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Failure {
    Retryable(TransportStatus),
    Fatal(GatewayError),
}

impl LiveBackend {
    pub fn new(config: &LiveConfig, api_key: impl Into<String>, limiter: Arc<RequestLimiter>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Transport { status: TransportStatus::Connection(e.to_string()), attempts: 0 })?;
        Ok(LiveBackend {
            endpoint: format!("{}/v1/chat/completions", config.base_url.trim_end_matches('/')),
            api_key: api_key.into(),
            retry: config.retry,
            client,
            limiter,
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<ChatResponse, Failure> {
        let body = json!({
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
        });
        let _permit = self.limiter.acquire();
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Failure::Retryable(TransportStatus::Timeout)
                } else {
                    Failure::Retryable(TransportStatus::Connection(e.without_url().to_string()))
                }
            })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(Failure::Fatal(GatewayError::AuthRejected)),
            408 | 429 | 500..=599 => return Err(Failure::Retryable(TransportStatus::Http(status))),
            _ => {
                return Err(Failure::Fatal(GatewayError::Transport {
                    status: TransportStatus::Http(status),
                    attempts: 1,
                }))
            }
        }
        let parsed: CompletionBody = resp.json().map_err(|e| {
            Failure::Fatal(GatewayError::Transport {
                status: TransportStatus::Connection(format!("unreadable completion body: {}", e.without_url())),
                attempts: 1,
            })
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let usage = parsed
            .usage
            .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
            .unwrap_or_default();
        Ok(ChatResponse { content, usage })
    }
}

impl Backend for LiveBackend {
    fn complete(&self, site: CallSite, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request) {
                Ok(resp) => return Ok(resp),
                Err(Failure::Fatal(GatewayError::Transport { status, .. })) => {
                    return Err(GatewayError::Transport { status, attempts })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(status)) => {
                    if attempts > self.retry.max_retries {
                        return Err(GatewayError::Transport { status, attempts });
                    }
                    let delay = self.retry.base_delay * 2u32.pow(attempts - 1);
                    warn!(step = site.step.number(), %status, ?delay, "transient failure, retrying");
                    thread::sleep(delay);
                }
            }
        }
    }
}
