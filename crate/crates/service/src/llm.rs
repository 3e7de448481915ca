//! Where model responses come from: the live endpoint or a directory of
//! recorded responses.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use exoar_core::gateway::{
    Backend, FixtureBackend, GatewayError, LiveBackend, LiveConfig, ReplayBackend, RequestLimiter, DEFAULT_CONCURRENCY,
};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmSource {
    Live,
    /// Lenient canned responses; repair attempts fall back to attempt 1.
    Fixture(PathBuf),
    /// Exact playback of a recorded run.
    Replay(PathBuf),
}

impl FromStr for LlmSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "live" => Ok(LlmSource::Live),
            Some(("fixture", dir)) if !dir.is_empty() => Ok(LlmSource::Fixture(dir.into())),
            Some(("replay", dir)) if !dir.is_empty() => Ok(LlmSource::Replay(dir.into())),
            _ => Err(format!("expected live, fixture:<dir> or replay:<dir>, got {s:?}")),
        }
    }
}

impl fmt::Display for LlmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmSource::Live => f.write_str("live"),
            LlmSource::Fixture(dir) => write!(f, "fixture:{}", dir.display()),
            LlmSource::Replay(dir) => write!(f, "replay:{}", dir.display()),
        }
    }
}

/// Builds backends for a source. Recorded responses are read once; live
/// backends are built per API key and share one request limiter.
#[derive(Clone)]
pub struct BackendFactory {
    recorded: Option<Arc<dyn Backend>>,
    live: LiveConfig,
    limiter: Arc<RequestLimiter>,
}

impl fmt::Debug for BackendFactory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendFactory")
            .field("recorded", &self.recorded.is_some())
            .field("base_url", &self.live.base_url)
            .finish()
    }
}

impl BackendFactory {
    pub fn new(source: &LlmSource, base_url: &str) -> Result<Self, GatewayError> {
        let recorded: Option<Arc<dyn Backend>> = match source {
            LlmSource::Live => None,
            LlmSource::Fixture(dir) => Some(Arc::new(FixtureBackend::open(dir)?)),
            LlmSource::Replay(dir) => Some(Arc::new(ReplayBackend::open(dir)?)),
        };
        Ok(BackendFactory {
            recorded,
            live: LiveConfig::new(base_url),
            limiter: RequestLimiter::new(DEFAULT_CONCURRENCY),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.live.timeout = timeout;
        self
    }

    pub fn needs_api_key(&self) -> bool {
        self.recorded.is_none()
    }

    /// `None` when the source is live and no key was given.
    pub fn backend(&self, api_key: Option<&str>) -> Result<Option<Arc<dyn Backend>>, GatewayError> {
        if let Some(b) = &self.recorded {
            return Ok(Some(b.clone()));
        }
        match api_key {
            Some(key) => Ok(Some(Arc::new(LiveBackend::new(&self.live, key, self.limiter.clone())?))),
            None => Ok(None),
        }
    }
}
