//! Blocking JSON POST with retries, shared by the remote chat and embedding backends.

use std::time::Duration;

use serde_json::Value as Json;
use tracing::warn;

#[derive(Debug, Clone)]
pub(crate) struct RemoteEndpoint {
    pub url: String,
    pub key: Option<String>,
    pub attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl RemoteEndpoint {
    /// Endpoint from `<prefix>_URL` and optional `<prefix>_KEY`.
    pub fn from_env(prefix: &str) -> Option<Self> {
        let url = std::env::var(format!("{prefix}_URL")).ok().filter(|u| !u.trim().is_empty())?;
        let key = std::env::var(format!("{prefix}_KEY")).ok().filter(|k| !k.is_empty());
        Some(Self::new(url, key))
    }

    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        Self { url: url.into(), key, attempts: 3, backoff: Duration::from_millis(250), timeout: Duration::from_secs(120) }
    }

    /// Posts `body`, retrying transport errors, 429 and 5xx with exponential
    /// backoff. Other statuses fail immediately.
    pub fn post(&self, body: &Json) -> Result<Json, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let mut last = String::new();
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = agent.post(&self.url).header("Content-Type", "application/json");
            if let Some(key) = &self.key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(resp) => return resp.into_body().read_json::<Json>().map_err(|e| format!("invalid response body: {e}")),
                Err(ureq::Error::StatusCode(code)) if code != 429 && code < 500 => {
                    return Err(format!("{} answered with status {code}", self.url));
                }
                Err(e) => {
                    warn!(url = %self.url, attempt, error = %e, "remote call failed");
                    last = e.to_string();
                }
            }
        }
        Err(format!("{} failed after {} attempts: {last}", self.url, self.attempts.max(1)))
    }
}
