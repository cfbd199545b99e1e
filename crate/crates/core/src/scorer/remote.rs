//! Blocking JSON-over-HTTP client for a remote scorer.
//!
//! Endpoints: `GET /v1/info`, `POST /v1/mask_predict`,
//! `POST /v1/hidden_states`. Transport failures, 5xx and 429 responses are
//! retried with exponential backoff; other 4xx responses are returned
//! immediately.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    HiddenStatesRequest, HiddenStatesResponse, MaskQuery, MaskResponse, ScorerError, ScorerInfo,
};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub timeout: Duration,
    /// Attempts after the first one.
    pub retries: u32,
    pub backoff_base: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff_base: Duration::from_millis(200),
        }
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Delay before retry number `attempt` (0-based): base, 2×base, 4×base, ...
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base.saturating_mul(1u32 << attempt.min(16))
    }
}

pub struct RemoteScorer {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt<T> {
    Done(Result<T, ScorerError>),
    Retry(String),
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        RemoteScorer { config, agent }
    }

    pub fn base_url(&self) -> &str {
        &self.config.base_url
    }

    fn once<T, B>(&self, path: &str, body: Option<&B>) -> Attempt<T>
    where
        T: DeserializeOwned,
        B: Serialize,
    {
        let url = format!("{}{}", self.config.base_url, path);
        let sent = match body {
            Some(b) => self.agent.post(&url).send_json(b),
            None => self.agent.get(&url).call(),
        };
        let mut response = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("{url}: {e}")),
        };
        let status = response.status().as_u16();
        if status >= 500 || status == 429 {
            return Attempt::Retry(format!("{url}: HTTP {status}"));
        }
        if status >= 400 {
            let message = response
                .body_mut()
                .read_to_string()
                .unwrap_or_else(|e| e.to_string());
            return Attempt::Done(Err(ScorerError::Rejected { status, message }));
        }
        Attempt::Done(
            response
                .body_mut()
                .read_json::<T>()
                .map_err(|e| ScorerError::Protocol(format!("{url}: {e}"))),
        )
    }

    fn request<T, B>(&self, path: &str, body: Option<&B>) -> Result<T, ScorerError>
    where
        T: DeserializeOwned,
        B: Serialize,
    {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let delay = self.config.backoff(attempt - 1);
                log::debug!("retrying {path} in {delay:?} after: {last}");
                std::thread::sleep(delay);
            }
            match self.once(path, body) {
                Attempt::Done(r) => return r,
                Attempt::Retry(why) => last = why,
            }
        }
        Err(ScorerError::ScorerUnavailable(format!(
            "{} attempts failed; last error: {last}",
            self.config.retries + 1
        )))
    }

    pub fn info(&self) -> Result<ScorerInfo, ScorerError> {
        self.request::<ScorerInfo, ()>("/v1/info", None)
    }

    pub fn mask_predict(&self, query: &MaskQuery) -> Result<MaskResponse, ScorerError> {
        self.request("/v1/mask_predict", Some(query))
    }

    pub fn hidden_states(
        &self,
        request: &HiddenStatesRequest,
    ) -> Result<HiddenStatesResponse, ScorerError> {
        self.request("/v1/hidden_states", Some(request))
    }
}
