use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, Semaphore};

use crate::cache::DiskCache;
use crate::prompt::PromptPayload;
use crate::validate::parse_completion;
use crate::{EnhanceError, EnhancementResult, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Chat-completions URL, e.g. `http://host/v1/chat/completions`.
    pub url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
    /// Sustained request rate; the bucket holds `concurrency` tokens.
    pub requests_per_second: f64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: String::new(),
            api_key: None,
            max_attempts: 5,
            base_delay_ms: 1000,
            timeout_secs: 120,
            concurrency: 4,
            requests_per_second: 8.0,
        }
    }
}

impl EndpointConfig {
    /// Applies `ENHANCER_URL`, `ENHANCER_MODEL` and `ENHANCER_KEY` when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(v) = std::env::var("ENHANCER_URL") {
            self.url = v;
        }
        if let Ok(v) = std::env::var("ENHANCER_MODEL") {
            self.model = v;
        }
        if let Ok(v) = std::env::var("ENHANCER_KEY") {
            self.api_key = Some(v);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.url.is_empty() {
            return Err(EnhanceError::Config("enhancer url is not set (ENHANCER_URL)".into()));
        }
        if self.model.is_empty() {
            return Err(EnhanceError::Config("enhancer model is not set (ENHANCER_MODEL)".into()));
        }
        if self.max_attempts == 0 || self.concurrency == 0 {
            return Err(EnhanceError::Config("max_attempts and concurrency must be positive".into()));
        }
        if !(self.requests_per_second > 0.0) {
            return Err(EnhanceError::Config("requests_per_second must be positive".into()));
        }
        Ok(())
    }

    /// Delay before attempt `n` (1-based, n ≥ 2): base × 2^(n−2).
    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << (attempt.saturating_sub(2)).min(20)))
    }
}

#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    rate: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: f64, rate: f64) -> Self {
        Self {
            capacity,
            rate,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().await;
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.rate).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.rate
            };
            tokio::time::sleep(Duration::from_secs_f64(wait)).await;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub result: EnhancementResult,
    pub from_cache: bool,
}

#[derive(Debug)]
pub struct Enhancer {
    config: EndpointConfig,
    http: reqwest::Client,
    cache: DiskCache,
    permits: Semaphore,
    bucket: TokenBucket,
    requests: AtomicUsize,
}

impl Enhancer {
    pub fn new(config: EndpointConfig, cache: DiskCache) -> Result<Self> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| EnhanceError::Config(e.to_string()))?;
        Ok(Self {
            permits: Semaphore::new(config.concurrency),
            bucket: TokenBucket::new(config.concurrency as f64, config.requests_per_second),
            config,
            http,
            cache,
            requests: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_issued(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    async fn post_once(&self, body: &serde_json::Value) -> Result<EnhancementResult> {
        self.bucket.acquire().await;
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut req = self.http.post(&self.config.url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| EnhanceError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| EnhanceError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EnhanceError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| EnhanceError::Schema(e.to_string()))?;
        parse_completion(&json)
    }

    /// Cached result for the payload, or a fresh request with exponential
    /// backoff on transient failures. Only successfully parsed replies are
    /// cached.
    pub async fn enhance(&self, payload: &PromptPayload) -> Result<Fetched> {
        let key = payload.cache_key(&self.config.model);
        if let Some(result) = self.cache.get(&key) {
            return Ok(Fetched { result, from_cache: true });
        }
        let _permit = self.permits.acquire().await.expect("semaphore open");
        let body = payload.request_body(&self.config.model);
        let mut attempt = 1;
        loop {
            match self.post_once(&body).await {
                Ok(result) => {
                    self.cache.put(&key, &self.config.model, &payload.instruction.id(), &result)?;
                    return Ok(Fetched { result, from_cache: false });
                }
                Err(e) if e.is_transient() && attempt < self.config.max_attempts => {
                    attempt += 1;
                    tracing::debug!(target_id = %payload.target_id, attempt, error = %e, "retrying");
                    tokio::time::sleep(self.config.backoff(attempt)).await;
                }
                Err(e) if e.is_transient() => {
                    return Err(EnhanceError::Exhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Fans out over all payloads with bounded concurrency; results come
    /// back in payload order.
    pub async fn enhance_all(self: &Arc<Self>, payloads: Vec<PromptPayload>) -> Vec<(PromptPayload, Result<Fetched>)> {
        let mut set = tokio::task::JoinSet::new();
        for (i, p) in payloads.into_iter().enumerate() {
            let me = Arc::clone(self);
            set.spawn(async move {
                let r = me.enhance(&p).await;
                (i, p, r)
            });
        }
        let mut out = Vec::new();
        while let Some(joined) = set.join_next().await {
            out.push(joined.expect("enhance task panicked"));
        }
        out.sort_by_key(|(i, _, _)| *i);
        out.into_iter().map(|(_, p, r)| (p, r)).collect()
    }
}
