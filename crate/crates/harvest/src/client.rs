use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use payattr_core::corpus::Transaction;
use regex::Regex;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use crate::ratelimit::TokenBucket;
use crate::server::{FeedPage, UserPage};
use crate::HarvestError;

static USER_ID_PATTERN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""user_id"\s*:\s*"([^"]+)""#).unwrap());

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Requests per second.
    pub rate: f64,
    pub burst: f64,
    /// Attempts after a transport error or 5xx before giving up.
    pub max_retries: u32,
    /// Waits honoured for 429 responses before giving up.
    pub max_throttle_waits: u32,
    pub backoff_base: Duration,
    pub backoff_max: Duration,
    pub timeout: Duration,
    /// Hard cap on requests issued by this client.
    pub max_requests: Option<u64>,
    /// Wait between feed polls; `None` uses the interval the server reports.
    pub poll_interval: Option<Duration>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            rate: 5.0,
            burst: 1.0,
            max_retries: 5,
            max_throttle_waits: 100,
            backoff_base: Duration::from_millis(100),
            backoff_max: Duration::from_secs(10),
            timeout: Duration::from_secs(30),
            max_requests: None,
            poll_interval: None,
        }
    }
}

enum Failure {
    Retry(String),
    Throttled(Duration),
    Fatal(HarvestError),
}

pub struct HarvestClient {
    http: reqwest::Client,
    base: String,
    bucket: Mutex<TokenBucket>,
    config: ClientConfig,
    requests: AtomicU64,
}

impl HarvestClient {
    pub fn new(endpoint: &str, config: ClientConfig) -> Result<Self, HarvestError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| HarvestError::Http { url: endpoint.to_string(), reason: e.to_string() })?;
        Ok(HarvestClient {
            http,
            base: endpoint.trim_end_matches('/').to_string(),
            bucket: Mutex::new(TokenBucket::new(config.rate, config.burst)),
            config,
            requests: AtomicU64::new(0),
        })
    }

    /// Requests sent so far, retries included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    async fn take_token(&self) {
        loop {
            let wait = match self.bucket.lock().expect("bucket lock").try_acquire() {
                Ok(()) => return,
                Err(w) => w,
            };
            tokio::time::sleep(wait).await;
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(20));
        self.config.backoff_base.saturating_mul(factor).min(self.config.backoff_max)
    }

    async fn send_once(&self, url: &str) -> Result<String, Failure> {
        self.take_token().await;
        let n = self.requests.fetch_add(1, Ordering::SeqCst);
        if let Some(max) = self.config.max_requests {
            if n >= max {
                return Err(Failure::Fatal(HarvestError::BudgetExhausted(max)));
            }
        }
        let resp = self.http.get(url).send().await.map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            let header = |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).and_then(|v| v.parse::<u64>().ok());
            let wait = header("x-retry-after-ms")
                .map(Duration::from_millis)
                .or_else(|| header("retry-after").map(Duration::from_secs))
                .unwrap_or(self.config.backoff_base);
            return Err(Failure::Throttled(wait));
        }
        if status.is_server_error() {
            return Err(Failure::Retry(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(HarvestError::Status { url: url.to_string(), status: status.as_u16() }));
        }
        resp.text().await.map_err(|e| Failure::Retry(e.to_string()))
    }

    /// GET with rate limiting, 429 waits and exponential backoff.
    async fn get_text(&self, path: &str) -> Result<String, HarvestError> {
        let url = format!("{}{}", self.base, path);
        let (mut attempts, mut waits) = (0u32, 0u32);
        loop {
            match self.send_once(&url).await {
                Ok(body) => return Ok(body),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Throttled(wait)) => {
                    waits += 1;
                    if waits > self.config.max_throttle_waits {
                        return Err(HarvestError::RetriesExhausted { url, attempts: attempts + waits });
                    }
                    log::debug!("throttled on {url}, waiting {wait:?}");
                    tokio::time::sleep(wait).await;
                }
                Err(Failure::Retry(reason)) => {
                    attempts += 1;
                    if attempts > self.config.max_retries {
                        log::warn!("giving up on {url}: {reason}");
                        return Err(HarvestError::RetriesExhausted { url, attempts });
                    }
                    tokio::time::sleep(self.backoff(attempts - 1)).await;
                }
            }
        }
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str, page: usize) -> Result<T, HarvestError> {
        let body = self.get_text(path).await?;
        serde_json::from_str(&body).map_err(|e| HarvestError::Malformed { page, reason: e.to_string() })
    }

    /// Polls the public feed `pages` times, waiting out the refresh interval
    /// between polls. Transactions are deduplicated by id, first sighting
    /// first.
    pub async fn fetch_public_feed(&self, pages: usize) -> Result<Vec<Transaction>, HarvestError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for page in 0..pages {
            let p: FeedPage = self.get_json("/feed", page).await?;
            out.extend(p.transactions.into_iter().filter(|t| seen.insert(t.id.clone())));
            if page + 1 < pages {
                let wait = self.config.poll_interval.unwrap_or(Duration::from_millis(p.refresh_interval_ms));
                if !wait.is_zero() {
                    tokio::time::sleep(wait).await;
                }
            }
        }
        Ok(out)
    }

    /// Follows `before_id` cursors until the history is exhausted.
    pub async fn fetch_user_transactions(&self, user_id: &str) -> Result<Vec<Transaction>, HarvestError> {
        let mut out: Vec<Transaction> = Vec::new();
        let mut seen = HashSet::new();
        let mut cursor: Option<String> = None;
        for page in 0.. {
            let path = match &cursor {
                None => format!("/users/{user_id}/transactions"),
                Some(c) => format!("/users/{user_id}/transactions?before_id={c}"),
            };
            let p: UserPage = match self.get_json(&path, page).await {
                Err(HarvestError::Status { status: 404, .. }) => return Err(HarvestError::UserNotFound(user_id.to_string())),
                other => other?,
            };
            out.extend(p.transactions.into_iter().filter(|t| seen.insert(t.id.clone())));
            match p.next_before_id {
                Some(next) if Some(&next) != cursor.as_ref() => cursor = Some(next),
                Some(_) => return Err(HarvestError::Malformed { page, reason: "cursor did not advance".into() }),
                None => break,
            }
        }
        Ok(out)
    }

    /// Reads the user id embedded in a profile page.
    pub async fn resolve_user_id(&self, username: &str) -> Result<String, HarvestError> {
        let body = match self.get_text(&format!("/profile/{username}")).await {
            Err(HarvestError::Status { status: 404, .. }) => return Err(HarvestError::UnknownUsername(username.to_string())),
            other => other?,
        };
        USER_ID_PATTERN
            .captures(&body)
            .map(|c| c[1].to_string())
            .ok_or_else(|| HarvestError::PatternNotFound(username.to_string()))
    }
}
