//! In-process HTTP server imitating the public feed, per-user history and
//! profile pages of the payment API.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use payattr_core::corpus::{Audience, Corpus, Transaction};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::ratelimit::TokenBucket;
use crate::HarvestError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeedPage {
    pub transactions: Vec<Transaction>,
    pub next_before_id: Option<String>,
    /// How long until the feed window moves on.
    #[serde(default)]
    pub refresh_interval_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UserPage {
    pub transactions: Vec<Transaction>,
    pub next_before_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLimit {
    pub per_second: f64,
    pub burst: f64,
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub page_size: usize,
    /// Zero advances the feed window on every request.
    pub refresh_interval: Duration,
    pub rate_limit: Option<RateLimit>,
    pub bind: SocketAddr,
    /// username → user id. Users without an entry are served under their id.
    pub usernames: BTreeMap<String, String>,
    /// Usernames whose profile page lacks the id variable.
    pub broken_profiles: HashSet<String>,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            page_size: 20,
            refresh_interval: Duration::from_secs(15 * 60),
            rate_limit: None,
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            usernames: BTreeMap::new(),
            broken_profiles: HashSet::new(),
        }
    }
}

struct Inner {
    feed: Vec<Transaction>,
    by_user: HashMap<String, Vec<Transaction>>,
    profiles: HashMap<String, String>,
    config: MockConfig,
    started: Instant,
    feed_requests: AtomicU64,
    requests: AtomicU64,
    throttled: AtomicU64,
    limiter: Option<Mutex<TokenBucket>>,
}

type Shared = Arc<Inner>;

impl Inner {
    /// Counts the request and applies the rate limit.
    fn admit(&self) -> Result<(), Response> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let Some(limiter) = &self.limiter else { return Ok(()) };
        match limiter.lock().expect("limiter lock").try_acquire() {
            Ok(()) => Ok(()),
            Err(wait) => {
                self.throttled.fetch_add(1, Ordering::SeqCst);
                let mut resp = (StatusCode::TOO_MANY_REQUESTS, "rate limit exceeded").into_response();
                let secs = wait.as_secs_f64().ceil().max(1.0) as u64;
                resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(secs));
                resp.headers_mut().insert("x-retry-after-ms", HeaderValue::from(wait.as_millis().max(1) as u64));
                Err(resp)
            }
        }
    }
}

fn newest_first(txns: &mut [Transaction]) {
    txns.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| b.id.cmp(&a.id)));
}

async fn feed_page(State(s): State<Shared>) -> Response {
    if let Err(r) = s.admit() {
        return r;
    }
    let n = s.feed_requests.fetch_add(1, Ordering::SeqCst);
    let ps = s.config.page_size.max(1);
    let windows = s.feed.len().div_ceil(ps).max(1) as u64;
    let interval = s.config.refresh_interval;
    let tick = if interval.is_zero() { n } else { (s.started.elapsed().as_nanos() / interval.as_nanos()) as u64 };
    let w = (tick % windows) as usize;
    let page = &s.feed[(w * ps).min(s.feed.len())..((w + 1) * ps).min(s.feed.len())];
    Json(FeedPage {
        transactions: page.to_vec(),
        next_before_id: None,
        refresh_interval_ms: interval.as_millis() as u64,
    })
    .into_response()
}

async fn user_transactions(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    if let Err(r) = s.admit() {
        return r;
    }
    let Some(txns) = s.by_user.get(&id) else {
        return (StatusCode::NOT_FOUND, format!("no user {id}")).into_response();
    };
    let start = match q.get("before_id") {
        None => 0,
        Some(cursor) => match txns.iter().position(|t| &t.id == cursor) {
            Some(i) => i + 1,
            None => return (StatusCode::BAD_REQUEST, format!("unknown cursor {cursor}")).into_response(),
        },
    };
    let end = (start + s.config.page_size.max(1)).min(txns.len());
    let page = txns[start..end].to_vec();
    let next = if end < txns.len() { page.last().map(|t| t.id.clone()) } else { None };
    Json(UserPage { transactions: page, next_before_id: next }).into_response()
}

async fn profile(State(s): State<Shared>, Path(username): Path<String>) -> Response {
    if let Err(r) = s.admit() {
        return r;
    }
    let Some(id) = s.profiles.get(&username) else {
        return (StatusCode::NOT_FOUND, format!("no profile {username}")).into_response();
    };
    let script = if s.config.broken_profiles.contains(&username) {
        format!("window.profile = {{\"username\": \"{username}\"}};")
    } else {
        format!("window.profile = {{\"username\": \"{username}\", \"user_id\": \"{id}\"}};")
    };
    Html(format!("<!doctype html>\n<html><head><title>{username}</title></head>\n<body><div id=\"app\"></div>\n<script>{script}</script></body></html>\n"))
        .into_response()
}

/// Running server. Dropping the handle also stops it.
pub struct MockHandle {
    addr: SocketAddr,
    inner: Shared,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl MockHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests answered with 429 so far.
    pub fn throttled(&self) -> u64 {
        self.inner.throttled.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> u64 {
        self.inner.requests.load(Ordering::SeqCst)
    }

    /// Number of distinct public transactions served.
    pub fn public_transactions(&self) -> usize {
        self.inner.feed.len()
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }

    /// Serves until the task ends (for command-line use).
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

/// Serves the public transactions of `corpus`.
pub async fn run_mock_server(corpus: &Corpus, config: MockConfig) -> Result<MockHandle, HarvestError> {
    let mut feed: Vec<Transaction> =
        corpus.transactions.values().filter(|t| t.audience == Audience::Public).cloned().collect();
    newest_first(&mut feed);
    let mut by_user: HashMap<String, Vec<Transaction>> = corpus.users.keys().map(|u| (u.clone(), Vec::new())).collect();
    for t in &feed {
        for party in [&t.actor.id, &t.target.id] {
            by_user.entry(party.clone()).or_default().push(t.clone());
        }
    }
    for v in by_user.values_mut() {
        newest_first(v);
        v.dedup_by(|a, b| a.id == b.id);
    }
    let mut profiles: HashMap<String, String> = corpus.users.keys().map(|u| (u.clone(), u.clone())).collect();
    profiles.extend(config.usernames.iter().map(|(k, v)| (k.clone(), v.clone())));

    let listener = tokio::net::TcpListener::bind(config.bind).await.map_err(HarvestError::Bind)?;
    let addr = listener.local_addr().map_err(HarvestError::Bind)?;
    let limiter = config.rate_limit.map(|r| Mutex::new(TokenBucket::new(r.per_second, r.burst)));
    let inner = Arc::new(Inner {
        feed,
        by_user,
        profiles,
        config,
        started: Instant::now(),
        feed_requests: AtomicU64::new(0),
        requests: AtomicU64::new(0),
        throttled: AtomicU64::new(0),
        limiter,
    });
    let app = Router::new()
        .route("/feed", get(feed_page))
        .route("/users/:id/transactions", get(user_transactions))
        .route("/profile/:username", get(profile))
        .with_state(inner.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(MockHandle { addr, inner, stop: Some(tx), task })
}
