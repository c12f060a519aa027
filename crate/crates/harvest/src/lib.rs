//! Paginated, rate-limited collection of public payment transactions, and
//! a mock API server that mimics the real feed for tests.

mod client;
mod crawl;
mod ratelimit;
mod server;

use thiserror::Error;

pub use client::{ClientConfig, HarvestClient};
pub use crawl::{crawl_users, read_id_list, CrawlConfig, CrawlReport, CrawlState};
pub use ratelimit::TokenBucket;
pub use server::{run_mock_server, FeedPage, MockConfig, MockHandle, RateLimit, UserPage};

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("harvest: request to {url} failed: {reason}")]
    Http { url: String, reason: String },
    #[error("harvest: {url} answered {status}")]
    Status { url: String, status: u16 },
    #[error("harvest: gave up on {url} after {attempts} attempts")]
    RetriesExhausted { url: String, attempts: u32 },
    #[error("harvest: user {0} not found")]
    UserNotFound(String),
    #[error("harvest: unknown username {0}")]
    UnknownUsername(String),
    #[error("harvest: no user id in profile page of {0}")]
    PatternNotFound(String),
    #[error("harvest: malformed page {page}: {reason}")]
    Malformed { page: usize, reason: String },
    #[error("harvest: request budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("harvest: cannot bind mock server: {0}")]
    Bind(std::io::Error),
    #[error("harvest: io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("harvest: json failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] payattr_core::corpus::CorpusError),
}
