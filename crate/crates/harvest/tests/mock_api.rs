use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use payattr_core::corpus::{Audience, Corpus, Party, Transaction, TransactionKind};
use payattr_harvest::{run_mock_server, ClientConfig, HarvestClient, HarvestError, MockConfig, RateLimit, UserPage};

fn txn(i: usize, actor: &str, target: &str) -> Transaction {
    Transaction {
        id: format!("t{i:05}"),
        created_at: Utc.timestamp_opt(1_500_000_000 + i as i64 * 60, 0).unwrap(),
        note: format!("note {i}"),
        kind: TransactionKind::Payment,
        actor: Party { id: actor.into(), name: actor.to_uppercase() },
        target: Party { id: target.into(), name: target.to_uppercase() },
        likes_count: 0,
        comments_count: 0,
        audience: Audience::Public,
    }
}

/// `n` transactions between distinct pairs of throwaway users.
fn feed_corpus(n: usize) -> Corpus {
    Corpus::from_transactions((0..n).map(|i| txn(i, &format!("a{i}"), &format!("b{i}"))).collect())
}

/// User u1 with `n` transactions against distinct counterparties, plus an
/// idle user u0 known only through a private transaction.
fn user_corpus(n: usize) -> Corpus {
    let mut txns: Vec<Transaction> = (0..n).map(|i| txn(i, "u1", &format!("c{i}"))).collect();
    let mut private = txn(90_000, "u0", "c0");
    private.audience = Audience::Private;
    txns.push(private);
    Corpus::from_transactions(txns)
}

fn fast() -> ClientConfig {
    ClientConfig { rate: 1000.0, burst: 50.0, backoff_base: Duration::from_millis(5), ..ClientConfig::default() }
}

fn zero_refresh() -> MockConfig {
    MockConfig { refresh_interval: Duration::ZERO, ..MockConfig::default() }
}

#[tokio::test]
async fn feed_single_page_returns_twenty() {
    let server = run_mock_server(&feed_corpus(20), MockConfig::default()).await.unwrap();
    let client = HarvestClient::new(&server.url(), fast()).unwrap();
    let got = client.fetch_public_feed(1).await.unwrap();
    assert_eq!(got.len(), 20);
    assert!(got.windows(2).all(|w| w[0].created_at >= w[1].created_at), "newest first");
    server.shutdown().await;
}

#[tokio::test]
async fn feed_repeat_poll_without_refresh_dedups() {
    let server = run_mock_server(&feed_corpus(20), MockConfig::default()).await.unwrap();
    let cfg = ClientConfig { poll_interval: Some(Duration::ZERO), ..fast() };
    let client = HarvestClient::new(&server.url(), cfg).unwrap();
    let got = client.fetch_public_feed(2).await.unwrap();
    assert_eq!(got.len(), 20);
    assert_eq!(client.requests(), 2);
    server.shutdown().await;
}

#[tokio::test]
async fn feed_rotating_windows_cover_fifty() {
    let server = run_mock_server(&feed_corpus(50), zero_refresh()).await.unwrap();
    let client = HarvestClient::new(&server.url(), fast()).unwrap();
    let got = client.fetch_public_feed(3).await.unwrap();
    assert_eq!(got.len(), 50);
    let ids: std::collections::BTreeSet<_> = got.iter().map(|t| t.id.clone()).collect();
    assert_eq!(ids.len(), 50);
    server.shutdown().await;
}

#[tokio::test]
async fn user_history_of_45_takes_three_requests() {
    let server = run_mock_server(&user_corpus(45), MockConfig::default()).await.unwrap();
    let client = HarvestClient::new(&server.url(), fast()).unwrap();
    let got = client.fetch_user_transactions("u1").await.unwrap();
    assert_eq!(got.len(), 45);
    assert_eq!(client.requests(), 3);
    server.shutdown().await;
}

#[tokio::test]
async fn empty_history_takes_one_request() {
    let server = run_mock_server(&user_corpus(3), MockConfig::default()).await.unwrap();
    let client = HarvestClient::new(&server.url(), fast()).unwrap();
    assert!(client.fetch_user_transactions("u0").await.unwrap().is_empty());
    assert_eq!(client.requests(), 1);
    assert!(matches!(client.fetch_user_transactions("nobody").await, Err(HarvestError::UserNotFound(u)) if u == "nobody"));
    server.shutdown().await;
}

#[tokio::test]
async fn before_id_cursor_returns_next_twenty() {
    let corpus = user_corpus(60);
    let server = run_mock_server(&corpus, MockConfig::default()).await.unwrap();
    let base = server.url();
    let http = reqwest::Client::new();
    let first: UserPage = http.get(format!("{base}/users/u1/transactions")).send().await.unwrap().json().await.unwrap();
    let second: UserPage = http
        .get(format!("{base}/users/u1/transactions?before_id={}", first.next_before_id.clone().unwrap()))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let third: UserPage = http
        .get(format!("{base}/users/u1/transactions?before_id={}", second.next_before_id.clone().unwrap()))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    // newest first: position k (1-based) holds t(60 - k)
    let mut all: Vec<Transaction> = corpus.transactions.values().filter(|t| t.actor.id == "u1").cloned().collect();
    all.reverse();
    let cursor_21st = &all[20].id;
    let from_21st: UserPage = http
        .get(format!("{base}/users/u1/transactions?before_id={cursor_21st}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let expect: Vec<&str> = all[21..41].iter().map(|t| t.id.as_str()).collect();
    let got: Vec<&str> = from_21st.transactions.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(got, expect);
    assert_eq!(second.transactions.len(), 20);
    assert_eq!(third.transactions.len(), 20);
    assert!(third.next_before_id.is_none(), "absent on the last page");
    let bad = http.get(format!("{base}/users/u1/transactions?before_id=zzz")).send().await.unwrap();
    assert_eq!(bad.status().as_u16(), 400);
    server.shutdown().await;
}

#[tokio::test]
async fn profile_lookup() {
    let cfg = MockConfig {
        usernames: BTreeMap::from([("alice".to_string(), "u123".to_string()), ("bob".to_string(), "u1".to_string())]),
        broken_profiles: ["bob".to_string()].into(),
        ..MockConfig::default()
    };
    let server = run_mock_server(&user_corpus(2), cfg).await.unwrap();
    let client = HarvestClient::new(&server.url(), fast()).unwrap();
    assert_eq!(client.resolve_user_id("alice").await.unwrap(), "u123");
    assert_eq!(client.resolve_user_id("u1").await.unwrap(), "u1");
    assert!(matches!(client.resolve_user_id("mallory").await, Err(HarvestError::UnknownUsername(_))));
    assert!(matches!(client.resolve_user_id("bob").await, Err(HarvestError::PatternNotFound(_))));
    server.shutdown().await;
}

#[tokio::test]
async fn burst_of_requests_trips_limiter() {
    let cfg = MockConfig { rate_limit: Some(RateLimit { per_second: 10.0, burst: 10.0 }), ..MockConfig::default() };
    let server = run_mock_server(&feed_corpus(20), cfg).await.unwrap();
    let http = reqwest::Client::new();
    let start = Instant::now();
    let mut limited = 0;
    for _ in 0..100 {
        let r = http.get(format!("{}/feed", server.url())).send().await.unwrap();
        if r.status().as_u16() == 429 {
            assert!(r.headers().contains_key("retry-after"));
            limited += 1;
        }
    }
    assert!(start.elapsed() < Duration::from_secs(1));
    assert!(limited >= 1);
    assert_eq!(server.throttled(), limited);
    server.shutdown().await;
}

#[tokio::test]
async fn client_waits_out_429_and_still_completes() {
    let cfg = MockConfig { rate_limit: Some(RateLimit { per_second: 50.0, burst: 2.0 }), ..MockConfig::default() };
    let server = run_mock_server(&user_corpus(100), cfg).await.unwrap();
    // client far faster than the server allows
    let client = HarvestClient::new(&server.url(), fast()).unwrap();
    let got = client.fetch_user_transactions("u1").await.unwrap();
    assert_eq!(got.len(), 100);
    assert!(server.throttled() > 0);
    server.shutdown().await;
}

#[tokio::test]
async fn client_rate_stays_within_one_burst() {
    let server = run_mock_server(&feed_corpus(20), zero_refresh()).await.unwrap();
    let cfg = ClientConfig { rate: 40.0, burst: 5.0, poll_interval: Some(Duration::ZERO), ..fast() };
    let client = HarvestClient::new(&server.url(), cfg).unwrap();
    let start = Instant::now();
    client.fetch_public_feed(25).await.unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    // 25 requests need at least (25 - burst) / rate seconds
    assert!(25.0 <= 5.0 + 40.0 * elapsed + 1e-9, "elapsed {elapsed}");
    assert!(elapsed >= (25.0 - 5.0) / 40.0 * 0.95);
    server.shutdown().await;
}

#[tokio::test]
async fn server_errors_exhaust_retry_budget() {
    // nothing listens on a port from a dropped listener
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = ClientConfig { max_retries: 2, ..fast() };
    let client = HarvestClient::new(&format!("http://127.0.0.1:{port}"), cfg).unwrap();
    match client.fetch_public_feed(1).await {
        Err(HarvestError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(client.requests(), 3);
}

#[tokio::test]
async fn malformed_page_reports_its_index() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let app = axum::Router::new().route(
        "/feed",
        axum::routing::get(move || {
            let h = h.clone();
            async move {
                if h.fetch_add(1, Ordering::SeqCst) == 0 {
                    r#"{"transactions":[],"next_before_id":null,"refresh_interval_ms":0}"#.to_string()
                } else {
                    "<html>maintenance</html>".to_string()
                }
            }
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    let client = HarvestClient::new(&format!("http://{addr}"), fast()).unwrap();
    match client.fetch_public_feed(3).await {
        Err(HarvestError::Malformed { page, .. }) => assert_eq!(page, 1),
        other => panic!("{other:?}"),
    }
}
