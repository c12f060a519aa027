use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use payattr_core::corpus::{load_transactions, Audience, Corpus, ParseMode, Party, Transaction, TransactionKind};
use payattr_harvest::{crawl_users, run_mock_server, ClientConfig, CrawlConfig, CrawlState, HarvestClient, HarvestError, MockConfig, RateLimit};
use rand::{Rng, SeedableRng};

/// `n` transactions among `users` users; about a tenth are private.
fn random_corpus(n: usize, users: usize, seed: u64) -> Corpus {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut txns = Vec::new();
    for i in 0..n {
        let a = rng.gen_range(0..users);
        let b = (a + rng.gen_range(1..users)) % users;
        txns.push(Transaction {
            id: format!("t{i:05}"),
            created_at: Utc.timestamp_opt(1_500_000_000 + rng.gen_range(0..10_000_000), 0).unwrap(),
            note: "x".into(),
            kind: TransactionKind::Payment,
            actor: Party { id: format!("u{a:02}"), name: String::new() },
            target: Party { id: format!("u{b:02}"), name: String::new() },
            likes_count: 0,
            comments_count: 0,
            audience: if rng.gen_bool(0.1) { Audience::Private } else { Audience::Public },
        });
    }
    Corpus::from_transactions(txns)
}

fn public_ids(corpus: &Corpus) -> BTreeSet<String> {
    corpus.transactions.values().filter(|t| t.audience == Audience::Public).map(|t| t.id.clone()).collect()
}

fn output_ids(path: &std::path::Path) -> Vec<String> {
    let loaded = load_transactions(BufReader::new(File::open(path).unwrap()), ParseMode::Strict).unwrap();
    assert_eq!(loaded.duplicates, 0, "duplicate records in output");
    loaded.transactions.into_iter().map(|t| t.id).collect()
}

fn client(url: &str, budget: Option<u64>) -> Arc<HarvestClient> {
    let cfg = ClientConfig { rate: 2000.0, burst: 100.0, max_requests: budget, backoff_base: Duration::from_millis(2), ..ClientConfig::default() };
    Arc::new(HarvestClient::new(url, cfg).unwrap())
}

fn user_ids(corpus: &Corpus) -> Vec<String> {
    corpus.users.keys().cloned().collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn full_crawl_is_complete_and_duplicate_free() {
    let corpus = random_corpus(1000, 40, 7);
    let server = run_mock_server(&corpus, MockConfig::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = CrawlConfig::new(dir.path().join("ck.json"), dir.path().join("out.jsonl"));
    let mut ids = user_ids(&corpus);
    ids.push("ghost".into());
    let report = crawl_users(client(&server.url(), None), &ids, &cfg).await.unwrap();
    let got = output_ids(&cfg.out);
    assert_eq!(got.len(), report.transactions_written);
    assert_eq!(got.into_iter().collect::<BTreeSet<_>>(), public_ids(&corpus));
    assert_eq!(report.users_missing, vec!["ghost".to_string()]);
    assert_eq!(report.users_completed, 41);
    let state = CrawlState::load(&cfg.checkpoint).unwrap();
    assert!(state.pending.is_empty());
    assert_eq!(state.completed.len(), 41);
    assert!(state.checkpoint_at.is_some());
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn kill_and_resume_yields_same_set() {
    let corpus = random_corpus(600, 25, 11);
    let expected = public_ids(&corpus);
    let server = run_mock_server(&corpus, MockConfig { page_size: 7, ..MockConfig::default() }).await.unwrap();
    let ids = user_ids(&corpus);
    for budget in [1u64, 5, 13, 40, 90] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CrawlConfig { workers: 3, ..CrawlConfig::new(dir.path().join("ck.json"), dir.path().join("out.jsonl")) };
        let mut budget = budget;
        let mut runs = 0;
        loop {
            runs += 1;
            match crawl_users(client(&server.url(), Some(budget)), &ids, &cfg).await {
                Ok(report) => {
                    assert_eq!(report.resumed, runs > 1);
                    break;
                }
                Err(HarvestError::BudgetExhausted(_)) => {
                    let state = CrawlState::load(&cfg.checkpoint).unwrap();
                    let pending: BTreeSet<_> = state.pending.iter().cloned().collect();
                    assert!(pending.is_disjoint(&state.completed));
                    assert_eq!(pending.len(), state.pending.len());
                }
                Err(e) => panic!("{e}"),
            }
            budget *= 2;
            assert!(runs < 20);
        }
        let got = output_ids(&cfg.out);
        assert_eq!(got.len(), expected.len(), "budget run had duplicates or losses");
        assert_eq!(got.into_iter().collect::<BTreeSet<_>>(), expected);
    }
    server.shutdown().await;
}

#[tokio::test]
async fn interrupted_user_is_refetched_in_full() {
    // single user with 45 transactions; killed after the first page
    let txns: Vec<Transaction> = (0..45)
        .map(|i| Transaction {
            id: format!("t{i:03}"),
            created_at: Utc.timestamp_opt(1_500_000_000 + i, 0).unwrap(),
            note: String::new(),
            kind: TransactionKind::Charge,
            actor: Party { id: "u1".into(), name: String::new() },
            target: Party { id: format!("c{i}"), name: String::new() },
            likes_count: 0,
            comments_count: 0,
            audience: Audience::Public,
        })
        .collect();
    let corpus = Corpus::from_transactions(txns);
    let server = run_mock_server(&corpus, MockConfig::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = CrawlConfig::new(dir.path().join("ck.json"), dir.path().join("out.jsonl"));
    let ids = vec!["u1".to_string()];
    let err = crawl_users(client(&server.url(), Some(1)), &ids, &cfg).await.unwrap_err();
    assert!(matches!(err, HarvestError::BudgetExhausted(1)));
    let state = CrawlState::load(&cfg.checkpoint).unwrap();
    assert_eq!(state.pending.iter().collect::<Vec<_>>(), vec!["u1"]);
    let report = crawl_users(client(&server.url(), None), &ids, &cfg).await.unwrap();
    assert!(report.resumed);
    assert_eq!(output_ids(&cfg.out).len(), 45);
    assert_eq!(report.requests, 3);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn polite_client_never_sees_429() {
    let corpus = random_corpus(300, 12, 3);
    let limit = RateLimit { per_second: 200.0, burst: 10.0 };
    let server = run_mock_server(&corpus, MockConfig { rate_limit: Some(limit), ..MockConfig::default() }).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = CrawlConfig::new(dir.path().join("ck.json"), dir.path().join("out.jsonl"));
    let polite = ClientConfig { rate: 150.0, burst: 1.0, ..ClientConfig::default() };
    let client = Arc::new(HarvestClient::new(&server.url(), polite).unwrap());
    crawl_users(client, &user_ids(&corpus), &cfg).await.unwrap();
    assert_eq!(server.throttled(), 0);
    assert_eq!(output_ids(&cfg.out).into_iter().collect::<BTreeSet<_>>(), public_ids(&corpus));
    server.shutdown().await;
}
