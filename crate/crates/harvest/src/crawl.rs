//! Phase-two crawl: fetch the full public history of many users with a
//! worker pool, appending new transactions to a JSONL file and
//! checkpointing after every finished user.

use std::collections::{BTreeSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use payattr_core::corpus::{load_transactions, write_transactions, ParseMode, Transaction};
use serde::{Deserialize, Serialize};

use crate::client::HarvestClient;
use crate::HarvestError;

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub workers: usize,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
}

impl CrawlConfig {
    pub fn new(checkpoint: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        CrawlConfig { workers: 8, checkpoint: checkpoint.into(), out: out.into() }
    }
}

/// Checkpoint contents. Users that were in flight when the checkpoint was
/// taken are stored at the front of `pending`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrawlState {
    pub seen: BTreeSet<String>,
    pub completed: BTreeSet<String>,
    pub pending: VecDeque<String>,
    pub checkpoint_at: Option<DateTime<Utc>>,
}

impl CrawlState {
    pub fn load(path: &Path) -> Result<Self, HarvestError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Writes through a temporary file and a rename.
    pub fn store(&self, path: &Path) -> Result<(), HarvestError> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer(&mut f, self)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CrawlReport {
    pub resumed: bool,
    pub users_completed: usize,
    /// Ids the server did not know.
    pub users_missing: Vec<String>,
    pub transactions_written: usize,
    pub requests: u64,
}

struct Shared {
    state: CrawlState,
    in_flight: Vec<String>,
    out: File,
    report: CrawlReport,
}

impl Shared {
    fn snapshot(&mut self, path: &Path) -> Result<(), HarvestError> {
        self.state.checkpoint_at = Some(Utc::now());
        let mut snap = self.state.clone();
        for id in self.in_flight.iter().rev() {
            snap.pending.push_front(id.clone());
        }
        snap.store(path)
    }

    fn finish(&mut self, user: &str, txns: Option<Vec<Transaction>>, path: &Path) -> Result<(), HarvestError> {
        match txns {
            Some(txns) => {
                let fresh: Vec<&Transaction> = txns.iter().filter(|t| self.state.seen.insert(t.id.clone())).collect();
                write_transactions(&mut self.out, fresh.iter().copied())?;
                self.out.sync_data()?;
                self.report.transactions_written += fresh.len();
            }
            None => self.report.users_missing.push(user.to_string()),
        }
        self.in_flight.retain(|u| u != user);
        self.state.completed.insert(user.to_string());
        self.report.users_completed += 1;
        self.snapshot(path)
    }
}

/// Drops a trailing partial line left by an interrupted append and returns
/// the ids already on disk.
fn recover_output(path: &Path) -> Result<BTreeSet<String>, HarvestError> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let bytes = fs::read(path)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        log::warn!("truncating {} partial bytes from {}", bytes.len() - keep, path.display());
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    let loaded = load_transactions(BufReader::new(File::open(path)?), ParseMode::Lenient)?;
    Ok(loaded.transactions.into_iter().map(|t| t.id).collect())
}

fn initial_state(ids: &[String], config: &CrawlConfig) -> Result<(CrawlState, bool), HarvestError> {
    let resumed = config.checkpoint.exists();
    let mut state = if resumed {
        let mut s = CrawlState::load(&config.checkpoint)?;
        s.seen.extend(recover_output(&config.out)?);
        s
    } else {
        File::create(&config.out)?;
        CrawlState::default()
    };
    let mut queued: BTreeSet<String> = state.pending.iter().cloned().collect();
    for id in ids {
        if !state.completed.contains(id) && queued.insert(id.clone()) {
            state.pending.push_back(id.clone());
        }
    }
    Ok((state, resumed))
}

/// Crawls `ids`, resuming from `config.checkpoint` when it exists. A fatal
/// error stops every worker; the checkpoint then reflects the last finished
/// user and a later call picks up from there.
pub async fn crawl_users(client: Arc<HarvestClient>, ids: &[String], config: &CrawlConfig) -> Result<CrawlReport, HarvestError> {
    let (state, resumed) = initial_state(ids, config)?;
    let out = OpenOptions::new().append(true).create(true).open(&config.out)?;
    let shared = Arc::new(Mutex::new(Shared {
        state,
        in_flight: Vec::new(),
        out,
        report: CrawlReport { resumed, ..CrawlReport::default() },
    }));
    shared.lock().expect("crawl lock").snapshot(&config.checkpoint)?;
    let requests_before = client.requests();
    let abort = Arc::new(AtomicBool::new(false));

    let mut workers = Vec::new();
    for _ in 0..config.workers.max(1) {
        let (client, shared, abort) = (client.clone(), shared.clone(), abort.clone());
        let checkpoint = config.checkpoint.clone();
        workers.push(tokio::spawn(async move {
            loop {
                if abort.load(Ordering::SeqCst) {
                    return Ok(());
                }
                let next = {
                    let mut s = shared.lock().expect("crawl lock");
                    let next = s.state.pending.pop_front();
                    if let Some(id) = &next {
                        s.in_flight.push(id.clone());
                    }
                    next
                };
                let Some(user) = next else { return Ok(()) };
                let txns = match client.fetch_user_transactions(&user).await {
                    Ok(t) => Some(t),
                    Err(HarvestError::UserNotFound(_)) => {
                        log::warn!("user {user} not found, skipping");
                        None
                    }
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        return Err(e);
                    }
                };
                shared.lock().expect("crawl lock").finish(&user, txns, &checkpoint)?;
            }
        }));
    }
    let mut first_err = None;
    for w in workers {
        match w.await {
            Ok(Ok(())) => {}
            Ok(Err(e)) => {
                first_err.get_or_insert(e);
            }
            Err(join) => std::panic::resume_unwind(join.into_panic()),
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let mut s = shared.lock().expect("crawl lock");
    s.report.requests = client.requests() - requests_before;
    Ok(s.report.clone())
}

/// Reads newline-separated user ids, skipping blanks and `#` comments.
pub fn read_id_list(path: &Path) -> Result<Vec<String>, HarvestError> {
    let mut ids = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            ids.push(t.to_string());
        }
    }
    Ok(ids)
}
