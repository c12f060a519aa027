//! Transaction records, line-delimited JSON loading, and grouping by user.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus: read failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus: malformed record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("corpus: serialization failure: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransactionKind {
    Payment,
    Charge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Audience {
    Public,
    Friends,
    Private,
}

/// One side of a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub id: String,
    pub name: String,
}

/// A single payment or charge event and its note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    #[serde(rename = "date_created")]
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub note: String,
    #[serde(rename = "type")]
    pub kind: TransactionKind,
    pub actor: Party,
    pub target: Party,
    #[serde(default)]
    pub likes_count: u64,
    #[serde(default)]
    pub comments_count: u64,
    pub audience: Audience,
}

impl Transaction {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.actor.id.is_empty() || self.target.id.is_empty() {
            return Err("empty party id".into());
        }
        if self.actor.id == self.target.id {
            return Err(format!("actor and target are both {}", self.actor.id));
        }
        Ok(())
    }

    pub fn role_of(&self, user_id: &str) -> Option<Role> {
        if self.actor.id == user_id {
            Some(Role::Actor)
        } else if self.target.id == user_id {
            Some(Role::Target)
        } else {
            None
        }
    }

    /// Note length in Unicode scalar values.
    pub fn note_len(&self) -> usize {
        self.note.chars().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Actor,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub transaction_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub display_name: String,
    pub posts: Vec<Post>,
}

/// Transactions indexed by id plus the per-user view of them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub transactions: BTreeMap<String, Transaction>,
    pub users: BTreeMap<String, UserProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub transactions: Vec<Transaction>,
    pub skipped: usize,
    pub duplicates: usize,
}

/// Parses line-delimited transaction records. Blank lines are ignored.
/// Duplicate ids keep the first occurrence.
pub fn load_transactions<R: BufRead>(source: R, mode: ParseMode) -> Result<LoadOutcome, CorpusError> {
    let mut out = LoadOutcome::default();
    let mut seen = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Transaction>(trimmed)
            .map_err(|e| e.to_string())
            .and_then(|t| t.validate().map(|_| t));
        match parsed {
            Ok(t) => {
                if seen.insert(t.id.clone()) {
                    out.transactions.push(t);
                } else {
                    out.duplicates += 1;
                }
            }
            Err(reason) => match mode {
                ParseMode::Strict => {
                    return Err(CorpusError::Malformed { line: idx + 1, reason });
                }
                ParseMode::Lenient => out.skipped += 1,
            },
        }
    }
    Ok(out)
}

pub fn write_transactions<'a, W, I>(mut sink: W, transactions: I) -> Result<(), CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a Transaction>,
{
    for t in transactions {
        serde_json::to_writer(&mut sink, t)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Indexes every transaction under both its actor and its target.
///
/// Posts are ordered by `created_at`, then id. A user's display name comes
/// from their first post in that order.
pub fn group_by_user(transactions: Vec<Transaction>) -> Corpus {
    let mut corpus = Corpus::default();
    for t in transactions {
        corpus.transactions.entry(t.id.clone()).or_insert(t);
    }
    for t in corpus.transactions.values() {
        for (party, role) in [(&t.actor, Role::Actor), (&t.target, Role::Target)] {
            let profile = corpus
                .users
                .entry(party.id.clone())
                .or_insert_with(|| UserProfile {
                    user_id: party.id.clone(),
                    display_name: String::new(),
                    posts: Vec::new(),
                });
            profile.posts.push(Post { transaction_id: t.id.clone(), role });
        }
    }
    let txns = &corpus.transactions;
    for profile in corpus.users.values_mut() {
        profile.posts.sort_by(|a, b| {
            let ta = &txns[&a.transaction_id];
            let tb = &txns[&b.transaction_id];
            ta.created_at.cmp(&tb.created_at).then_with(|| ta.id.cmp(&tb.id))
        });
        let first = &txns[&profile.posts[0].transaction_id];
        profile.display_name = match profile.posts[0].role {
            Role::Actor => first.actor.name.clone(),
            Role::Target => first.target.name.clone(),
        };
    }
    corpus
}

impl Corpus {
    pub fn from_transactions(transactions: Vec<Transaction>) -> Self {
        group_by_user(transactions)
    }

    pub fn user_transactions<'a>(&'a self, profile: &'a UserProfile) -> impl Iterator<Item = (&'a Transaction, Role)> + 'a {
        profile
            .posts
            .iter()
            .map(move |p| (&self.transactions[&p.transaction_id], p.role))
    }

    /// Keeps users with at least `min_posts` posts. The transaction table is
    /// left untouched.
    pub fn filter_min_posts(&self, min_posts: usize) -> Corpus {
        let users = self
            .users
            .iter()
            .filter(|(_, p)| p.posts.len() >= min_posts)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Corpus { transactions: self.transactions.clone(), users }
    }

    pub fn note_length_histogram(&self) -> BTreeMap<usize, usize> {
        note_length_histogram(self)
    }
}

pub fn filter_min_posts(corpus: &Corpus, min_posts: usize) -> Corpus {
    corpus.filter_min_posts(min_posts)
}

/// Note lengths in Unicode scalar values over unique transactions.
pub fn note_length_histogram(corpus: &Corpus) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for t in corpus.transactions.values() {
        *hist.entry(t.note_len()).or_insert(0) += 1;
    }
    hist
}

/// The most frequent length; ties resolve to the shortest.
pub fn histogram_mode(hist: &BTreeMap<usize, usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (&len, &count) in hist {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((len, count));
        }
    }
    best.map(|(len, _)| len)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub fn txn(id: &str, actor: &str, target: &str, secs: i64, note: &str) -> Transaction {
        Transaction {
            id: id.into(),
            created_at: Utc.timestamp_opt(1_600_000_000 + secs, 0).unwrap(),
            note: note.into(),
            kind: TransactionKind::Payment,
            actor: Party { id: actor.into(), name: format!("{actor} Name") },
            target: Party { id: target.into(), name: format!("{target} Name") },
            likes_count: 0,
            comments_count: 0,
            audience: Audience::Public,
        }
    }
}
