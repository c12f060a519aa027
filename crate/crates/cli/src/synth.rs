//! Planted-signal corpus generator. Class A users get female first names
//! and class-A signal tokens, class B users male names and class-B tokens,
//! so the same corpus serves both the gender and the politics task.

use std::io::Write;

use chrono::{TimeZone, Utc};
use payattr_core::corpus::{Audience, Party, Transaction, TransactionKind};
use payattr_core::label::{ClassLabel, GenderGuess, NameCorpus};
use payattr_core::seed::derive_seed;
use payattr_core::tokenize::is_emoji_grapheme;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synth: invalid spec: {0}")]
    InvalidSpec(String),
    #[error("synth: io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] payattr_core::corpus::CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub users_per_class: usize,
    /// Inclusive range of posts per labeled user.
    pub posts_per_user: (usize, usize),
    pub signal_a: Vec<String>,
    pub signal_b: Vec<String>,
    /// Chance that a post carries a token of its author's class.
    pub p_signal: f64,
    /// Chance that a post carries a token of the other class.
    pub p_noise: f64,
    pub background: Vec<String>,
    /// Zipf exponent over `background` in list order.
    pub zipf_exponent: f64,
    /// Share of posts that are a single emoji (or only emoji signal tokens).
    pub emoji_fraction: f64,
    pub charge_fraction: f64,
    pub seed: u64,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users_per_class: 1000,
            posts_per_user: (8, 8),
            signal_a: strings(&["💅", "👠", "🍹", "👗", "brunch", "cute", "wine", "yoga"]),
            signal_b: strings(&["🍺", "🏈", "🎮", "🔧", "bro", "dude", "wings", "beer"]),
            p_signal: 0.6,
            p_noise: 0.1,
            background: strings(&[
                "rent", "🍕", "dinner", "food", "thanks", "lol", "uber", "🚕", "pizza", ":uber:", "💸", "bills",
                "hahaha", "lunch", "🎉", "coffee", "omg", "!!!", "groceries", "🏠", "tickets", ":-)", "gas",
                "heyyyy", "🔥", "movie", "WOW", "tacos", "damn", "🙏", "split", "drinks",
            ]),
            zipf_exponent: 1.0,
            emoji_fraction: 0.4,
            charge_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn planted(users_per_class: usize, p_signal: f64, p_noise: f64, posts: usize, seed: u64) -> Self {
        SynthSpec { users_per_class, posts_per_user: (posts, posts), p_signal, p_noise, seed, ..SynthSpec::default() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.users_per_class == 0 {
            return bad("users_per_class must be positive");
        }
        let (lo, hi) = self.posts_per_user;
        if lo == 0 || lo > hi {
            return bad("posts_per_user must be a range with 1 <= min <= max");
        }
        if !(0.0 <= self.p_noise && self.p_noise < self.p_signal && self.p_signal <= 1.0) {
            return bad("need 0 <= p_noise < p_signal <= 1");
        }
        for (name, p) in [("emoji_fraction", self.emoji_fraction), ("charge_fraction", self.charge_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::InvalidSpec(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.signal_a.is_empty() || self.signal_b.is_empty() || self.background.is_empty() {
            return bad("signal and background pools must be non-empty");
        }
        if self.signal_a.iter().any(|t| self.signal_b.contains(t) || self.background.contains(t))
            || self.signal_b.iter().any(|t| self.background.contains(t))
        {
            return bad("signal pools must be disjoint from each other and from the background");
        }
        if !self.zipf_exponent.is_finite() || self.zipf_exponent < 0.0 {
            return bad("zipf_exponent must be finite and non-negative");
        }
        Ok(())
    }

    pub fn signal(&self, class: ClassLabel) -> &[String] {
        match class {
            ClassLabel::A => &self.signal_a,
            ClassLabel::B => &self.signal_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub transactions: Vec<Transaction>,
    /// Labeled users in id order; outsiders are not listed.
    pub labels: Vec<(String, ClassLabel)>,
}

impl SynthCorpus {
    pub fn write_jsonl<W: Write>(&self, sink: W) -> Result<(), SynthError> {
        payattr_core::corpus::write_transactions(sink, &self.transactions)?;
        Ok(())
    }

    /// Political label file: class A is `democrat`.
    pub fn write_labels_csv<W: Write>(&self, mut sink: W) -> Result<(), SynthError> {
        writeln!(sink, "user_id,label")?;
        for (id, class) in &self.labels {
            let label = match class {
                ClassLabel::A => "democrat",
                ClassLabel::B => "republican",
            };
            writeln!(sink, "{id},{label}")?;
        }
        sink.flush()?;
        Ok(())
    }
}

fn is_single_emoji(token: &str) -> bool {
    token.chars().count() == 1 && is_emoji_grapheme(token)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

const SURNAMES: [&str; 12] =
    ["Smith", "Lee", "Garcia", "Brown", "Nguyen", "Patel", "Jones", "Kim", "Lopez", "Walker", "Young", "Reed"];

struct PostMaker<'a> {
    spec: &'a SynthSpec,
    zipf: WeightedIndex<f64>,
    bg_emoji: Vec<&'a str>,
    emoji_a: Vec<&'a str>,
    emoji_b: Vec<&'a str>,
}

impl<'a> PostMaker<'a> {
    fn new(spec: &'a SynthSpec) -> Self {
        let weights: Vec<f64> = (1..=spec.background.len()).map(|r| (r as f64).powf(-spec.zipf_exponent)).collect();
        let emoji_of = |pool: &'a [String]| pool.iter().map(String::as_str).filter(|t| is_single_emoji(t)).collect::<Vec<_>>();
        PostMaker {
            spec,
            zipf: WeightedIndex::new(weights).expect("non-empty positive weights"),
            bg_emoji: emoji_of(&spec.background),
            emoji_a: emoji_of(&spec.signal_a),
            emoji_b: emoji_of(&spec.signal_b),
        }
    }

    fn note(&self, class: ClassLabel, rng: &mut ChaCha8Rng) -> String {
        let other = match class {
            ClassLabel::A => ClassLabel::B,
            ClassLabel::B => ClassLabel::A,
        };
        let own_hit = rng.gen_bool(self.spec.p_signal);
        let other_hit = rng.gen_bool(self.spec.p_noise);
        let emoji_pool = |c: ClassLabel| match c {
            ClassLabel::A => &self.emoji_a,
            ClassLabel::B => &self.emoji_b,
        };
        let emoji_only = rng.gen_bool(self.spec.emoji_fraction)
            && !self.bg_emoji.is_empty()
            && (!own_hit || !emoji_pool(class).is_empty())
            && (!other_hit || !emoji_pool(other).is_empty());
        if emoji_only {
            let mut note = String::new();
            for (hit, c) in [(own_hit, class), (other_hit, other)] {
                if hit {
                    note.push_str(emoji_pool(c).choose(rng).expect("checked non-empty"));
                }
            }
            if note.is_empty() {
                note.push_str(self.bg_emoji.choose(rng).expect("checked non-empty"));
            }
            return note;
        }
        let n_bg = rng.gen_range(1..=4);
        let mut words: Vec<&str> = (0..n_bg).map(|_| self.spec.background[self.zipf.sample(rng)].as_str()).collect();
        for (hit, c) in [(own_hit, class), (other_hit, other)] {
            if hit {
                let tok = self.spec.signal(c).choose(rng).expect("validated non-empty");
                let at = rng.gen_range(0..=words.len());
                words.insert(at, tok);
            }
        }
        words.join(" ")
    }
}

/// Deterministic in `spec.seed`. Every transaction links one labeled user
/// with an outsider whose name is not in the name corpus.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let names = NameCorpus::bundled_sample();
    let female = names.names_with(GenderGuess::Female, "US");
    let male = names.names_with(GenderGuess::Male, "US");
    if female.is_empty() || male.is_empty() {
        return Err(SynthError::InvalidSpec("bundled name table lacks male or female names".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth"));
    let maker = PostMaker::new(spec);
    let n_users = 2 * spec.users_per_class;
    let n_outsiders = (n_users / 4).max(1);
    let width = n_users.to_string().len().max(4);
    let outsider = |i: usize| Party { id: format!("x{i:0width$}"), name: format!("Outsider {i}") };

    let mut classes: Vec<ClassLabel> =
        (0..n_users).map(|i| if i < spec.users_per_class { ClassLabel::A } else { ClassLabel::B }).collect();
    classes.shuffle(&mut rng);

    let t0 = Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap();
    let mut transactions = Vec::new();
    let mut labels = Vec::with_capacity(n_users);
    for (i, &class) in classes.iter().enumerate() {
        let first = match class {
            ClassLabel::A => female.choose(&mut rng),
            ClassLabel::B => male.choose(&mut rng),
        }
        .expect("checked non-empty");
        let me = Party {
            id: format!("u{i:0width$}"),
            name: format!("{} {}", capitalize(first), SURNAMES.choose(&mut rng).expect("const non-empty")),
        };
        labels.push((me.id.clone(), class));
        let n_posts = rng.gen_range(spec.posts_per_user.0..=spec.posts_per_user.1);
        for _ in 0..n_posts {
            let seq = transactions.len();
            let other = outsider(rng.gen_range(0..n_outsiders));
            let (actor, target) = if rng.gen_bool(0.7) { (me.clone(), other) } else { (other, me.clone()) };
            transactions.push(Transaction {
                id: format!("s{seq:08}"),
                created_at: t0 + chrono::Duration::seconds(seq as i64 * 97 + rng.gen_range(0..60)),
                note: maker.note(class, &mut rng),
                kind: if rng.gen_bool(spec.charge_fraction) { TransactionKind::Charge } else { TransactionKind::Payment },
                actor,
                target,
                likes_count: rng.gen_range(0..4),
                comments_count: rng.gen_range(0..2),
                audience: Audience::Public,
            });
        }
    }
    Ok(SynthCorpus { transactions, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use payattr_core::corpus::{histogram_mode, Corpus};

    #[test]
    fn validation() {
        assert!(SynthSpec::default().validate().is_ok());
        assert!(SynthSpec::planted(10, 0.2, 0.2, 8, 0).validate().is_err());
        assert!(SynthSpec::planted(10, 1.1, 0.0, 8, 0).validate().is_err());
        assert!(SynthSpec::planted(0, 0.5, 0.0, 8, 0).validate().is_err());
        assert!(SynthSpec::planted(10, 0.5, 0.0, 0, 0).validate().is_err());
        let mut s = SynthSpec::default();
        s.signal_b.push("rent".into());
        assert!(s.validate().is_err());
    }

    #[test]
    fn length_mode_is_one() {
        let c = generate_synthetic_corpus(&SynthSpec::planted(100, 0.6, 0.1, 8, 3)).unwrap();
        let corpus = Corpus::from_transactions(c.transactions);
        assert_eq!(histogram_mode(&corpus.note_length_histogram()), Some(1));
    }

    #[test]
    fn class_sizes_and_ids() {
        let c = generate_synthetic_corpus(&SynthSpec::planted(7, 0.6, 0.1, 3, 1)).unwrap();
        assert_eq!(c.labels.len(), 14);
        assert_eq!(c.labels.iter().filter(|(_, l)| *l == ClassLabel::A).count(), 7);
        assert_eq!(c.transactions.len(), 42);
    }
}
