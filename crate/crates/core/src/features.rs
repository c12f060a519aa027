//! Socio-linguistic content features per post and structural features per
//! user.

use std::collections::HashSet;
use std::io::Write;

use std::sync::LazyLock;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Role, TransactionKind, UserProfile};
use crate::lexicon::Lexicons;
use crate::scalar::Scalar;
use crate::tokenize::{TokenKind, TokenizedPost};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("features: user {0} has no posts")]
    EmptyProfile(String),
    #[error("features: user {user} has {profile} posts but {tokenized} tokenized notes")]
    PostMismatch { user: String, profile: usize, tokenized: usize },
    #[error("features: csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("features: io failure: {0}")]
    Io(#[from] std::io::Error),
}

pub const CONTENT_FEATURES: [&str; 11] = [
    "emoji",
    "emoticon",
    "venmo_emoji",
    "repeated_chars",
    "excitement",
    "single_exclaim",
    "ellipses",
    "shouting",
    "laughing",
    "omg",
    "curse",
];

pub const STRUCTURAL_FEATURES: [&str; 4] = ["pct_charge", "avg_likes", "avg_len_chars", "avg_len_tokens"];
pub const ACTOR_FEATURE: &str = "pct_as_actor";

/// Per-post occurrence counts, in `CONTENT_FEATURES` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContentCounts {
    pub emoji: u32,
    pub emoticon: u32,
    pub venmo_emoji: u32,
    pub repeated_chars: u32,
    pub excitement: u32,
    pub single_exclaim: u32,
    pub ellipses: u32,
    pub shouting: u32,
    pub laughing: u32,
    pub omg: u32,
    pub curse: u32,
}

impl ContentCounts {
    pub fn as_array(&self) -> [u32; 11] {
        [
            self.emoji,
            self.emoticon,
            self.venmo_emoji,
            self.repeated_chars,
            self.excitement,
            self.single_exclaim,
            self.ellipses,
            self.shouting,
            self.laughing,
            self.omg,
            self.curse,
        ]
    }

    pub fn from_array(a: [u32; 11]) -> Self {
        ContentCounts {
            emoji: a[0],
            emoticon: a[1],
            venmo_emoji: a[2],
            repeated_chars: a[3],
            excitement: a[4],
            single_exclaim: a[5],
            ellipses: a[6],
            shouting: a[7],
            laughing: a[8],
            omg: a[9],
            curse: a[10],
        }
    }
}

static LAUGH_PATTERN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^(?:ha|he){2,}$").unwrap());
static OMG_PATTERN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^o+m+g+$").unwrap());

/// Lexicon-backed content feature detector.
#[derive(Debug, Clone)]
pub struct FeatureDetector {
    curse: HashSet<String>,
    laughing: HashSet<String>,
}

static DEFAULT_DETECTOR: LazyLock<FeatureDetector> = LazyLock::new(|| FeatureDetector::new(Lexicons::bundled()));

impl Default for FeatureDetector {
    fn default() -> Self {
        DEFAULT_DETECTOR.clone()
    }
}

fn has_triple_run(word: &str) -> bool {
    let mut prev = None;
    let mut run = 0;
    for c in word.chars().flat_map(char::to_lowercase) {
        if Some(c) == prev {
            run += 1;
            if run >= 3 {
                return true;
            }
        } else {
            prev = Some(c);
            run = 1;
        }
    }
    false
}

/// Number of maximal runs of `c` with length at least `min`.
fn runs_of(text: &str, c: char, min: usize) -> u32 {
    let mut count = 0;
    let mut run = 0;
    for ch in text.chars().chain(std::iter::once('\0')) {
        if ch == c {
            run += 1;
        } else {
            if run >= min {
                count += 1;
            }
            run = 0;
        }
    }
    count
}

impl FeatureDetector {
    pub fn new(lexicons: &Lexicons) -> Self {
        FeatureDetector { curse: lexicons.curse.clone(), laughing: lexicons.laughing.clone() }
    }

    pub fn bundled() -> &'static FeatureDetector {
        &DEFAULT_DETECTOR
    }

    /// Punctuation features read the raw note; lexical ones read tokens.
    pub fn detect(&self, post: &TokenizedPost) -> ContentCounts {
        let raw = post.raw.as_str();
        let mut c = ContentCounts::default();
        for t in &post.tokens {
            match t.kind {
                TokenKind::Emoji => c.emoji += 1,
                TokenKind::Emoticon => c.emoticon += 1,
                TokenKind::Shortcode => c.venmo_emoji += 1,
                TokenKind::Word => {
                    let lower = t.surface.to_lowercase();
                    if has_triple_run(&t.surface) {
                        c.repeated_chars += 1;
                    }
                    if self.laughing.contains(&lower) || LAUGH_PATTERN.is_match(&t.surface) {
                        c.laughing += 1;
                    }
                    if OMG_PATTERN.is_match(&t.surface) {
                        c.omg += 1;
                    }
                    if self.curse.contains(&lower) {
                        c.curse += 1;
                    }
                }
                _ => {}
            }
        }
        c.excitement = runs_of(raw, '!', 2);
        let bangs = raw.chars().filter(|&ch| ch == '!').count();
        c.single_exclaim = u32::from(bangs == 1 && raw.trim_end().ends_with('!'));
        c.ellipses = raw.chars().filter(|&ch| ch == '\u{2026}').count() as u32 + runs_of(raw, '.', 3);
        let mut alpha = 0usize;
        let mut all_upper = true;
        for ch in raw.chars().filter(|ch| ch.is_alphabetic()) {
            alpha += 1;
            all_upper &= ch.is_uppercase();
        }
        c.shouting = u32::from(alpha >= 2 && all_upper);
        c
    }
}

pub fn detect_content_features(post: &TokenizedPost) -> ContentCounts {
    FeatureDetector::bundled().detect(post)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Adds the fraction of posts where the user initiated the transaction.
    pub include_actor: bool,
}

/// Aggregated per-user features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineeredFeatures<T> {
    pub content_avg: [T; 11],
    pub content_pct: [T; 11],
    pub pct_charge: T,
    pub avg_likes: T,
    pub avg_len_chars: T,
    pub avg_len_tokens: T,
    pub pct_as_actor: Option<T>,
}

impl<T: Scalar> EngineeredFeatures<T> {
    pub fn column_names(options: FeatureOptions) -> Vec<String> {
        let mut names = Vec::with_capacity(27);
        for f in CONTENT_FEATURES {
            names.push(format!("{f}_avg"));
            names.push(format!("{f}_pct"));
        }
        names.extend(STRUCTURAL_FEATURES.iter().map(|s| s.to_string()));
        if options.include_actor {
            names.push(ACTOR_FEATURE.to_string());
        }
        names
    }

    /// Values in `column_names` order.
    pub fn to_row(&self) -> Vec<T> {
        let mut row = Vec::with_capacity(27);
        for i in 0..11 {
            row.push(self.content_avg[i]);
            row.push(self.content_pct[i]);
        }
        row.extend([self.pct_charge, self.avg_likes, self.avg_len_chars, self.avg_len_tokens]);
        row.extend(self.pct_as_actor);
        row
    }
}

/// `posts` must be the tokenized notes of `profile.posts`, in order.
pub fn aggregate_user_features<T: Scalar>(
    corpus: &Corpus,
    profile: &UserProfile,
    posts: &[TokenizedPost],
    detector: &FeatureDetector,
    options: FeatureOptions,
) -> Result<EngineeredFeatures<T>, FeatureError> {
    if profile.posts.is_empty() {
        return Err(FeatureError::EmptyProfile(profile.user_id.clone()));
    }
    if posts.len() != profile.posts.len() {
        return Err(FeatureError::PostMismatch {
            user: profile.user_id.clone(),
            profile: profile.posts.len(),
            tokenized: posts.len(),
        });
    }
    let n = posts.len();
    let mut sums = [0u64; 11];
    let mut containing = [0u64; 11];
    let (mut charges, mut likes, mut chars, mut tokens, mut as_actor) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for ((txn, role), post) in corpus.user_transactions(profile).zip(posts) {
        let counts = detector.detect(post).as_array();
        for i in 0..11 {
            sums[i] += u64::from(counts[i]);
            containing[i] += u64::from(counts[i] > 0);
        }
        charges += u64::from(txn.kind == TransactionKind::Charge);
        likes += txn.likes_count;
        chars += txn.note_len() as u64;
        tokens += post.tokens.len() as u64;
        as_actor += u64::from(role == Role::Actor);
    }
    let nf = T::from_count(n);
    let frac = |x: u64| T::from_f64_lossy(x as f64) / nf;
    Ok(EngineeredFeatures {
        content_avg: sums.map(frac),
        content_pct: containing.map(frac),
        pct_charge: frac(charges),
        avg_likes: frac(likes),
        avg_len_chars: frac(chars),
        avg_len_tokens: frac(tokens),
        pct_as_actor: options.include_actor.then(|| frac(as_actor)),
    })
}

/// Writes one row per user with a `user_id` column followed by
/// `EngineeredFeatures::column_names`.
pub fn write_features_csv<T: Scalar, W: Write>(
    sink: W,
    rows: &[(String, EngineeredFeatures<T>)],
    options: FeatureOptions,
) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["user_id".to_string()];
    header.extend(EngineeredFeatures::<T>::column_names(options));
    w.write_record(&header)?;
    for (user, f) in rows {
        let mut rec = vec![user.clone()];
        rec.extend(f.to_row().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
