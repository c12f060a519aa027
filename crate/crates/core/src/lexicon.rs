//! Word lists used by the tokenizer and the content-feature detectors.
//!
//! Bundled defaults are compiled in; any of them can be replaced by a file of
//! the same name in a data directory.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use std::sync::LazyLock;
use thiserror::Error;

pub const EMOTICONS_FILE: &str = "emoticons.txt";
pub const LEMMA_EXCEPTIONS_FILE: &str = "lemma_exceptions.tsv";
pub const CURSE_FILE: &str = "curse_words.txt";
pub const LAUGHING_FILE: &str = "laughing.txt";

const BUNDLED_EMOTICONS: &str = include_str!("../data/emoticons.txt");
const BUNDLED_LEMMA_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");
const BUNDLED_CURSE: &str = include_str!("../data/curse_words.txt");
const BUNDLED_LAUGHING: &str = include_str!("../data/laughing.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon: cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("lexicon: {file} line {line}: expected two tab-separated fields")]
    BadRow { file: String, line: usize },
}

#[derive(Debug, Clone)]
pub struct Lexicons {
    pub emoticons: Vec<String>,
    pub lemma_exceptions: HashMap<String, String>,
    pub curse: HashSet<String>,
    pub laughing: HashSet<String>,
}

static BUNDLED: LazyLock<Lexicons> = LazyLock::new(|| Lexicons {
    emoticons: parse_list(BUNDLED_EMOTICONS),
    lemma_exceptions: parse_pairs(BUNDLED_LEMMA_EXCEPTIONS, LEMMA_EXCEPTIONS_FILE)
        .expect("bundled lemma table is well formed"),
    curse: parse_list(BUNDLED_CURSE).into_iter().map(|w| w.to_lowercase()).collect(),
    laughing: parse_list(BUNDLED_LAUGHING).into_iter().map(|w| w.to_lowercase()).collect(),
});

impl Default for Lexicons {
    fn default() -> Self {
        BUNDLED.clone()
    }
}

impl Lexicons {
    pub fn bundled() -> &'static Lexicons {
        &BUNDLED
    }

    /// Loads overrides from `dir`; files that are absent fall back to the
    /// bundled lists.
    pub fn from_dir(dir: &Path) -> Result<Self, LexiconError> {
        let mut lex = Self::default();
        if let Some(text) = read_optional(&dir.join(EMOTICONS_FILE))? {
            lex.emoticons = parse_list(&text);
        }
        if let Some(text) = read_optional(&dir.join(LEMMA_EXCEPTIONS_FILE))? {
            lex.lemma_exceptions = parse_pairs(&text, LEMMA_EXCEPTIONS_FILE)?;
        }
        if let Some(text) = read_optional(&dir.join(CURSE_FILE))? {
            lex.curse = parse_list(&text).into_iter().map(|w| w.to_lowercase()).collect();
        }
        if let Some(text) = read_optional(&dir.join(LAUGHING_FILE))? {
            lex.laughing = parse_list(&text).into_iter().map(|w| w.to_lowercase()).collect();
        }
        Ok(lex)
    }
}

fn read_optional(path: &Path) -> Result<Option<String>, LexiconError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(LexiconError::Io { path: path.display().to_string(), source }),
    }
}

/// One entry per line; blank lines and `#` comments skipped.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

pub fn parse_pairs(text: &str, file: &str) -> Result<HashMap<String, String>, LexiconError> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(k), Some(v)) if !k.is_empty() && !v.is_empty() => {
                map.entry(k.to_lowercase()).or_insert_with(|| v.to_lowercase());
            }
            _ => return Err(LexiconError::BadRow { file: file.into(), line: i + 1 }),
        }
    }
    Ok(map)
}
