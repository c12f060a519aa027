use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TokenizedPost;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("tokenize: invalid n-gram range ({low},{high}); need 1 <= low <= high <= 3")]
pub struct NgramRangeError {
    pub low: usize,
    pub high: usize,
}

/// Inclusive n-gram size range, 1 ≤ low ≤ high ≤ 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(usize, usize)", into = "(usize, usize)")]
pub struct NgramRange {
    low: usize,
    high: usize,
}

impl NgramRange {
    pub const UNIGRAMS: NgramRange = NgramRange { low: 1, high: 1 };
    pub const UNI_BI: NgramRange = NgramRange { low: 1, high: 2 };

    pub fn new(low: usize, high: usize) -> Result<Self, NgramRangeError> {
        if low >= 1 && low <= high && high <= 3 {
            Ok(NgramRange { low, high })
        } else {
            Err(NgramRangeError { low, high })
        }
    }

    pub fn low(self) -> usize {
        self.low
    }

    pub fn high(self) -> usize {
        self.high
    }
}

impl Default for NgramRange {
    fn default() -> Self {
        NgramRange::UNI_BI
    }
}

impl TryFrom<(usize, usize)> for NgramRange {
    type Error = NgramRangeError;

    fn try_from((low, high): (usize, usize)) -> Result<Self, Self::Error> {
        NgramRange::new(low, high)
    }
}

impl From<NgramRange> for (usize, usize) {
    fn from(r: NgramRange) -> Self {
        (r.low, r.high)
    }
}

impl std::fmt::Display for NgramRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.low, self.high)
    }
}

/// N-grams over the lemmas of a single post, emitted by n then position.
pub fn generate_ngrams(post: &TokenizedPost, range: NgramRange) -> Vec<String> {
    let lemmas: Vec<&str> = post.lemmas().collect();
    let mut out = Vec::new();
    for n in range.low..=range.high {
        if n > lemmas.len() {
            break;
        }
        out.extend(lemmas.windows(n).map(|w| w.join(" ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize_post;
    use proptest::prelude::*;

    #[test]
    fn unigrams_then_bigrams() {
        let p = tokenize_post("pizza night");
        assert_eq!(generate_ngrams(&p, NgramRange::UNI_BI), vec!["pizza", "night", "pizza night"]);
    }

    #[test]
    fn single_token_has_no_bigram() {
        let p = tokenize_post("🍕");
        assert_eq!(generate_ngrams(&p, NgramRange::UNI_BI), vec!["🍕"]);
    }

    #[test]
    fn posts_never_join() {
        let a = generate_ngrams(&tokenize_post("a"), NgramRange::UNI_BI);
        let b = generate_ngrams(&tokenize_post("b"), NgramRange::UNI_BI);
        assert!(!a.iter().chain(&b).any(|g| g == "a b"));
    }

    #[test]
    fn range_validation() {
        assert!(NgramRange::new(0, 1).is_err());
        assert!(NgramRange::new(2, 1).is_err());
        assert!(NgramRange::new(1, 4).is_err());
        assert_eq!(NgramRange::new(2, 3).unwrap().high(), 3);
        let r: NgramRange = serde_json::from_str("[1,2]").unwrap();
        assert_eq!(r, NgramRange::UNI_BI);
        assert!(serde_json::from_str::<NgramRange>("[3,1]").is_err());
    }

    proptest! {
        #[test]
        fn count_per_size(note in "[a-z🍕!:\\- ]{0,30}", low in 1usize..=3, span in 0usize..3) {
            let high = (low + span).min(3);
            let p = tokenize_post(&note);
            let grams = generate_ngrams(&p, NgramRange::new(low, high).unwrap());
            let expected: usize = (low..=high).map(|n| (p.tokens.len() + 1).saturating_sub(n)).sum();
            prop_assert_eq!(grams.len(), expected);
        }
    }
}
