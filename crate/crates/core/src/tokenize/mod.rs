//! Note tokenization: words, Unicode emoji, `:shortcode:` emoji, emoticons,
//! numbers and punctuation, plus post-wise n-gram generation.

mod lemma;
mod ngram;

use std::sync::LazyLock;
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

pub use lemma::Lemmatizer;
pub use ngram::{generate_ngrams, NgramRange, NgramRangeError};

use crate::lexicon::Lexicons;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Emoji,
    Shortcode,
    Emoticon,
    Number,
    Punct,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Word => "word",
            TokenKind::Emoji => "emoji",
            TokenKind::Shortcode => "shortcode",
            TokenKind::Emoticon => "emoticon",
            TokenKind::Number => "number",
            TokenKind::Punct => "punct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub kind: TokenKind,
}

impl Token {
    /// A token whose lemma has not been computed yet (lemma = surface).
    pub fn raw(surface: impl Into<String>, kind: TokenKind) -> Self {
        let surface = surface.into();
        Token { lemma: surface.clone(), surface, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedPost {
    pub raw: String,
    pub tokens: Vec<Token>,
}

impl TokenizedPost {
    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.lemma.as_str())
    }
}

static SHORTCODE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^:[a-z0-9_]+:").unwrap());
static PICTOGRAPHIC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\p{Extended_Pictographic}").unwrap());

const KEYCAP: char = '\u{20E3}';

fn is_regional_indicator(c: char) -> bool {
    ('\u{1F1E6}'..='\u{1F1FF}').contains(&c)
}

/// A grapheme cluster renders as an emoji if it starts with an
/// extended-pictographic or regional-indicator scalar, or is a keycap
/// sequence. ASCII never counts.
pub fn is_emoji_grapheme(g: &str) -> bool {
    let Some(first) = g.chars().next() else { return false };
    if first.is_ascii() {
        return g.contains(KEYCAP);
    }
    is_regional_indicator(first) || PICTOGRAPHIC.is_match(g) || g.contains(KEYCAP)
}

fn is_word_grapheme(g: &str) -> bool {
    g.chars().next().is_some_and(char::is_alphanumeric) && !is_emoji_grapheme(g)
}

/// Splits notes into typed tokens and fills in lemmas.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    emoticons: Vec<String>,
    lemmatizer: Lemmatizer,
}

static DEFAULT_TOKENIZER: LazyLock<Tokenizer> = LazyLock::new(|| Tokenizer::new(Lexicons::bundled()));

impl Default for Tokenizer {
    fn default() -> Self {
        DEFAULT_TOKENIZER.clone()
    }
}

impl Tokenizer {
    pub fn new(lexicons: &Lexicons) -> Self {
        let mut emoticons = lexicons.emoticons.clone();
        // longest first so ":-)" beats ":-"
        emoticons.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        emoticons.dedup();
        Tokenizer { emoticons, lemmatizer: Lemmatizer::new(lexicons.lemma_exceptions.clone()) }
    }

    pub fn bundled() -> &'static Tokenizer {
        &DEFAULT_TOKENIZER
    }

    pub fn lemmatize(&self, token: Token) -> Token {
        match token.kind {
            TokenKind::Word => Token { lemma: self.lemmatizer.lemma(&token.surface), ..token },
            _ => Token { lemma: token.surface.clone(), ..token },
        }
    }

    pub fn tokenize(&self, note: &str) -> TokenizedPost {
        let tokens = self.segment(note).into_iter().map(|t| self.lemmatize(t)).collect();
        TokenizedPost { raw: note.to_string(), tokens }
    }

    fn match_emoticon(&self, rest: &str) -> Option<usize> {
        for e in &self.emoticons {
            if !rest.starts_with(e.as_str()) {
                continue;
            }
            let ends_alnum = e.chars().last().is_some_and(char::is_alphanumeric);
            let next = rest[e.len()..].chars().next();
            if ends_alnum && next.is_some_and(char::is_alphanumeric) {
                continue;
            }
            return Some(e.len());
        }
        None
    }

    /// Segmentation without lemmas.
    pub fn segment(&self, note: &str) -> Vec<Token> {
        let graphemes: Vec<(usize, &str)> = note.grapheme_indices(true).collect();
        let mut tokens = Vec::new();
        let mut i = 0;
        // index of the first grapheme at or after a byte offset
        let advance_to = |from: usize, end: usize| {
            let mut j = from;
            while j < graphemes.len() && graphemes[j].0 < end {
                j += 1;
            }
            j
        };
        let on_boundary = |end: usize| end == note.len() || graphemes.iter().any(|&(o, _)| o == end);

        while i < graphemes.len() {
            let (offset, g) = graphemes[i];
            let rest = &note[offset..];
            if g.chars().all(char::is_whitespace) {
                i += 1;
                continue;
            }
            if let Some(m) = SHORTCODE.find(rest).filter(|m| on_boundary(offset + m.end())) {
                tokens.push(Token::raw(m.as_str(), TokenKind::Shortcode));
                i = advance_to(i, offset + m.end());
                continue;
            }
            if let Some(len) = self.match_emoticon(rest).filter(|&l| on_boundary(offset + l)) {
                tokens.push(Token::raw(&rest[..len], TokenKind::Emoticon));
                i = advance_to(i, offset + len);
                continue;
            }
            if is_emoji_grapheme(g) {
                tokens.push(Token::raw(g, TokenKind::Emoji));
                i += 1;
                continue;
            }
            if is_word_grapheme(g) {
                let (end, kind) = self.scan_word(&graphemes, i);
                let stop = if end < graphemes.len() { graphemes[end].0 } else { note.len() };
                tokens.push(Token::raw(&note[offset..stop], kind));
                i = end;
                continue;
            }
            let mut j = i + 1;
            while j < graphemes.len() && graphemes[j].1 == g {
                j += 1;
            }
            let stop = if j < graphemes.len() { graphemes[j].0 } else { note.len() };
            tokens.push(Token::raw(&note[offset..stop], TokenKind::Punct));
            i = j;
        }
        tokens
    }

    /// Consumes an alphanumeric run starting at `start`. Apostrophes join
    /// letters ("don't"); '.' and ',' join digits ("10.50").
    fn scan_word(&self, graphemes: &[(usize, &str)], start: usize) -> (usize, TokenKind) {
        let mut j = start;
        let mut alphabetic = false;
        while j < graphemes.len() {
            let g = graphemes[j].1;
            if is_word_grapheme(g) {
                alphabetic |= g.chars().next().is_some_and(char::is_alphabetic);
                j += 1;
                continue;
            }
            let joiner = matches!(g, "'" | "\u{2019}" | "." | ",");
            let next_is_word = graphemes.get(j + 1).is_some_and(|(_, n)| is_word_grapheme(n));
            if joiner && next_is_word {
                let digits_only = !alphabetic && graphemes[j + 1].1.chars().all(|c| c.is_ascii_digit());
                let ok = match g {
                    "." | "," => digits_only,
                    _ => alphabetic,
                };
                if ok {
                    j += 1;
                    continue;
                }
            }
            break;
        }
        (j, if alphabetic { TokenKind::Word } else { TokenKind::Number })
    }
}

/// Tokenizes with the bundled lexicons.
pub fn tokenize_post(note: &str) -> TokenizedPost {
    Tokenizer::bundled().tokenize(note)
}

pub fn lemmatize(token: Token) -> Token {
    Tokenizer::bundled().lemmatize(token)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds(note: &str) -> Vec<(String, TokenKind)> {
        tokenize_post(note).tokens.into_iter().map(|t| (t.surface, t.kind)).collect()
    }

    fn k(s: &str, kind: TokenKind) -> (String, TokenKind) {
        (s.to_string(), kind)
    }

    use TokenKind::*;

    #[test]
    fn shortcode_then_word() {
        assert_eq!(kinds(":uber: ride"), vec![k(":uber:", Shortcode), k("ride", Word)]);
    }

    #[test]
    fn empty_note() {
        assert!(tokenize_post("").tokens.is_empty());
        assert!(tokenize_post("   \n").tokens.is_empty());
    }

    #[test]
    fn adjacent_emoji_and_emoticon() {
        assert_eq!(
            kinds("pizza🍕🍕 :-)"),
            vec![k("pizza", Word), k("🍕", Emoji), k("🍕", Emoji), k(":-)", Emoticon)]
        );
    }

    #[test]
    fn zwj_family_is_one_token() {
        assert_eq!(kinds("👩‍👩‍👧"), vec![k("👩‍👩‍👧", Emoji)]);
        assert_eq!(kinds("👍🏽👍"), vec![k("👍🏽", Emoji), k("👍", Emoji)]);
        assert_eq!(kinds("🇺🇸🇫🇷"), vec![k("🇺🇸", Emoji), k("🇫🇷", Emoji)]);
        assert_eq!(kinds("❤️"), vec![k("❤️", Emoji)]);
        assert_eq!(kinds("1️⃣"), vec![k("1️⃣", Emoji)]);
    }

    #[test]
    fn money_amount() {
        assert_eq!(kinds("$10"), vec![k("$", Punct), k("10", Number)]);
        assert_eq!(kinds("10.50 bucks"), vec![k("10.50", Number), k("bucks", Word)]);
    }

    #[test]
    fn punctuation_runs_and_contractions() {
        assert_eq!(kinds("don't!!!"), vec![k("don't", Word), k("!!!", Punct)]);
        assert_eq!(kinds("wait..."), vec![k("wait", Word), k("...", Punct)]);
        assert_eq!(kinds("a,b"), vec![k("a", Word), k(",", Punct), k("b", Word)]);
    }

    #[test]
    fn emoticon_needs_boundary_when_alphanumeric() {
        assert_eq!(kinds(":D"), vec![k(":D", Emoticon)]);
        assert_eq!(kinds(":Dinner"), vec![k(":", Punct), k("Dinner", Word)]);
        assert_eq!(kinds("xD haha"), vec![k("xD", Emoticon), k("haha", Word)]);
        assert_eq!(kinds("<3<3"), vec![k("<3", Emoticon), k("<3", Emoticon)]);
    }

    #[test]
    fn shortcode_pattern_is_lowercase() {
        assert_eq!(kinds(":Uber:"), vec![k(":", Punct), k("Uber", Word), k(":", Punct)]);
        assert_eq!(kinds(":beer_mug::taco:"), vec![k(":beer_mug:", Shortcode), k(":taco:", Shortcode)]);
    }

    #[test]
    fn lemmas_only_change_words() {
        let p = tokenize_post("Drinks 🍕 :uber: PARTIES");
        let lemmas: Vec<_> = p.lemmas().collect();
        assert_eq!(lemmas, vec!["drink", "🍕", ":uber:", "party"]);
        assert_eq!(lemmatize(Token::raw("🍕", Emoji)).lemma, "🍕");
        assert_eq!(lemmatize(Token::raw("parties", Word)).lemma, "party");
    }

    proptest! {
        #[test]
        fn total_and_reconstructs(note in "\\PC{0,40}") {
            let p = tokenize_post(&note);
            let joined: String = p.tokens.iter().flat_map(|t| t.surface.chars()).filter(|c| !c.is_whitespace()).collect();
            let stripped: String = note.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, stripped);
            for t in &p.tokens {
                prop_assert!(!t.surface.is_empty());
                if t.kind == TokenKind::Word {
                    prop_assert_eq!(t.lemma.to_lowercase(), t.lemma.clone());
                } else {
                    prop_assert_eq!(&t.lemma, &t.surface);
                }
            }
            prop_assert_eq!(tokenize_post(&note), p);
        }

        #[test]
        fn emoji_heavy_input_never_panics(s in prop::collection::vec(prop::sample::select(vec![
            "👩", "\u{200d}", "🏽", "\u{fe0f}", "\u{20e3}", "1", ":", "a", " ", "🇺", "!", "'", ".", "é", "\u{301}",
        ]), 0..30)) {
            let note: String = s.concat();
            let _ = tokenize_post(&note);
        }
    }
}
