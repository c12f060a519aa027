use std::collections::HashMap;

/// Lowercasing lemmatizer: exception table first, then English suffix rules.
#[derive(Debug, Clone, Default)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
}

impl Lemmatizer {
    pub fn new(exceptions: HashMap<String, String>) -> Self {
        Self { exceptions }
    }

    pub fn lemma(&self, word: &str) -> String {
        let lower = word.to_lowercase();
        if let Some(l) = self.exceptions.get(&lower) {
            return l.clone();
        }
        if !lower.bytes().all(|b| b.is_ascii_lowercase()) {
            return lower;
        }
        strip_suffix(&lower)
    }
}

fn is_vowel_at(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => true,
        b'y' => i > 0 && !is_vowel_at(w, i - 1),
        _ => false,
    }
}

fn has_vowel(w: &str) -> bool {
    let b = w.as_bytes();
    (0..b.len()).any(|i| is_vowel_at(b, i))
}

/// Number of vowel→consonant transitions.
fn measure(w: &str) -> usize {
    let b = w.as_bytes();
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..b.len() {
        let v = is_vowel_at(b, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

fn ends_cvc(w: &str) -> bool {
    let b = w.as_bytes();
    let n = b.len();
    n >= 3
        && !is_vowel_at(b, n - 3)
        && is_vowel_at(b, n - 2)
        && !is_vowel_at(b, n - 1)
        && !matches!(b[n - 1], b'w' | b'x' | b'y')
}

fn ends_double_consonant(w: &str) -> bool {
    let b = w.as_bytes();
    let n = b.len();
    n >= 2 && b[n - 1] == b[n - 2] && !is_vowel_at(b, n - 1)
}

/// Repairs a stem left by removing -ing/-ed.
fn restore_stem(stem: &str) -> String {
    if ends_double_consonant(stem) && !matches!(stem.as_bytes()[stem.len() - 1], b'l' | b's' | b'z') {
        return stem[..stem.len() - 1].to_string();
    }
    if ["bl", "iz", "dg", "rg"].iter().any(|s| stem.ends_with(s)) || (measure(stem) == 1 && ends_cvc(stem)) {
        return format!("{stem}e");
    }
    stem.to_string()
}

fn strip_suffix(w: &str) -> String {
    let n = w.len();
    if n > 4 && w.ends_with("ies") {
        return format!("{}y", &w[..n - 3]);
    }
    if ["sses", "xes", "ches", "shes", "zzes"].iter().any(|s| w.ends_with(s)) {
        return w[..n - 2].to_string();
    }
    if n > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..n - 1].to_string();
    }
    if n >= 5 && w.ends_with("ing") {
        let stem = &w[..n - 3];
        if has_vowel(stem) {
            return restore_stem(stem);
        }
        return w.to_string();
    }
    if n >= 4 && w.ends_with("ed") {
        if n > 4 && w.ends_with("ied") {
            return format!("{}y", &w[..n - 3]);
        }
        if w.ends_with("eed") {
            return w[..n - 1].to_string();
        }
        let stem = &w[..n - 2];
        if has_vowel(stem) {
            return restore_stem(stem);
        }
    }
    w.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Lexicons;

    fn lem() -> Lemmatizer {
        Lemmatizer::new(Lexicons::bundled().lemma_exceptions.clone())
    }

    #[test]
    fn suffix_rules() {
        let l = lem();
        let cases = [
            ("Drinks", "drink"),
            ("parties", "party"),
            ("groceries", "grocery"),
            ("boxes", "box"),
            ("lunches", "lunch"),
            ("running", "run"),
            ("making", "make"),
            ("eating", "eat"),
            ("visiting", "visit"),
            ("played", "play"),
            ("baked", "bake"),
            ("stopped", "stop"),
            ("tried", "try"),
            ("agreed", "agree"),
            ("falling", "fall"),
            ("shoes", "shoe"),
            ("bros", "bro"),
            ("pizza", "pizza"),
            ("sing", "sing"),
        ];
        for (w, want) in cases {
            assert_eq!(l.lemma(w), want, "{w}");
        }
    }

    #[test]
    fn drinks_is_not_in_exception_table() {
        assert!(!Lexicons::bundled().lemma_exceptions.contains_key("drinks"));
    }

    #[test]
    fn exceptions_win() {
        let l = lem();
        assert_eq!(l.lemma("went"), "go");
        assert_eq!(l.lemma("Women"), "woman");
        assert_eq!(l.lemma("morning"), "morning");
        assert_eq!(l.lemma("gas"), "gas");
        assert_eq!(l.lemma("cookies"), "cookie");
    }

    #[test]
    fn non_ascii_only_lowercased() {
        assert_eq!(lem().lemma("CAFÉS"), "cafés");
    }
}
