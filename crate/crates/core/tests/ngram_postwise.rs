use std::collections::HashSet;

use payattr_core::tokenize::{tokenize_post, NgramRange, TokenizedPost};
use payattr_core::vectorize::fit_vocabulary;
use proptest::prelude::*;

fn users(docs: &[Vec<String>]) -> Vec<Vec<TokenizedPost>> {
    docs.iter().map(|posts| posts.iter().map(|n| tokenize_post(n)).collect()).collect()
}

/// All n-grams lying inside one post, built directly from lemma windows.
fn within_post(posts: &[Vec<TokenizedPost>], max_n: usize) -> HashSet<String> {
    let mut out = HashSet::new();
    for p in posts.iter().flatten() {
        let lemmas: Vec<&str> = p.lemmas().collect();
        for n in 1..=max_n {
            for w in lemmas.windows(n) {
                out.insert(w.join(" "));
            }
        }
    }
    out
}

#[test]
fn adversarial_boundary_bigram_is_absent() {
    let docs = vec![
        vec!["pizza night".to_string(), "rent 🏠".to_string()],
        vec!["night rent".to_string(), "🍕".to_string()],
        vec!["taco".to_string(), "tuesday".to_string()],
    ];
    let u = users(&docs);
    let vocab = fit_vocabulary(&u, NgramRange::new(1, 3).unwrap(), 1).unwrap();
    assert!(vocab.index_of("pizza night").is_some());
    assert!(vocab.index_of("night rent").is_some(), "occurs inside user 2's post");
    assert!(vocab.index_of("taco tuesday").is_none());
    assert!(vocab.index_of("rent 🍕").is_none());
    assert!(vocab.index_of("night rent 🏠").is_none());
    assert_eq!(vocab.document_frequencies()[vocab.index_of("night rent").unwrap()], 1);
}

fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    let word = prop::sample::select(vec!["a", "b", "c", "taco", "🍕", "🍺", ":uber:", "!", "lol"]);
    let post = prop::collection::vec(word, 0..5).prop_map(|w| w.join(" "));
    prop::collection::vec(prop::collection::vec(post, 1..5), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn vocabulary_never_spans_posts(docs in corpus(), high in 2usize..4) {
        let u = users(&docs);
        let vocab = fit_vocabulary(&u, NgramRange::new(1, high).unwrap(), 1).unwrap();
        let allowed = within_post(&u, high);
        for t in vocab.terms() {
            prop_assert!(allowed.contains(t), "{t:?} spans a post boundary");
        }
        prop_assert_eq!(vocab.len(), allowed.len());
    }
}
