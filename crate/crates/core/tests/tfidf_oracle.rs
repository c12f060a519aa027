use payattr_core::tokenize::{tokenize_post, NgramRange, TokenizedPost};
use payattr_core::vectorize::{count_transform, fit_vocabulary, tfidf_transform, SparseMatrix};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    users: Vec<Vec<String>>,
    terms: Vec<String>,
    expected: Vec<Vec<f64>>,
}

fn fixture() -> Fixture {
    serde_json::from_str(include_str!("fixtures/tfidf_fixture.json")).unwrap()
}

/// Dense brute force over whitespace-split words: every entry from the
/// textbook definition, no shared code with the library.
fn brute_force(users: &[Vec<String>], terms: &[String]) -> Vec<Vec<f64>> {
    let words: Vec<Vec<&str>> =
        users.iter().map(|posts| posts.iter().flat_map(|p| p.split_whitespace()).collect()).collect();
    let n = users.len() as f64;
    let mut out = Vec::new();
    for doc in &words {
        let mut row = Vec::new();
        for t in terms {
            let tf = doc.iter().filter(|w| *w == t).count() as f64;
            let df = words.iter().filter(|d| d.contains(&t.as_str())).count() as f64;
            row.push(tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0));
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.push(row.into_iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect());
    }
    out
}

fn library(users: &[Vec<String>]) -> (Vec<String>, SparseMatrix<f64>) {
    let posts: Vec<Vec<TokenizedPost>> = users.iter().map(|u| u.iter().map(|n| tokenize_post(n)).collect()).collect();
    let vocab = fit_vocabulary(&posts, NgramRange::UNIGRAMS, 1).unwrap();
    let m = tfidf_transform(&count_transform::<f64, _>(&posts, &vocab), &vocab).unwrap();
    (vocab.terms().to_vec(), m)
}

#[test]
fn matches_brute_force_and_frozen_values() {
    let fx = fixture();
    let (terms, m) = library(&fx.users);
    assert_eq!(terms, fx.terms);
    assert_eq!((m.rows(), m.cols()), (5, 12));
    let oracle = brute_force(&fx.users, &fx.terms);
    let dense = m.to_dense();
    for r in 0..5 {
        for c in 0..12 {
            assert!((dense[r][c] - oracle[r][c]).abs() <= 1e-9, "({r},{c}) {} vs {}", dense[r][c], oracle[r][c]);
            assert!((dense[r][c] - fx.expected[r][c]).abs() <= 1e-9, "({r},{c}) frozen");
        }
    }
}

#[test]
fn single_precision_tracks_the_oracle() {
    let fx = fixture();
    let posts: Vec<Vec<TokenizedPost>> = fx.users.iter().map(|u| u.iter().map(|n| tokenize_post(n)).collect()).collect();
    let vocab = fit_vocabulary(&posts, NgramRange::UNIGRAMS, 1).unwrap();
    let m = tfidf_transform(&count_transform::<f32, _>(&posts, &vocab), &vocab).unwrap();
    for (r, row) in m.to_dense().iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert!((f64::from(*v) - fx.expected[r][c]).abs() <= 1e-6);
        }
    }
}

#[test]
fn brute_force_agrees_on_random_word_corpora() {
    use rand::{Rng, SeedableRng};
    let pool = ["rent", "pizza", "beer", "uber", "wine", "taco", "cab", "tip"];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let users: Vec<Vec<String>> = (0..rng.gen_range(1..7))
            .map(|_| {
                (0..rng.gen_range(1..4))
                    .map(|_| (0..rng.gen_range(1..5)).map(|_| pool[rng.gen_range(0..pool.len())]).collect::<Vec<_>>().join(" "))
                    .collect()
            })
            .collect();
        let (terms, m) = library(&users);
        let oracle = brute_force(&users, &terms);
        for (r, row) in m.to_dense().iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((v - oracle[r][c]).abs() <= 1e-9);
            }
        }
    }
}
