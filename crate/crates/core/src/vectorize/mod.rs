//! Post-wise n-gram vocabularies, count and TF-IDF user-document matrices,
//! and assembly with standardized engineered features.

mod sparse;

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sparse::SparseMatrix;

use crate::scalar::Scalar;
use crate::tokenize::{generate_ngrams, NgramRange, TokenizedPost};

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("vectorize: cannot fit a vocabulary on zero documents")]
    EmptyCorpus,
    #[error("vectorize: dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vectorize: row count mismatch ({left} vs {right})")]
    RowMismatch { left: usize, right: usize },
    #[error("vectorize: column {col} out of bounds ({cols} columns) in row {row}")]
    IndexOutOfBounds { row: usize, col: usize, cols: usize },
    #[error("vectorize: non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("vectorize: io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("vectorize: json failure: {0}")]
    Json(#[from] serde_json::Error),
}

/// Term → column map with per-term document frequencies. Columns follow
/// lexicographic term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    index: HashMap<String, usize>,
    n_documents: usize,
    n_range: NgramRange,
    min_df: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    df: Vec<usize>,
    n_documents: usize,
    n_range: NgramRange,
    min_df: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { terms: r.terms, df: r.df, index, n_documents: r.n_documents, n_range: r.n_range, min_df: r.min_df }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr { terms: v.terms, df: v.df, n_documents: v.n_documents, n_range: v.n_range, min_df: v.min_df }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, column: usize) -> usize {
        self.df[column]
    }

    pub fn document_frequencies(&self) -> &[usize] {
        &self.df
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    pub fn n_range(&self) -> NgramRange {
        self.n_range
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    /// Smoothed inverse document frequency: ln((1+N)/(1+df)) + 1.
    pub fn idf<T: Scalar>(&self, column: usize) -> T {
        let n = T::from_count(self.n_documents);
        let df = T::from_count(self.df[column]);
        ((T::one() + n) / (T::one() + df)).ln() + T::one()
    }

    /// `term\tindex\tdf` per line.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for (i, (t, df)) in self.terms.iter().zip(&self.df).enumerate() {
            writeln!(sink, "{t}\t{i}\t{df}")?;
        }
        sink.flush()
    }
}

fn user_ngrams(posts: &[TokenizedPost], range: NgramRange) -> impl Iterator<Item = String> + '_ {
    posts.iter().flat_map(move |p| generate_ngrams(p, range))
}

/// Fits a vocabulary where each user is one document and n-grams never cross
/// a post boundary. Terms seen in fewer than `min_df` users are dropped.
pub fn fit_vocabulary<P: AsRef<[TokenizedPost]> + Sync>(
    user_posts: &[P],
    n_range: NgramRange,
    min_df: usize,
) -> Result<Vocabulary, VectorizeError> {
    if user_posts.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    let df: HashMap<String, usize> = user_posts
        .par_iter()
        .map(|posts| user_ngrams(posts.as_ref(), n_range).collect::<HashSet<_>>())
        .fold(HashMap::new, |mut acc, terms| {
            for t in terms {
                *acc.entry(t).or_insert(0) += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (t, c) in b {
                *a.entry(t).or_insert(0) += c;
            }
            a
        });
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|&(_, d)| d >= min_df).collect();
    kept.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let (terms, df): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
    Ok(VocabularyRepr { terms, df, n_documents: user_posts.len(), n_range, min_df }.into())
}

/// Raw in-vocabulary n-gram counts per user.
pub fn count_transform<T: Scalar, P: AsRef<[TokenizedPost]> + Sync>(user_posts: &[P], vocab: &Vocabulary) -> SparseMatrix<T> {
    let rows: Vec<Vec<(usize, T)>> = user_posts
        .par_iter()
        .map(|posts| {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for g in user_ngrams(posts.as_ref(), vocab.n_range) {
                if let Some(c) = vocab.index_of(&g) {
                    *counts.entry(c).or_insert(0) += 1;
                }
            }
            counts.into_iter().map(|(c, n)| (c, T::from_count(n))).collect()
        })
        .collect();
    SparseMatrix::from_rows(vocab.len(), rows).expect("vocabulary columns are in bounds")
}

/// count × idf, then each row scaled to unit L2 norm.
pub fn tfidf_transform<T: Scalar>(counts: &SparseMatrix<T>, vocab: &Vocabulary) -> Result<SparseMatrix<T>, VectorizeError> {
    if counts.cols() != vocab.len() {
        return Err(VectorizeError::DimensionMismatch { expected: vocab.len(), found: counts.cols() });
    }
    let idf: Vec<T> = (0..vocab.len()).map(|c| vocab.idf(c)).collect();
    let mut out = counts.clone();
    out.map_values(|c, v| v * idf[c]);
    out.l2_normalize_rows();
    Ok(out)
}

/// Per-column mean and population standard deviation of engineered
/// features, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalerStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> ScalerStats<T> {
    pub fn fit(rows: &[Vec<T>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() {
            return ScalerStats { mean: vec![T::zero(); width], std: vec![T::zero(); width] };
        }
        let n = T::from_count(rows.len());
        let mut mean = vec![T::zero(); width];
        let mut std = vec![T::zero(); width];
        for j in 0..width {
            let col = rows.iter().map(|r| r[j]);
            let first = rows[0][j];
            if col.clone().all(|v| v == first) {
                mean[j] = first;
                continue;
            }
            let m = col.clone().fold(T::zero(), |a, v| a + v) / n;
            let var = col.fold(T::zero(), |a, v| a + (v - m) * (v - m)) / n;
            mean[j] = m;
            std[j] = var.sqrt();
        }
        ScalerStats { mean, std }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Zero-std columns are passed through unchanged.
    pub fn apply(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| if s > T::zero() { (v - m) / s } else { v })
            .collect()
    }
}

/// Appends z-scored engineered columns after the text columns. Stats are
/// fitted on `engineered` unless supplied.
pub fn assemble_feature_matrix<T: Scalar>(
    text: &SparseMatrix<T>,
    engineered: &[Vec<T>],
    scaler: Option<&ScalerStats<T>>,
) -> Result<(SparseMatrix<T>, ScalerStats<T>), VectorizeError> {
    let width = engineered.first().map_or(0, Vec::len);
    if width == 0 {
        return Ok((text.clone(), scaler.cloned().unwrap_or_default()));
    }
    if engineered.len() != text.rows() {
        return Err(VectorizeError::RowMismatch { left: text.rows(), right: engineered.len() });
    }
    if let Some(row) = engineered.iter().find(|r| r.len() != width) {
        return Err(VectorizeError::DimensionMismatch { expected: width, found: row.len() });
    }
    let stats = match scaler {
        Some(s) if s.width() != width => {
            return Err(VectorizeError::DimensionMismatch { expected: s.width(), found: width });
        }
        Some(s) => s.clone(),
        None => ScalerStats::fit(engineered),
    };
    let scaled: Vec<Vec<T>> = engineered.iter().map(|r| stats.apply(r)).collect();
    let dense = SparseMatrix::from_dense(&scaled)?;
    Ok((text.hstack(&dense)?, stats))
}
