use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, FoldPlan};
use crate::corpus::Corpus;
use crate::features::{aggregate_user_features, EngineeredFeatures, FeatureDetector, FeatureOptions};
use crate::label::{ClassLabel, LabeledUser, Task};
use crate::model::{
    read_container, train_gbdt, train_linear_svm, train_mlp, write_container, Classifier, GbdtConfig, MlpConfig, SvmConfig,
};
use crate::scalar::Scalar;
use crate::tokenize::{NgramRange, TokenizedPost, Tokenizer};
use crate::vectorize::{
    assemble_feature_matrix, count_transform, fit_vocabulary, tfidf_transform, ScalerStats, SparseMatrix, Vocabulary,
};

/// Labeled users with their tokenized posts and unscaled engineered rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub task: Task,
    pub user_ids: Vec<String>,
    pub posts: Vec<Vec<TokenizedPost>>,
    pub engineered: Vec<Vec<T>>,
    pub engineered_names: Vec<String>,
    pub labels: Vec<ClassLabel>,
}

impl<T: Scalar> Dataset<T> {
    /// Rows follow `labeled`. Users missing from the corpus are an error.
    pub fn build(
        corpus: &Corpus,
        labeled: &[LabeledUser],
        tokenizer: &Tokenizer,
        detector: &FeatureDetector,
        options: FeatureOptions,
    ) -> Result<Self, EvalError> {
        let task = labeled.first().map_or(Task::Gender, |u| u.task);
        let rows: Vec<(Vec<TokenizedPost>, Vec<T>)> = labeled
            .par_iter()
            .map(|u| {
                let profile = corpus.users.get(&u.user_id).ok_or_else(|| EvalError::UnknownUser(u.user_id.clone()))?;
                let posts: Vec<TokenizedPost> =
                    corpus.user_transactions(profile).map(|(t, _)| tokenizer.tokenize(&t.note)).collect();
                let feats = aggregate_user_features::<T>(corpus, profile, &posts, detector, options)?;
                Ok((posts, feats.to_row()))
            })
            .collect::<Result<_, EvalError>>()?;
        let (posts, engineered) = rows.into_iter().unzip();
        Ok(Dataset {
            task,
            user_ids: labeled.iter().map(|u| u.user_id.clone()).collect(),
            posts,
            engineered,
            engineered_names: EngineeredFeatures::<T>::column_names(options),
            labels: labeled.iter().map(|u| u.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Users per class, keyed by the task's class name.
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for &l in &self.labels {
            *out.entry(self.task.class_name(l).to_string()).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorizerKind {
    Count,
    Tfidf,
}

impl VectorizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VectorizerKind::Count => "count",
            VectorizerKind::Tfidf => "tfidf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Svm,
    Mlp,
    Gbdt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Svm(SvmConfig),
    Mlp(MlpConfig),
    Gbdt(GbdtConfig),
}

impl ClassifierConfig {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierConfig::Svm(_) => ClassifierKind::Svm,
            ClassifierConfig::Mlp(_) => ClassifierKind::Mlp,
            ClassifierConfig::Gbdt(_) => ClassifierKind::Gbdt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub vectorizer: VectorizerKind,
    pub n_range: NgramRange,
    pub min_df: usize,
    pub use_engineered: bool,
    /// L2-normalize count rows (off by default).
    pub normalize_counts: bool,
    pub classifier: ClassifierConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            vectorizer: VectorizerKind::Tfidf,
            n_range: NgramRange::UNI_BI,
            min_df: 2,
            use_engineered: true,
            normalize_counts: false,
            classifier: ClassifierConfig::Svm(SvmConfig::default()),
        }
    }
}

impl PipelineConfig {
    /// Short stable description, e.g. `svm C=1 tfidf (1,2) min_df=2 eng`.
    pub fn key(&self) -> String {
        let clf = match &self.classifier {
            ClassifierConfig::Svm(s) => format!("svm C={}", s.c),
            ClassifierConfig::Mlp(m) => format!("mlp H={}", m.hidden),
            ClassifierConfig::Gbdt(g) => format!("gbdt rounds={} depth={}", g.rounds, g.max_depth),
        };
        let eng = if self.use_engineered { " eng" } else { "" };
        format!("{clf} {} {} min_df={}{eng}", self.vectorizer.as_str(), self.n_range, self.min_df)
    }
}

/// Every component fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline<T> {
    pub task: Task,
    pub config: PipelineConfig,
    pub vocabulary: Vocabulary,
    pub scaler: Option<ScalerStats<T>>,
    pub engineered_names: Vec<String>,
    pub classifier: Classifier<T>,
}

pub const PIPELINE_KIND: &str = "pipeline";

impl<T: Scalar> FittedPipeline<T> {
    /// Text columns then, if used, engineered columns.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.vocabulary.terms().to_vec();
        if self.scaler.is_some() {
            names.extend(self.engineered_names.iter().cloned());
        }
        names
    }

    pub fn transform<P: AsRef<[TokenizedPost]> + Sync>(&self, posts: &[P], engineered: &[Vec<T>]) -> Result<SparseMatrix<T>, EvalError> {
        text_and_engineered(&self.config, &self.vocabulary, posts, engineered, self.scaler.as_ref()).map(|(m, _)| m)
    }

    pub fn predict<P: AsRef<[TokenizedPost]> + Sync>(&self, posts: &[P], engineered: &[Vec<T>]) -> Result<Vec<ClassLabel>, EvalError> {
        let x = self.transform(posts, engineered)?;
        Ok(self
            .classifier
            .predict_binary(&x)?
            .into_iter()
            .map(|b| if b == 1 { ClassLabel::A } else { ClassLabel::B })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        Ok(write_container(path, PIPELINE_KIND, T::NAME, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Ok(read_container(path, Some(PIPELINE_KIND), T::NAME)?.1)
    }
}

fn text_and_engineered<T: Scalar, P: AsRef<[TokenizedPost]> + Sync>(
    config: &PipelineConfig,
    vocab: &Vocabulary,
    posts: &[P],
    engineered: &[Vec<T>],
    scaler: Option<&ScalerStats<T>>,
) -> Result<(SparseMatrix<T>, Option<ScalerStats<T>>), EvalError> {
    let counts = count_transform::<T, P>(posts, vocab);
    let text = match config.vectorizer {
        VectorizerKind::Tfidf => tfidf_transform(&counts, vocab)?,
        VectorizerKind::Count if config.normalize_counts => {
            let mut c = counts;
            c.l2_normalize_rows();
            c
        }
        VectorizerKind::Count => counts,
    };
    if !config.use_engineered {
        return Ok((text, None));
    }
    let (m, stats) = assemble_feature_matrix(&text, engineered, scaler)?;
    Ok((m, Some(stats)))
}

/// Fits vocabulary, scaler and classifier on `rows` of `data`.
pub fn fit_pipeline<T: Scalar>(data: &Dataset<T>, rows: &[usize], config: &PipelineConfig) -> Result<FittedPipeline<T>, EvalError> {
    let posts: Vec<&[TokenizedPost]> = rows.iter().map(|&r| data.posts[r].as_slice()).collect();
    let engineered: Vec<Vec<T>> =
        if config.use_engineered { rows.iter().map(|&r| data.engineered[r].clone()).collect() } else { Vec::new() };
    let vocab = fit_vocabulary(&posts, config.n_range, config.min_df)?;
    let (x, scaler) = text_and_engineered(config, &vocab, &posts, &engineered, None)?;
    let labels: Vec<ClassLabel> = rows.iter().map(|&r| data.labels[r]).collect();
    let mut names = vocab.terms().to_vec();
    if scaler.is_some() {
        names.extend(data.engineered_names.iter().cloned());
    }
    let classifier = match &config.classifier {
        ClassifierConfig::Svm(c) => {
            let y: Vec<i8> = labels.iter().map(|l| l.signed()).collect();
            Classifier::Svm(train_linear_svm(&x, &y, c, names)?)
        }
        ClassifierConfig::Mlp(c) => {
            let y: Vec<u8> = labels.iter().map(|l| l.binary()).collect();
            Classifier::Mlp(train_mlp(&x, &y, c)?)
        }
        ClassifierConfig::Gbdt(c) => {
            let y: Vec<u8> = labels.iter().map(|l| l.binary()).collect();
            Classifier::Gbdt(train_gbdt(&x, &y, c)?)
        }
    };
    Ok(FittedPipeline {
        task: data.task,
        config: *config,
        vocabulary: vocab,
        scaler,
        engineered_names: data.engineered_names.clone(),
        classifier,
    })
}

/// Rows are actual class, columns predicted class, in A, B order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub matrix: [[usize; 2]; 2],
}

impl Confusion {
    fn idx(l: ClassLabel) -> usize {
        match l {
            ClassLabel::A => 0,
            ClassLabel::B => 1,
        }
    }

    pub fn add(&mut self, actual: ClassLabel, predicted: ClassLabel) {
        self.matrix[Self::idx(actual)][Self::idx(predicted)] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for i in 0..2 {
            for j in 0..2 {
                self.matrix[i][j] += other.matrix[i][j];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub confusion: Confusion,
}

/// Accuracy on each held-out fold with everything refitted on the rest.
/// Folds run in parallel; results keep fold order.
pub fn cross_validate<T: Scalar>(data: &Dataset<T>, plan: &FoldPlan, config: &PipelineConfig) -> Result<CvResult, EvalError> {
    if plan.n_rows() != data.len() {
        return Err(EvalError::PlanMismatch { plan: plan.n_rows(), data: data.len() });
    }
    let per_fold: Vec<(f64, Confusion)> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let fitted = fit_pipeline(data, &plan.train_rows(f), config)?;
            let test = plan.test_rows(f);
            let posts: Vec<&[TokenizedPost]> = test.iter().map(|&r| data.posts[r].as_slice()).collect();
            let engineered: Vec<Vec<T>> = test.iter().map(|&r| data.engineered[r].clone()).collect();
            let predicted = fitted.predict(&posts, &engineered)?;
            let mut confusion = Confusion::default();
            let mut correct = 0usize;
            for (&r, &p) in test.iter().zip(&predicted) {
                confusion.add(data.labels[r], p);
                correct += usize::from(data.labels[r] == p);
            }
            Ok((correct as f64 / test.len() as f64, confusion))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut confusion = Confusion::default();
    for (_, c) in &per_fold {
        confusion.merge(c);
    }
    let fold_accuracies: Vec<f64> = per_fold.into_iter().map(|(a, _)| a).collect();
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(CvResult { fold_accuracies, mean_accuracy, confusion })
}
