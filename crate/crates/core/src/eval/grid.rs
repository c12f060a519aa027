use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cross_validate, fit_pipeline, ClassifierConfig, ClassifierKind, Confusion, Dataset, EvalError, FittedPipeline};
use super::{FoldPlan, PipelineConfig, VectorizerKind};
use crate::label::Task;
use crate::model::{GbdtConfig, MlpConfig, SvmConfig};
use crate::scalar::Scalar;
use crate::tokenize::NgramRange;

/// Axes of the hyperparameter grid. `C` applies to the SVM only; the
/// per-classifier sections hold every other setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub classifier: Vec<ClassifierKind>,
    pub vectorizer: Vec<VectorizerKind>,
    pub n_range: Vec<NgramRange>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub min_df: usize,
    pub use_engineered: bool,
    pub normalize_counts: bool,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
    pub gbdt: GbdtConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            classifier: vec![ClassifierKind::Svm, ClassifierKind::Mlp, ClassifierKind::Gbdt],
            vectorizer: vec![VectorizerKind::Count, VectorizerKind::Tfidf],
            n_range: vec![NgramRange::UNIGRAMS, NgramRange::UNI_BI],
            c: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            min_df: 2,
            use_engineered: true,
            normalize_counts: false,
            svm: SvmConfig::default(),
            mlp: MlpConfig::default(),
            gbdt: GbdtConfig::default(),
        }
    }
}

impl GridSpec {
    /// A grid with exactly one point.
    pub fn single(config: &PipelineConfig) -> Self {
        let mut g = GridSpec {
            classifier: vec![config.classifier.kind()],
            vectorizer: vec![config.vectorizer],
            n_range: vec![config.n_range],
            min_df: config.min_df,
            use_engineered: config.use_engineered,
            normalize_counts: config.normalize_counts,
            ..GridSpec::default()
        };
        match config.classifier {
            ClassifierConfig::Svm(s) => {
                g.c = vec![s.c];
                g.svm = s;
            }
            ClassifierConfig::Mlp(m) => g.mlp = m,
            ClassifierConfig::Gbdt(b) => g.gbdt = b,
        }
        g
    }

    /// Configs in classifier, vectorizer, n-range, C order.
    pub fn expand(&self) -> Vec<PipelineConfig> {
        let mut out = Vec::new();
        for &clf in &self.classifier {
            for &vectorizer in &self.vectorizer {
                for &n_range in &self.n_range {
                    let base = |classifier| PipelineConfig {
                        vectorizer,
                        n_range,
                        min_df: self.min_df,
                        use_engineered: self.use_engineered,
                        normalize_counts: self.normalize_counts,
                        classifier,
                    };
                    match clf {
                        ClassifierKind::Svm => {
                            for &c in &self.c {
                                out.push(base(ClassifierConfig::Svm(SvmConfig { c, ..self.svm })));
                            }
                        }
                        ClassifierKind::Mlp => out.push(base(ClassifierConfig::Mlp(self.mlp))),
                        ClassifierKind::Gbdt => out.push(base(ClassifierConfig::Gbdt(self.gbdt))),
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub key: String,
    pub config: PipelineConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n_users: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub folds: usize,
    pub fold_seed: u64,
    pub results: Vec<ConfigResult>,
    pub best_index: usize,
    pub best_key: String,
    pub best_mean_accuracy: f64,
    /// Where the refitted best pipeline was written, if anywhere.
    pub model_path: Option<String>,
}

/// Cross-validates every grid point, picks the first with the highest mean
/// accuracy and refits it on all rows.
pub fn grid_search<T: Scalar>(
    grid: &GridSpec,
    plan: &FoldPlan,
    data: &Dataset<T>,
) -> Result<(EvalReport, FittedPipeline<T>), EvalError> {
    let configs = grid.expand();
    if configs.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let results: Vec<ConfigResult> = configs
        .par_iter()
        .map(|config| {
            let cv = cross_validate(data, plan, config)?;
            Ok(ConfigResult {
                key: config.key(),
                config: *config,
                fold_accuracies: cv.fold_accuracies,
                mean_accuracy: cv.mean_accuracy,
                confusion: cv.confusion,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let mut best_index = 0;
    for (i, r) in results.iter().enumerate() {
        if r.mean_accuracy > results[best_index].mean_accuracy {
            best_index = i;
        }
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let fitted = fit_pipeline(data, &all, &results[best_index].config)?;
    let report = EvalReport {
        task: data.task,
        n_users: data.len(),
        class_counts: data.class_counts(),
        folds: plan.k,
        fold_seed: plan.seed,
        best_key: results[best_index].key.clone(),
        best_mean_accuracy: results[best_index].mean_accuracy,
        results,
        best_index,
        model_path: None,
    };
    Ok((report, fitted))
}
