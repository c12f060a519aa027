use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use payattr_core::corpus::{histogram_mode, load_transactions, Corpus, ParseMode, Transaction};
use payattr_core::eval::{
    balance_classes, fit_pipeline, grid_search, stratified_kfold, ClassifierConfig, Dataset, EvalReport, FittedPipeline,
    GridSpec, PipelineConfig, VectorizerKind,
};
use payattr_core::features::{aggregate_user_features, EngineeredFeatures, FeatureDetector, FeatureOptions};
use payattr_core::label::{
    build_labeled_dataset, extract_first_name, guess_gender, ClassLabel, LabelOptions, LabeledUser, NameCorpus, Task,
};
use payattr_core::lexicon::Lexicons;
use payattr_core::model::{top_coefficients, Classifier, GbdtConfig, MlpConfig, SvmConfig};
use payattr_core::seed::derive_seed;
use payattr_core::tokenize::{NgramRange, TokenizedPost, Tokenizer};
use payattr_core::vectorize::{count_transform, fit_vocabulary, tfidf_transform};
use payattr_harvest::{
    crawl_users, read_id_list, run_mock_server, ClientConfig, CrawlConfig, HarvestClient, MockConfig, RateLimit,
};
use serde::Serialize;

use crate::config::{FileConfig, HarvestSettings, Paths, DATA_DIR_ENV};
use crate::synth::generate_synthetic_corpus;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "payattr", version, about = "Latent attribute inference from payment notes")]
pub struct Cli {
    /// JSON file overriding built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Relative paths are resolved against this directory.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-signal corpus and its label file.
    Synth(SynthArgs),
    /// Validate, deduplicate and optionally filter a transaction file.
    Ingest(IngestArgs),
    /// Note-length histogram as CSV.
    Stats(StatsArgs),
    /// Per-user engineered features, optionally the n-gram matrix too.
    Featurize(FeaturizeArgs),
    /// Attach gender or political labels to users.
    Label(LabelArgs),
    /// Fit one pipeline on all labeled users and save it.
    Train(TrainArgs),
    /// Stratified k-fold grid search with a JSON report.
    Evaluate(EvaluateArgs),
    /// Largest SVM weights per class.
    ReportCoefficients(CoefficientArgs),
    /// Collect transactions from a feed API.
    #[command(subcommand)]
    Harvest(HarvestCommand),
    /// Serve a corpus through the mock feed API.
    ServeMock(ServeMockArgs),
    /// Print how a note is tokenized.
    TokenizeDebug(TokenizeDebugArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Political label file (class A = democrat).
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub users_per_class: Option<usize>,
    /// Posts per user; overrides any range from the config file.
    #[arg(long)]
    pub posts: Option<usize>,
    #[arg(long)]
    pub p_signal: Option<f64>,
    #[arg(long)]
    pub p_noise: Option<f64>,
    #[arg(long)]
    pub emoji_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fail on the first malformed line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Keep only transactions of users with at least this many posts.
    #[arg(long, default_value_t = 1)]
    pub min_posts: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub include_actor: bool,
    /// Vocabulary TSV (term, index, df).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Coordinate-format matrix; a `.json` sidecar lists rows and columns.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VectorizerArg::Tfidf)]
    pub vectorizer: VectorizerArg,
    #[arg(long, value_parser = parse_range, default_value = "1,2")]
    pub n_range: NgramRange,
    #[arg(long, default_value_t = 2)]
    pub min_df: usize,
}

#[derive(Debug, Args, Clone)]
pub struct LabelSource {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// `user_id,label` file; required for politics, optional for gender.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Name-frequency TSV; defaults to the bundled sample.
    #[arg(long)]
    pub names: Option<PathBuf>,
    #[arg(long)]
    pub region: Option<String>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub source: LabelSource,
    #[arg(long)]
    pub out: PathBuf,
    /// Gender only: every user's first name and guessed category.
    #[arg(long)]
    pub guesses: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct PipelineFlags {
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    #[arg(long, value_enum)]
    pub vectorizer: Option<VectorizerArg>,
    #[arg(long, value_parser = parse_range)]
    pub n_range: Option<NgramRange>,
    #[arg(long)]
    pub min_df: Option<usize>,
    /// SVM regularization.
    #[arg(long = "c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub no_engineered: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub source: LabelSource,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_balance: bool,
    #[arg(long)]
    pub include_actor: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub source: LabelSource,
    /// Grid JSON; without it the single pipeline given by the flags is scored.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: PathBuf,
    /// Where to save the best pipeline refitted on all users.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub no_balance: bool,
    #[arg(long)]
    pub include_actor: bool,
}

#[derive(Debug, Args)]
pub struct CoefficientArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(short, long, default_value_t = 15)]
    pub k: usize,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ClientFlags {
    #[arg(long)]
    pub endpoint: String,
    /// Requests per second.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub burst: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum HarvestCommand {
    /// Poll the public feed.
    Feed {
        #[command(flatten)]
        client: ClientFlags,
        #[arg(long, default_value_t = 1)]
        pages: usize,
        /// Seconds between polls; defaults to the server's refresh interval.
        #[arg(long)]
        poll_secs: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fetch the full history of listed users, resumable via the checkpoint.
    Users {
        #[command(flatten)]
        client: ClientFlags,
        /// One user id per line.
        #[arg(long)]
        ids: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Look up a user id from a profile page.
    Resolve {
        #[command(flatten)]
        client: ClientFlags,
        #[arg(long)]
        username: String,
    },
}

#[derive(Debug, Args)]
pub struct ServeMockArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long)]
    pub page_size: Option<usize>,
    #[arg(long)]
    pub refresh_secs: Option<f64>,
    /// Server-side limit in requests per second.
    #[arg(long)]
    pub rate_limit: Option<f64>,
    #[arg(long)]
    pub burst: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TokenizeDebugArgs {
    #[arg(long)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Gender,
    Politics,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Gender => Task::Gender,
            TaskArg::Politics => Task::Politics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VectorizerArg {
    Count,
    Tfidf,
}

impl From<VectorizerArg> for VectorizerKind {
    fn from(v: VectorizerArg) -> Self {
        match v {
            VectorizerArg::Count => VectorizerKind::Count,
            VectorizerArg::Tfidf => VectorizerKind::Tfidf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    Svm,
    Mlp,
    Gbdt,
}

fn parse_range(s: &str) -> Result<NgramRange, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LOW,HIGH")?;
    let lo = lo.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let hi = hi.trim().parse::<usize>().map_err(|e| e.to_string())?;
    NgramRange::new(lo, hi).map_err(|e| e.to_string())
}

/// Shared state for one invocation.
pub struct Context {
    pub paths: Paths,
    pub config: FileConfig,
    tokenizer: Tokenizer,
    detector: FeatureDetector,
}

impl Context {
    pub fn new(config_path: Option<&Path>, data_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let paths = Paths { data_dir };
        let config = match config_path {
            Some(p) => FileConfig::load(&paths.resolve(p))?,
            None => FileConfig::default(),
        };
        let lexicons = match &config.lexicons {
            Some(dir) => Lexicons::from_dir(&paths.resolve(dir))?,
            None => Lexicons::bundled().clone(),
        };
        Ok(Context { tokenizer: Tokenizer::new(&lexicons), detector: FeatureDetector::new(&lexicons), paths, config })
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.paths.resolve(p)
    }

    fn root_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.config.seed).unwrap_or(0)
    }

    fn create(&self, p: &Path) -> Result<BufWriter<File>, CliError> {
        let path = self.path(p);
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        Ok(BufWriter::new(File::create(&path).map_err(CliError::io(&path))?))
    }

    fn open(&self, p: &Path) -> Result<BufReader<File>, CliError> {
        let path = self.path(p);
        Ok(BufReader::new(File::open(&path).map_err(CliError::io(&path))?))
    }

    /// File or stdout.
    fn sink(&self, p: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
        Ok(match p {
            Some(p) => Box::new(self.create(p)?),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    pub fn load_corpus(&self, p: &Path, mode: ParseMode) -> Result<(Corpus, usize, usize), CliError> {
        let loaded = load_transactions(self.open(p)?, mode)?;
        Ok((Corpus::from_transactions(loaded.transactions), loaded.skipped, loaded.duplicates))
    }

    fn names(&self, flag: Option<&Path>) -> Result<NameCorpus, CliError> {
        match flag.or(self.config.names.as_deref()) {
            Some(p) => Ok(NameCorpus::from_path(&self.path(p))?),
            None => Ok(NameCorpus::bundled_sample()),
        }
    }

    fn region(&self, flag: Option<&str>) -> String {
        flag.map(str::to_string).or_else(|| self.config.region.clone()).unwrap_or_else(|| "US".to_string())
    }

    /// Labeled users in corpus user order.
    pub fn labeled_users(&self, corpus: &Corpus, source: &LabelSource) -> Result<Vec<LabeledUser>, CliError> {
        let task = Task::from(source.task);
        if let Some(p) = &source.labels {
            let labels = read_class_labels(self.open(p)?, task)?;
            return Ok(corpus
                .users
                .keys()
                .filter_map(|u| labels.get(u).map(|&label| LabeledUser { user_id: u.clone(), label, task }))
                .collect());
        }
        match task {
            Task::Politics => Err(payattr_core::label::LabelError::MissingLabelFile.into()),
            Task::Gender => {
                let names = self.names(source.names.as_deref())?;
                let options = LabelOptions { names: Some(&names), region: self.region(source.region.as_deref()), political: None };
                Ok(build_labeled_dataset(corpus, task, &options)?)
            }
        }
    }

    fn dataset(
        &self,
        corpus: &Corpus,
        labeled: &[LabeledUser],
        balance: bool,
        include_actor: bool,
        root: u64,
    ) -> Result<Dataset<f64>, CliError> {
        let rows = if balance { balance_classes(labeled, derive_seed(root, "balance"))? } else { labeled.to_vec() };
        let include_actor = include_actor || self.config.include_actor.unwrap_or(false);
        Ok(Dataset::build(corpus, &rows, &self.tokenizer, &self.detector, FeatureOptions { include_actor })?)
    }

    fn pipeline(&self, flags: &PipelineFlags, root: u64) -> PipelineConfig {
        let mut p = self.config.pipeline.unwrap_or_default();
        if let Some(v) = flags.vectorizer {
            p.vectorizer = v.into();
        }
        if let Some(r) = flags.n_range {
            p.n_range = r;
        }
        if let Some(m) = flags.min_df {
            p.min_df = m;
        }
        if flags.no_engineered {
            p.use_engineered = false;
        }
        if let Some(kind) = flags.classifier {
            p.classifier = match (kind, p.classifier) {
                (ClassifierArg::Svm, c @ ClassifierConfig::Svm(_)) => c,
                (ClassifierArg::Mlp, c @ ClassifierConfig::Mlp(_)) => c,
                (ClassifierArg::Gbdt, c @ ClassifierConfig::Gbdt(_)) => c,
                (ClassifierArg::Svm, _) => ClassifierConfig::Svm(SvmConfig::default()),
                (ClassifierArg::Mlp, _) => ClassifierConfig::Mlp(MlpConfig::default()),
                (ClassifierArg::Gbdt, _) => ClassifierConfig::Gbdt(GbdtConfig::default()),
            };
        }
        if let (Some(c), ClassifierConfig::Svm(s)) = (flags.c, &mut p.classifier) {
            s.c = c;
        }
        seed_classifier(&mut p.classifier, root);
        p
    }
}

/// Stage seeds for the stochastic learners come from the root seed.
fn seed_classifier(c: &mut ClassifierConfig, root: u64) {
    match c {
        ClassifierConfig::Svm(_) => {}
        ClassifierConfig::Mlp(m) => m.seed = derive_seed(root, "mlp"),
        ClassifierConfig::Gbdt(g) => g.seed = derive_seed(root, "gbdt"),
    }
}

/// `user_id,label` rows; labels are class names of `task`
/// (female/male or democrat/republican). A header row is skipped.
pub fn read_class_labels<R: std::io::Read>(source: R, task: Task) -> Result<BTreeMap<String, ClassLabel>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(source);
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let (Some(user), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(CliError::Labels(format!("row {}: expected two columns", i + 1)));
        };
        let label = label.to_lowercase();
        let class = [ClassLabel::A, ClassLabel::B].into_iter().find(|&c| task.class_name(c) == label);
        match class {
            Some(c) => {
                out.insert(user.to_string(), c);
            }
            None if i == 0 => continue,
            None => return Err(CliError::Labels(format!("row {}: {label:?} is not a {} class", i + 1, task.as_str()))),
        }
    }
    Ok(out)
}

fn print_json<S: Serialize>(value: &S) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(CliError::io("<stdout>"))?;
    Ok(())
}

fn flush(mut w: impl Write, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(CliError::io(path))
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<(), CliError> {
    let mut spec = ctx.config.synth.clone().unwrap_or_default();
    spec.seed = ctx.root_seed(a.seed);
    if let Some(n) = a.users_per_class {
        spec.users_per_class = n;
    }
    if let Some(p) = a.posts {
        spec.posts_per_user = (p, p);
    }
    if let Some(p) = a.p_signal {
        spec.p_signal = p;
    }
    if let Some(p) = a.p_noise {
        spec.p_noise = p;
    }
    if let Some(f) = a.emoji_fraction {
        spec.emoji_fraction = f;
    }
    let corpus = generate_synthetic_corpus(&spec)?;
    corpus.write_jsonl(ctx.create(&a.out)?)?;
    corpus.write_labels_csv(ctx.create(&a.labels)?)?;
    log::info!("wrote {} transactions for {} labeled users", corpus.transactions.len(), corpus.labels.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    transactions: usize,
    users: usize,
    users_kept: usize,
    transactions_kept: usize,
    skipped: usize,
    duplicates: usize,
}

pub fn ingest(ctx: &Context, a: &IngestArgs) -> Result<(), CliError> {
    if a.min_posts == 0 {
        return Err(CliError::Usage("--min-posts must be at least 1".into()));
    }
    let mode = if a.strict { ParseMode::Strict } else { ParseMode::Lenient };
    let (corpus, skipped, duplicates) = ctx.load_corpus(&a.input, mode)?;
    let kept = corpus.filter_min_posts(a.min_posts);
    let referenced: std::collections::BTreeSet<&str> =
        kept.users.values().flat_map(|u| u.posts.iter().map(|p| p.transaction_id.as_str())).collect();
    let txns: Vec<&Transaction> = kept.transactions.values().filter(|t| referenced.contains(t.id.as_str())).collect();
    let mut w = ctx.create(&a.out)?;
    payattr_core::corpus::write_transactions(&mut w, txns.iter().copied())?;
    print_json(&IngestSummary {
        transactions: corpus.transactions.len(),
        users: corpus.users.len(),
        users_kept: kept.users.len(),
        transactions_kept: txns.len(),
        skipped,
        duplicates,
    })
}

pub fn stats(ctx: &Context, a: &StatsArgs) -> Result<(), CliError> {
    let (corpus, _, _) = ctx.load_corpus(&a.input, ParseMode::Strict)?;
    let hist = corpus.note_length_histogram();
    let mut w = csv::Writer::from_writer(ctx.sink(a.out.as_deref())?);
    w.write_record(["length", "count"])?;
    for (len, count) in &hist {
        w.write_record([len.to_string(), count.to_string()])?;
    }
    w.flush().map_err(CliError::io(a.out.clone().unwrap_or_default()))?;
    match histogram_mode(&hist) {
        Some(m) => log::info!("most common note length: {m}"),
        None => log::info!("empty corpus"),
    }
    Ok(())
}

#[derive(Serialize)]
struct MatrixSidecar<'a> {
    rows: usize,
    cols: usize,
    nnz: usize,
    vectorizer: &'static str,
    n_range: NgramRange,
    min_df: usize,
    user_ids: Vec<&'a str>,
    terms: &'a [String],
}

pub fn featurize(ctx: &Context, a: &FeaturizeArgs) -> Result<(), CliError> {
    let (corpus, _, _) = ctx.load_corpus(&a.input, ParseMode::Strict)?;
    let options = FeatureOptions { include_actor: a.include_actor || ctx.config.include_actor.unwrap_or(false) };
    let profiles: Vec<_> = corpus.users.values().collect();
    let posts: Vec<Vec<TokenizedPost>> = profiles
        .iter()
        .map(|p| corpus.user_transactions(p).map(|(t, _)| ctx.tokenizer.tokenize(&t.note)).collect())
        .collect();
    let mut rows = Vec::with_capacity(profiles.len());
    for (p, toks) in profiles.iter().zip(&posts) {
        let f: EngineeredFeatures<f64> = aggregate_user_features(&corpus, p, toks, &ctx.detector, options)?;
        rows.push((p.user_id.clone(), f));
    }
    payattr_core::features::write_features_csv(ctx.create(&a.out)?, &rows, options)?;
    if a.vocab.is_none() && a.matrix.is_none() {
        return Ok(());
    }
    let vocab = fit_vocabulary(&posts, a.n_range, a.min_df)?;
    if let Some(p) = &a.vocab {
        let mut w = ctx.create(p)?;
        vocab.write_tsv(&mut w).map_err(CliError::io(p))?;
        flush(w, p)?;
    }
    if let Some(p) = &a.matrix {
        let counts = count_transform::<f64, _>(&posts, &vocab);
        let m = match a.vectorizer {
            VectorizerArg::Tfidf => tfidf_transform(&counts, &vocab)?,
            VectorizerArg::Count => counts,
        };
        let mut w = ctx.create(p)?;
        m.write_coo(&mut w).map_err(CliError::io(p))?;
        flush(w, p)?;
        let mut side = p.as_os_str().to_owned();
        side.push(".json");
        let side = PathBuf::from(side);
        let sidecar = MatrixSidecar {
            rows: m.rows(),
            cols: m.cols(),
            nnz: m.nnz(),
            vectorizer: VectorizerKind::from(a.vectorizer).as_str(),
            n_range: a.n_range,
            min_df: a.min_df,
            user_ids: profiles.iter().map(|p| p.user_id.as_str()).collect(),
            terms: vocab.terms(),
        };
        let mut w = ctx.create(&side)?;
        serde_json::to_writer_pretty(&mut w, &sidecar)?;
        flush(w, &side)?;
    }
    Ok(())
}

pub fn label(ctx: &Context, a: &LabelArgs) -> Result<(), CliError> {
    let (corpus, _, _) = ctx.load_corpus(&a.input, ParseMode::Strict)?;
    let task = Task::from(a.source.task);
    let labeled = ctx.labeled_users(&corpus, &a.source)?;
    let mut w = csv::Writer::from_writer(ctx.create(&a.out)?);
    w.write_record(["user_id", "label"])?;
    for u in &labeled {
        w.write_record([u.user_id.as_str(), task.class_name(u.label)])?;
    }
    w.flush().map_err(CliError::io(&a.out))?;
    if let (Some(p), Task::Gender) = (&a.guesses, task) {
        let names = ctx.names(a.source.names.as_deref())?;
        let region = ctx.region(a.source.region.as_deref());
        let mut w = csv::Writer::from_writer(ctx.create(p)?);
        w.write_record(["user_id", "display_name", "first_name", "guess"])?;
        for prof in corpus.users.values() {
            let first = extract_first_name(&prof.display_name);
            let guess = guess_gender(&first, &names, &region)?;
            w.write_record([prof.user_id.as_str(), prof.display_name.as_str(), first.as_str(), guess.as_str()])?;
        }
        w.flush().map_err(CliError::io(p))?;
    }
    let counts = labeled.iter().fold(BTreeMap::new(), |mut m, u| {
        *m.entry(task.class_name(u.label)).or_insert(0usize) += 1;
        m
    });
    print_json(&counts)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    task: Task,
    n_users: usize,
    class_counts: BTreeMap<String, usize>,
    config: String,
    train_accuracy: f64,
    features: usize,
}

/// Fits one pipeline on every (balanced) labeled user.
pub fn train(ctx: &Context, a: &TrainArgs) -> Result<FittedPipeline<f64>, CliError> {
    let root = ctx.root_seed(a.seed);
    let (corpus, _, _) = ctx.load_corpus(&a.input, ParseMode::Strict)?;
    let labeled = ctx.labeled_users(&corpus, &a.source)?;
    let balance = !a.no_balance && ctx.config.balance.unwrap_or(true);
    let data = ctx.dataset(&corpus, &labeled, balance, a.include_actor, root)?;
    let config = ctx.pipeline(&a.pipeline, root);
    let all: Vec<usize> = (0..data.len()).collect();
    let fitted = fit_pipeline(&data, &all, &config)?;
    let predicted = fitted.predict(&data.posts, &data.engineered)?;
    let correct = predicted.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    fitted.save(&ctx.path(&a.model))?;
    print_json(&TrainSummary {
        task: data.task,
        n_users: data.len(),
        class_counts: data.class_counts(),
        config: config.key(),
        train_accuracy: correct as f64 / data.len().max(1) as f64,
        features: fitted.feature_names().len(),
    })?;
    Ok(fitted)
}

/// Runs the grid and writes the report; returns it too.
pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<EvalReport, CliError> {
    let root = ctx.root_seed(a.seed);
    let (corpus, _, _) = ctx.load_corpus(&a.input, ParseMode::Strict)?;
    let labeled = ctx.labeled_users(&corpus, &a.source)?;
    let balance = !a.no_balance && ctx.config.balance.unwrap_or(true);
    let data = ctx.dataset(&corpus, &labeled, balance, a.include_actor, root)?;
    let mut grid = match &a.grid {
        Some(p) => serde_json::from_reader(ctx.open(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => match &ctx.config.grid {
            Some(g) => g.clone(),
            None => GridSpec::single(&ctx.pipeline(&a.pipeline, root)),
        },
    };
    grid.mlp.seed = derive_seed(root, "mlp");
    grid.gbdt.seed = derive_seed(root, "gbdt");
    let folds = a.folds.or(ctx.config.folds).unwrap_or(5);
    let plan = stratified_kfold(&data.labels, folds, derive_seed(root, "folds"))?;
    let (mut report, best) = grid_search(&grid, &plan, &data)?;
    if let Some(m) = &a.model {
        best.save(&ctx.path(m))?;
        report.model_path = Some(m.display().to_string());
    }
    let mut w = ctx.create(&a.report)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w).map_err(CliError::io(&a.report))?;
    flush(w, &a.report)?;
    log::info!("best: {} ({:.4})", report.best_key, report.best_mean_accuracy);
    Ok(report)
}

/// Rows `feature,weight,class`: k for class A then k for class B.
pub fn coefficient_rows(pipeline: &FittedPipeline<f64>, k: usize) -> Result<Vec<(String, f64, &'static str)>, CliError> {
    let Classifier::Svm(svm) = &pipeline.classifier else {
        return Err(CliError::Usage(format!("coefficients need a linear svm model, got {}", pipeline.classifier.kind())));
    };
    let report = top_coefficients(svm, k);
    let task = pipeline.task;
    let mut rows: Vec<_> = report.positive.into_iter().map(|(f, w)| (f, w, task.class_name(ClassLabel::A))).collect();
    rows.extend(report.negative.into_iter().map(|(f, w)| (f, w, task.class_name(ClassLabel::B))));
    Ok(rows)
}

pub fn report_coefficients(ctx: &Context, a: &CoefficientArgs) -> Result<(), CliError> {
    let pipeline = FittedPipeline::<f64>::load(&ctx.path(&a.model))?;
    let rows = coefficient_rows(&pipeline, a.k)?;
    let mut w = csv::Writer::from_writer(ctx.sink(a.out.as_deref())?);
    w.write_record(["feature", "weight", "class"])?;
    for (f, weight, class) in rows {
        w.write_record([f, weight.to_string(), class.to_string()])?;
    }
    w.flush().map_err(CliError::io(a.out.clone().unwrap_or_default()))?;
    Ok(())
}

fn client(ctx: &Context, flags: &ClientFlags, poll: Option<f64>) -> Result<HarvestClient, CliError> {
    let s = ctx.config.harvest.clone().unwrap_or_default();
    let cfg = ClientConfig {
        rate: flags.rate.unwrap_or(s.rate),
        burst: flags.burst.unwrap_or(s.burst),
        max_retries: flags.max_retries.unwrap_or(s.max_retries),
        poll_interval: poll.map(Duration::from_secs_f64),
        ..ClientConfig::default()
    };
    if !(cfg.rate > 0.0 && cfg.rate.is_finite()) {
        return Err(CliError::Usage("--rate must be positive".into()));
    }
    Ok(HarvestClient::new(&flags.endpoint, cfg)?)
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::io("<runtime>"))
}

pub fn harvest(ctx: &Context, cmd: &HarvestCommand) -> Result<(), CliError> {
    let rt = runtime()?;
    match cmd {
        HarvestCommand::Feed { client: flags, pages, poll_secs, out } => {
            let c = client(ctx, flags, *poll_secs)?;
            let txns = rt.block_on(c.fetch_public_feed(*pages))?;
            payattr_core::corpus::write_transactions(ctx.create(out)?, &txns)?;
            print_json(&serde_json::json!({ "transactions": txns.len(), "requests": c.requests() }))
        }
        HarvestCommand::Users { client: flags, ids, workers, checkpoint, out } => {
            let c = Arc::new(client(ctx, flags, None)?);
            let ids = read_id_list(&ctx.path(ids))?;
            let workers = workers.unwrap_or(ctx.config.harvest.as_ref().map_or(HarvestSettings::default().workers, |h| h.workers));
            let cfg = CrawlConfig { workers, ..CrawlConfig::new(ctx.path(checkpoint), ctx.path(out)) };
            let report = rt.block_on(crawl_users(c, &ids, &cfg))?;
            print_json(&report)
        }
        HarvestCommand::Resolve { client: flags, username } => {
            let c = client(ctx, flags, None)?;
            let id = rt.block_on(c.resolve_user_id(username))?;
            println!("{id}");
            Ok(())
        }
    }
}

pub fn serve_mock(ctx: &Context, a: &ServeMockArgs) -> Result<(), CliError> {
    let (corpus, _, _) = ctx.load_corpus(&a.input, ParseMode::Strict)?;
    let s = ctx.config.mock.clone().unwrap_or_default();
    let bind = a.bind.parse().map_err(|e| CliError::Usage(format!("--bind {}: {e}", a.bind)))?;
    let refresh = a.refresh_secs.unwrap_or(s.refresh_secs);
    if !(refresh >= 0.0 && refresh.is_finite()) {
        return Err(CliError::Usage("--refresh-secs must be non-negative".into()));
    }
    let config = MockConfig {
        page_size: a.page_size.unwrap_or(s.page_size),
        refresh_interval: Duration::from_secs_f64(refresh),
        rate_limit: a.rate_limit.or(s.rate_limit).map(|per_second| RateLimit { per_second, burst: a.burst.unwrap_or(s.burst) }),
        bind,
        ..MockConfig::default()
    };
    let rt = runtime()?;
    rt.block_on(async {
        let handle = run_mock_server(&corpus, config).await?;
        println!("serving {} public transactions at {}", handle.public_transactions(), handle.url());
        tokio::signal::ctrl_c().await.map_err(CliError::io("<signal>"))?;
        handle.shutdown().await;
        Ok(())
    })
}

pub fn tokenize_debug(ctx: &Context, a: &TokenizeDebugArgs) -> Result<(), CliError> {
    let post = ctx.tokenizer.tokenize(&a.note);
    let mut out = std::io::stdout().lock();
    let io = CliError::io("<stdout>");
    let mut text = String::from("surface\tkind\tlemma\n");
    for t in &post.tokens {
        text.push_str(&format!("{}\t{}\t{}\n", t.surface, t.kind.as_str(), t.lemma));
    }
    let counts = ctx.detector.detect(&post).as_array();
    let found: Vec<String> = payattr_core::features::CONTENT_FEATURES
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(n, c)| format!("{n}={c}"))
        .collect();
    text.push_str(&format!("# features: {}\n", if found.is_empty() { "none".to_string() } else { found.join(" ") }));
    out.write_all(text.as_bytes()).map_err(io)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(cli.config.as_deref(), cli.data_dir.clone())?;
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Featurize(a) => featurize(&ctx, a),
        Command::Label(a) => label(&ctx, a),
        Command::Train(a) => train(&ctx, a).map(|_| ()),
        Command::Evaluate(a) => evaluate(&ctx, a).map(|_| ()),
        Command::ReportCoefficients(a) => report_coefficients(&ctx, a),
        Command::Harvest(c) => harvest(&ctx, c),
        Command::ServeMock(a) => serve_mock(&ctx, a),
        Command::TokenizeDebug(a) => tokenize_debug(&ctx, a),
    }
}
