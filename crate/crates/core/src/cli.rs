//! Command-line pipeline: ingest → clean → label → train → evaluate →
//! predict → trends → report. Stages hand data to each other through files.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{
    self, build_vocab, encode, filter_english, filter_keywords, load_tweets, write_tweets, CleanTweet, CorpusError,
    TweetFlag, Vocabulary,
};
use crate::eval::{classification_report, confusion_matrix, render_report, report_csv, EvalError};
use crate::model::{
    build_model, load_model, naive_bayes_baseline, save_model, split_dataset, train, ModelConfig, ModelError,
};
use crate::tensor::AdamConfig;
use crate::tone::{
    chunk_for_service, dominant_tone, label_with_lexicon, label_with_service, synthetic_tweets, tone_distribution,
    HttpTransport, LabelSource, LabeledExample, Lexicon, ServiceClient, ToneCategory, ToneError, ToneMapping,
};
use crate::trends::{self, load_trends, top_hashtags, write_plot_data, TrendError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SERVICE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Service(_) => EXIT_SERVICE,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}
data_error!(CorpusError, ModelError, EvalError, TrendError, std::io::Error, csv::Error);

impl From<ToneError> for CliError {
    fn from(e: ToneError) -> Self {
        match e {
            ToneError::TextTooLarge { .. }
            | ToneError::Lexicon { .. }
            | ToneError::EmptyLexicon
            | ToneError::InvalidScore(_)
            | ToneError::UnknownCode(_)
            | ToneError::Io(_) => CliError::Data(e.to_string()),
            _ => CliError::Service(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "tweet-tone", version, about = "Tweet tone classification pipeline")]
pub struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw tweet CSV, keep keyword matches, write the canonical store
    Ingest(IngestArgs),
    /// Normalize text and split English from non-English tweets
    Clean(CleanArgs),
    /// Assign a tone to every cleaned tweet
    Label(LabelArgs),
    /// Train the classifier on labeled tweets
    Train(TrainArgs),
    /// Score the trained model and the Naive Bayes baseline on the test split
    Evaluate(EvaluateArgs),
    /// Classify one piece of text
    Predict(PredictArgs),
    /// Rank trending hashtags over a date range
    Trends(TrendsArgs),
    /// Write classification reports and the tone distribution
    Report(ReportArgs),
    /// Generate synthetic tweet and trend fixtures
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw tweet CSV (id,created_at,text,hashtags)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Canonical store to write
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated keywords; tweets mentioning none are dropped
    #[arg(long, value_delimiter = ',')]
    pub keywords: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Cleaned English tweets
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Tweets flagged as non-English
    #[arg(long)]
    pub flagged: Option<PathBuf>,
    /// Stopword list, one word per line
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("labeler").required(true).args(["lexicon", "service"])))]
pub struct LabelArgs {
    /// Label offline with the tone lexicon
    #[arg(long)]
    pub lexicon: bool,
    /// Label with the remote tone service (TONE_API_URL, TONE_API_KEY)
    #[arg(long)]
    pub service: bool,
    /// Lexicon CSV (token,category_code,weight); bundled lexicon when absent
    #[arg(long, value_name = "FILE")]
    pub lexicon_file: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Tweets that received no tone
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Labeled tweets
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Weight file to write; vocabulary and split are written beside it
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub text: String,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrendsArgs {
    #[arg(long, default_value_t = 13)]
    pub top: usize,
    /// First day, YYYY-MM-DD
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Last day, YYYY-MM-DD
    #[arg(long)]
    pub to: Option<NaiveDate>,
    /// Only count trends from this location
    #[arg(long)]
    pub location: Option<String>,
    /// Trend archive (date,location,hashtag,rank)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Plot data CSV; defaults to trends.csv in the reports directory
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Labeled tweets, for the tone distribution
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Reports directory holding predictions and receiving outputs
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub tweets: usize,
    #[arg(long, default_value_t = 500)]
    pub trend_rows: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Settings read from the `--config` file. Every field has a default.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub keywords: Vec<String>,
    pub paths: PathsConfig,
    pub model: ModelSection,
    pub service: ServiceSection,
    pub split: SplitSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            keywords: Vec::new(),
            paths: PathsConfig::default(),
            model: ModelSection::default(),
            service: ServiceSection::default(),
            split: SplitSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub store: PathBuf,
    pub clean: PathBuf,
    pub flagged: PathBuf,
    pub labels: PathBuf,
    pub unlabeled: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub hindi_words: Option<PathBuf>,
    pub trends: PathBuf,
    pub model: PathBuf,
    pub reports: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: "tweets.csv".into(),
            store: "work/tweets.csv".into(),
            clean: "work/clean.csv".into(),
            flagged: "work/flagged.csv".into(),
            labels: "work/labels.csv".into(),
            unlabeled: "work/unlabeled.csv".into(),
            lexicon: None,
            stopwords: None,
            hindi_words: None,
            trends: "trends.csv".into(),
            model: "work/model.tpw".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub layer_sizes: [usize; 3],
    pub dropout_rate: f64,
    pub max_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_frequency: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            embed_dim: m.embed_dim,
            layer_sizes: m.layer_sizes,
            dropout_rate: m.dropout_rate,
            max_len: m.max_len,
            batch_size: m.batch_size,
            epochs: m.epochs,
            learning_rate: m.adam.lr,
            min_frequency: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    /// Overrides `TONE_API_URL`.
    pub endpoint: Option<String>,
    pub concurrency: usize,
    /// Attempts per batch, the first one included.
    pub retries: u32,
    /// Extra service tone name → category code entries.
    pub mapping: BTreeMap<String, usize>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            endpoint: None,
            concurrency: 4,
            retries: 3,
            mapping: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    fn model_config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            vocab_size,
            embed_dim: m.embed_dim,
            layer_sizes: m.layer_sizes,
            dropout_rate: m.dropout_rate,
            max_len: m.max_len,
            seed,
            batch_size: m.batch_size,
            epochs: m.epochs,
            adam: AdamConfig {
                lr: m.learning_rate,
                ..AdamConfig::default()
            },
            ..ModelConfig::default()
        }
    }

    fn ratios(&self) -> (f64, f64, f64) {
        (self.split.train, self.split.val, self.split.test)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(&config, a),
        Command::Clean(a) => clean(&config, a),
        Command::Label(a) => label(&config, a),
        Command::Train(a) => train_cmd(&config, a),
        Command::Evaluate(a) => evaluate(&config, a),
        Command::Predict(a) => predict(&config, a),
        Command::Trends(a) => trends_cmd(&config, a),
        Command::Report(a) => report(&config, a),
        Command::Synth(a) => synth(&config, a),
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("input not found: {}", path.display())))
    }
}

/// Writes `body` behind a `# seed=S` line, creating parent directories.
fn write_artifact(path: &Path, seed: u64, body: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = format!("# seed={seed}\n").into_bytes();
    out.extend_from_slice(body);
    std::fs::write(path, out)?;
    Ok(())
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> std::result::Result<(), csv::Error>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    require(path)?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?)
}

/// Reads the `seed=` value from an artifact header.
fn artifact_seed(path: &Path) -> Option<u64> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines().next()?.strip_prefix("# seed=")?.trim().parse().ok()
}

fn ingest(config: &PipelineConfig, a: IngestArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| config.paths.corpus.clone());
    let output = a.output.unwrap_or_else(|| config.paths.store.clone());
    require(&input)?;
    let loaded = load_tweets(&input)?;
    let keywords = a.keywords.unwrap_or_else(|| config.keywords.clone());
    let total = loaded.tweets.len();
    let kept = filter_keywords(loaded.tweets, &keywords);
    let mut buf = Vec::new();
    write_tweets(&mut buf, &kept)?;
    write_artifact(&output, config.seed, &buf)?;
    println!(
        "ingested {} of {total} tweets ({} rows skipped) -> {}",
        kept.len(),
        loaded.skipped,
        output.display()
    );
    Ok(())
}

const CLEAN_HEADER: [&str; 3] = ["id", "text", "flags"];

fn write_clean(path: &Path, seed: u64, tweets: &[CleanTweet]) -> Result<()> {
    let body = csv_bytes(&CLEAN_HEADER, |w| {
        for t in tweets {
            let flags: Vec<&str> = t.flags.iter().map(|f| f.as_str()).collect();
            w.write_record([t.id.as_str(), t.text.as_str(), &flags.join("|")])?;
        }
        Ok(())
    })?;
    write_artifact(path, seed, &body)
}

fn read_clean(path: &Path) -> Result<Vec<CleanTweet>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let mut t = CleanTweet::from_clean_text(row.get(0).unwrap_or(""), row.get(1).unwrap_or("").to_string());
        for f in row.get(2).unwrap_or("").split('|').filter(|s| !s.is_empty()) {
            let flag = TweetFlag::parse(f).ok_or_else(|| CliError::Data(format!("unknown flag `{f}`")))?;
            t.flags.insert(flag);
        }
        out.push(t);
    }
    Ok(out)
}

fn clean(config: &PipelineConfig, a: CleanArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| config.paths.store.clone());
    let output = a.output.unwrap_or_else(|| config.paths.clean.clone());
    let flagged_path = a.flagged.unwrap_or_else(|| config.paths.flagged.clone());
    require(&input)?;
    let stopwords = match a.stopwords.or_else(|| config.paths.stopwords.clone()) {
        Some(p) => {
            require(&p)?;
            corpus::load_word_list(p)?
        }
        None => corpus::default_stopwords(),
    };
    let hindi = match &config.paths.hindi_words {
        Some(p) => {
            require(p)?;
            corpus::load_word_list(p)?
        }
        None => corpus::default_hindi_words(),
    };
    let raw = load_tweets(&input)?;
    let cleaned: Vec<CleanTweet> = raw.tweets.iter().map(|t| CleanTweet::from_raw(&t.id, &t.text)).collect();
    let split = filter_english(cleaned, &stopwords, &hindi)?;
    write_clean(&output, config.seed, &split.kept)?;
    write_clean(&flagged_path, config.seed, &split.flagged)?;
    println!(
        "kept {} English tweets, flagged {} -> {}",
        split.kept.len(),
        split.flagged.len(),
        output.display()
    );
    Ok(())
}

const LABEL_HEADER: [&str; 4] = ["id", "label", "source", "text"];

struct LabeledRow {
    id: String,
    label: ToneCategory,
    source: LabelSource,
    text: String,
}

fn read_labels(path: &Path) -> Result<Vec<LabeledRow>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| CliError::Data(format!("{} row {}: bad {what}", path.display(), i + 1));
        let label = row
            .get(1)
            .and_then(|c| c.parse::<usize>().ok())
            .and_then(ToneCategory::from_code)
            .ok_or_else(|| bad("label"))?;
        let source = match row.get(2) {
            Some("service") => LabelSource::Service,
            Some("lexicon") => LabelSource::Lexicon,
            _ => return Err(bad("source")),
        };
        out.push(LabeledRow {
            id: row.get(0).unwrap_or("").to_string(),
            label,
            source,
            text: row.get(3).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

fn label(config: &PipelineConfig, a: LabelArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| config.paths.clean.clone());
    let output = a.output.unwrap_or_else(|| config.paths.labels.clone());
    let unlabeled_path = a.unlabeled.unwrap_or_else(|| config.paths.unlabeled.clone());
    let tweets = read_clean(&input)?;

    let (labels, source): (Vec<Option<ToneCategory>>, LabelSource) = if a.lexicon {
        let lexicon = match a.lexicon_file.or_else(|| config.paths.lexicon.clone()) {
            Some(p) => {
                require(&p)?;
                Lexicon::load(p)?
            }
            None => Lexicon::bundled(),
        };
        (tweets.iter().map(|t| label_with_lexicon(t, &lexicon)).collect(), LabelSource::Lexicon)
    } else {
        (service_labels(config, &tweets)?, LabelSource::Service)
    };

    let mut labeled = 0;
    let body = csv_bytes(&LABEL_HEADER, |w| {
        for (t, l) in tweets.iter().zip(&labels) {
            if let Some(l) = l {
                labeled += 1;
                w.write_record([t.id.as_str(), &l.code().to_string(), source.as_str(), t.text.as_str()])?;
            }
        }
        Ok(())
    })?;
    write_artifact(&output, config.seed, &body)?;
    let body = csv_bytes(&["id", "text"], |w| {
        for (t, l) in tweets.iter().zip(&labels) {
            if l.is_none() {
                w.write_record([t.id.as_str(), t.text.as_str()])?;
            }
        }
        Ok(())
    })?;
    write_artifact(&unlabeled_path, config.seed, &body)?;
    println!(
        "labeled {labeled} of {} tweets via {} -> {}",
        tweets.len(),
        source.as_str(),
        output.display()
    );
    Ok(())
}

fn service_labels(config: &PipelineConfig, tweets: &[CleanTweet]) -> Result<Vec<Option<ToneCategory>>> {
    let transport = match &config.service.endpoint {
        Some(url) => {
            let key = std::env::var("TONE_API_KEY").map_err(|_| CliError::Service("TONE_API_KEY is not set".into()))?;
            HttpTransport::new(url, &key)?
        }
        None => HttpTransport::from_env()?,
    };
    let mut client = ServiceClient::new(transport);
    client.concurrency = config.service.concurrency.max(1);
    client.retry.max_attempts = config.service.retries;
    let mut mapping = ToneMapping::default();
    for (name, code) in &config.service.mapping {
        let c = ToneCategory::from_code(*code)
            .ok_or_else(|| CliError::Usage(format!("service mapping `{name}`: code {code} out of range")))?;
        mapping.insert(name, c);
    }
    client.mapping = mapping;

    let texts: Vec<(String, String)> = tweets.iter().map(|t| (t.id.clone(), t.text.clone())).collect();
    let batches = chunk_for_service(&texts)?;
    let scores: HashMap<String, _> = label_with_service(&batches, &client)?.into_iter().collect();
    Ok(tweets
        .iter()
        .map(|t| scores.get(&t.id).and_then(|s| dominant_tone(s)))
        .collect())
}

fn vocab_path(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".vocab");
    p.into()
}

fn split_path(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".split.csv");
    p.into()
}

fn write_vocab(path: &Path, seed: u64, vocab: &Vocabulary) -> Result<()> {
    let mut out = format!("# min_frequency={}\n# seed={seed}\n", vocab.min_frequency());
    for t in vocab.real_tokens() {
        out.push_str(t);
        out.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn to_example(row: &LabeledRow, vocab: &Vocabulary, max_len: usize) -> LabeledExample {
    let tweet = CleanTweet::from_clean_text(row.id.as_str(), row.text.clone());
    LabeledExample {
        tweet_id: row.id.clone(),
        encoded: encode(&tweet, vocab, max_len),
        label: row.label,
        source: row.source,
    }
}

fn train_cmd(config: &PipelineConfig, a: TrainArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| config.paths.labels.clone());
    let model_path = a.model.unwrap_or_else(|| config.paths.model.clone());
    let seed = a.seed.unwrap_or(config.seed);
    let mut config = config.clone();
    if let Some(e) = a.epochs {
        config.model.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        config.model.learning_rate = lr;
    }
    let rows: Vec<LabeledRow> = read_labels(&input)?.into_iter().filter(|r| !r.text.is_empty()).collect();
    let order: Vec<usize> = (0..rows.len()).collect();
    let (tr, va, te) = split_dataset(&order, config.ratios(), seed)?;

    let train_tweets: Vec<CleanTweet> = tr
        .iter()
        .map(|&i| CleanTweet::from_clean_text(rows[i].id.as_str(), rows[i].text.clone()))
        .collect();
    let vocab = build_vocab(&train_tweets, config.model.min_frequency.max(1))?;
    let max_len = config.model.max_len;
    let examples = |idx: &[usize]| -> Vec<LabeledExample> {
        idx.iter().map(|&i| to_example(&rows[i], &vocab, max_len)).filter(|e| e.encoded.true_length > 0).collect()
    };
    let (train_set, val_set) = (examples(&tr), examples(&va));

    let mut model = build_model(config.model_config(vocab.len(), seed))?;
    let history = train(&mut model, &train_set, &val_set)?;
    for e in &history.epochs {
        println!(
            "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {}  val_acc {}",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            e.val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            e.val_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }

    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_model(&model, &model_path)?;
    write_vocab(&vocab_path(&model_path), seed, &vocab)?;
    let body = csv_bytes(&["id", "split"], |w| {
        for (name, idx) in [("train", &tr), ("val", &va), ("test", &te)] {
            for &i in idx.iter() {
                w.write_record([rows[i].id.as_str(), name])?;
            }
        }
        Ok(())
    })?;
    write_artifact(&split_path(&model_path), seed, &body)?;
    write_artifact(
        &config.paths.reports.join("history.csv"),
        seed,
        history.to_csv().as_bytes(),
    )?;
    println!("model written to {}", model_path.display());
    Ok(())
}

fn read_split(path: &Path) -> Result<HashMap<String, String>> {
    let mut rdr = csv_reader(path)?;
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        out.insert(row.get(0).unwrap_or("").to_string(), row.get(1).unwrap_or("").to_string());
    }
    Ok(out)
}

const PREDICTION_HEADER: [&str; 3] = ["id", "truth", "predicted"];

fn evaluate(config: &PipelineConfig, a: EvaluateArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| config.paths.labels.clone());
    let model_path = a.model.unwrap_or_else(|| config.paths.model.clone());
    require(&model_path)?;
    let model = load_model(&model_path)?;
    let vocab = Vocabulary::load(vocab_path(&model_path))?;
    let split = read_split(&split_path(&model_path))?;
    let rows = read_labels(&input)?;
    let seed = model.config.seed;

    let pick = |name: &str| -> Vec<LabeledExample> {
        rows.iter()
            .filter(|r| split.get(&r.id).map(String::as_str) == Some(name))
            .map(|r| to_example(r, &vocab, model.config.max_len))
            .filter(|e| e.encoded.true_length > 0)
            .collect()
    };
    let (train_set, test_set) = (pick("train"), pick("test"));
    if test_set.is_empty() {
        return Err(CliError::Data("test split is empty".into()));
    }

    let mut preds = Vec::with_capacity(test_set.len());
    for ex in &test_set {
        preds.push(model.predict(&ex.encoded)?.0);
    }
    let truth: Vec<usize> = test_set.iter().map(|e| e.label.code()).collect();
    let pred: Vec<usize> = preds.iter().map(|p| p.code()).collect();
    let report = classification_report(&confusion_matrix(&truth, &pred)?)?;
    println!("Bi-LSTM model on {} test tweets\n{}", test_set.len(), render_report(&report));

    let baseline = naive_bayes_baseline(&train_set, &test_set)?;
    println!("Naive Bayes baseline\n{}", render_report(&baseline));

    let reports = &config.paths.reports;
    let body = csv_bytes(&PREDICTION_HEADER, |w| {
        for (ex, p) in test_set.iter().zip(&pred) {
            w.write_record([ex.tweet_id.as_str(), &ex.label.code().to_string(), &p.to_string()])?;
        }
        Ok(())
    })?;
    write_artifact(&reports.join("predictions.csv"), seed, &body)?;
    write_artifact(&reports.join("baseline.txt"), seed, render_report(&baseline).as_bytes())?;
    write_artifact(&reports.join("baseline.csv"), seed, report_csv(&baseline).as_bytes())?;
    Ok(())
}

fn predict(config: &PipelineConfig, a: PredictArgs) -> Result<()> {
    let model_path = a.model.unwrap_or_else(|| config.paths.model.clone());
    let tweet = CleanTweet::from_raw("input", &a.text);
    if tweet.tokens.is_empty() {
        return Err(CliError::Data("text is empty after cleaning".into()));
    }
    require(&model_path)?;
    let model = load_model(&model_path)?;
    let vocab = Vocabulary::load(vocab_path(&model_path))?;
    let x = encode(&tweet, &vocab, model.config.max_len);
    let (tone, probs) = model.predict(&x)?;
    println!("{}", tone.label());
    for (c, p) in ToneCategory::ALL.iter().zip(&probs) {
        println!("  {:<16} {p:.4}", c.label());
    }
    Ok(())
}

fn trends_cmd(config: &PipelineConfig, a: TrendsArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| config.paths.trends.clone());
    let output = a.output.unwrap_or_else(|| config.paths.reports.join("trends.csv"));
    if a.top < 1 {
        return Err(CliError::Usage("--top must be at least 1".into()));
    }
    let (default_from, default_to) = trends::default_window();
    let from = a.from.unwrap_or(default_from);
    let to = a.to.unwrap_or(default_to);
    if from > to {
        return Err(CliError::Usage(format!("--from {from} is after --to {to}")));
    }
    require(&input)?;
    let loaded = load_trends(&input)?;
    let ranked = top_hashtags(&loaded.records, from, to, a.top, a.location.as_deref())?;
    if ranked.is_empty() {
        return Err(CliError::Data(format!("no trends between {from} and {to}")));
    }
    let mut body = Vec::new();
    write_plot_data(&mut body, &ranked)?;
    write_artifact(&output, config.seed, &body)?;
    let mut stdout = std::io::stdout().lock();
    for (i, (h, f)) in ranked.iter().enumerate() {
        writeln!(stdout, "{:>3}. #{h} {f}", i + 1)?;
    }
    Ok(())
}

fn report(config: &PipelineConfig, a: ReportArgs) -> Result<()> {
    let dir = a.dir.unwrap_or_else(|| config.paths.reports.clone());
    let labels_path = a.labels.unwrap_or_else(|| config.paths.labels.clone());
    let predictions = dir.join("predictions.csv");
    let seed = artifact_seed(&predictions).unwrap_or(config.seed);

    let mut rdr = csv_reader(&predictions)?;
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for row in rdr.records() {
        let row = row?;
        let parse = |i: usize| -> Result<usize> {
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Data(format!("{}: bad class code", predictions.display())))
        };
        truth.push(parse(1)?);
        pred.push(parse(2)?);
    }
    let report = classification_report(&confusion_matrix(&truth, &pred)?)?;
    let text = render_report(&report);
    write_artifact(&dir.join("report.txt"), seed, text.as_bytes())?;
    write_artifact(&dir.join("report.csv"), seed, report_csv(&report).as_bytes())?;

    let rows = read_labels(&labels_path)?;
    let examples: Vec<LabeledExample> = rows
        .iter()
        .map(|r| LabeledExample {
            tweet_id: r.id.clone(),
            encoded: corpus::EncodedText {
                ids: Vec::new(),
                true_length: 0,
            },
            label: r.label,
            source: r.source,
        })
        .collect();
    let hist = tone_distribution(&examples);
    write_artifact(&dir.join("tone_distribution.csv"), seed, hist.to_csv().as_bytes())?;
    println!("{text}");
    println!("reports written to {}", dir.display());
    Ok(())
}

fn synth(config: &PipelineConfig, a: SynthArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(config.seed);
    std::fs::create_dir_all(&a.out_dir)?;
    let tweets = synthetic_tweets(&Lexicon::bundled(), a.tweets, seed);
    let mut buf = Vec::new();
    write_tweets(&mut buf, &tweets)?;
    write_artifact(&a.out_dir.join("synthetic_tweets.csv"), seed, &buf)?;
    let records = trends::synthetic_trends(a.trend_rows, seed);
    let mut buf = Vec::new();
    trends::write_trends(&mut buf, &records)?;
    write_artifact(&a.out_dir.join("synthetic_trends.csv"), seed, &buf)?;
    println!("wrote {} tweets and {} trend rows to {}", tweets.len(), records.len(), a.out_dir.display());
    Ok(())
}
