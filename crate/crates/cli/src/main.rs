//! `sift` — every pipeline stage as a subcommand.
//!
//! Exit codes: 0 success, 1 domain error (the message names the failing
//! contract), 2 usage error or unreadable filter input stream.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use sift_core::ages::{age_histogram, write_age_csv, write_broad_csv, AgeExtractor};
use sift_core::classifier::{
    evaluate, load_model, predict_nb, read_labeled, save_model, top_features, train_nb, Label,
    LabeledExample, DEFAULT_ALPHA,
};
use sift_core::corpus::{ingest, read_corpus, write_corpus, Document};
use sift_core::dedup::{group_duplicates, write_group_report};
use sift_core::intervene::{serve_stream, FilterPolicy, PolicyMode, StreamError};
use sift_core::lexicon::{parse_lexicon, Category, CompiledMatcher, Lexicon, LexiconPattern};
use sift_core::prevalence::{manual_sample, write_review_sheet, yearly_pipeline};
use sift_core::sessions::{
    aggregate, parse_log, read_sessions, reconstruct_sessions, write_metrics_csv, write_sessions,
    LogParser, DEFAULT_WINDOW_SECONDS,
};

#[derive(Parser)]
#[command(
    name = "sift",
    version,
    about = "Harmful-content measurement and query filtering over text corpora and search logs"
)]
struct Cli {
    /// Key=value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory all reports are written under.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a snapshot stream (JSONL) into a corpus file.
    Ingest(IngestArgs),
    /// Group mirror domains that serve identical content.
    Dedup(DedupArgs),
    /// Run a detection lexicon over a corpus.
    Detect(DetectArgs),
    /// Train the naive Bayes classifier from labeled examples.
    Train(TrainArgs),
    /// Classify corpus documents with a trained model.
    Classify(ClassifyArgs),
    /// Export the most discriminative phrases as a lexicon file.
    TopPhrases(TopPhrasesArgs),
    /// Parse a query log and reconstruct search sessions.
    Sessions(SessionsArgs),
    /// Extract age mentions from reconstructed sessions.
    Ages(AgesArgs),
    /// Sample, dedup, detect, and estimate the corrected content share.
    Prevalence(PrevalenceArgs),
    /// Draw a review sheet for manual validation.
    ReviewSample(ReviewSampleArgs),
    /// Serve filtering decisions over stdin/stdout until input closes.
    Filter(FilterArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Snapshot JSONL file.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct DedupArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Lexicon file to match.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Labeled examples, JSONL of {"text", "label"}.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct TopPhrasesArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Category header for the generated lexicon.
    #[arg(long, default_value = "target")]
    category: Category,
    #[arg(long = "lexicon-id", default_value = "nb-top-phrases")]
    lexicon_id: String,
    #[arg(long = "lexicon-version", default_value = "1")]
    lexicon_version: String,
}

#[derive(Args)]
struct SessionsArgs {
    /// Access log in Combined Log Format.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Continuation window in seconds.
    #[arg(long)]
    window: Option<i64>,
    /// Directory of category lexicons for session metrics.
    #[arg(long = "lexicon-dir")]
    lexicon_dir: Option<PathBuf>,
    /// Request path that serves searches.
    #[arg(long, default_value = "/search")]
    search_path: String,
}

#[derive(Args)]
struct AgesArgs {
    /// Sessions JSONL produced by the sessions subcommand.
    #[arg(long)]
    sessions: PathBuf,
    /// Directory of category lexicons; the target lexicon gates the
    /// "teen" broad term.
    #[arg(long = "lexicon-dir")]
    lexicon_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PrevalenceArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Domains to sample.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// False positive rate measured on an annotated review round.
    #[arg(long = "fp")]
    fp_rate: f64,
    /// False negative rate measured on an annotated review round.
    #[arg(long = "fn")]
    fn_rate: f64,
    #[arg(long, default_value = "all")]
    period: String,
}

#[derive(Args)]
struct ReviewSampleArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long = "lexicon-dir")]
    lexicon_dir: Option<PathBuf>,
    /// targeted: redirect detected queries; strict: also block sexual ones.
    #[arg(long)]
    mode: Option<PolicyMode>,
    #[arg(long)]
    help_url: String,
    #[arg(long)]
    survey_url: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("sift: {err:#}");
            if err.downcast_ref::<StreamError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Values loaded from a key=value configuration file.
#[derive(Default)]
struct FileConfig {
    values: BTreeMap<String, String>,
}

const CONFIG_KEYS: [&str; 10] = [
    "corpus",
    "lexicon",
    "lexicon_dir",
    "model",
    "log",
    "output_dir",
    "seed",
    "window_seconds",
    "sample_k",
    "mode",
];

impl FileConfig {
    fn load(path: &Path) -> Result<FileConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("config file {} is not readable", path.display()))?;
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key=value", idx + 1))?;
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                bail!("config line {}: unknown key {key:?}", idx + 1);
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key}: {e}")),
        }
    }
}

struct Ctx {
    file: FileConfig,
    output_dir: PathBuf,
}

impl Ctx {
    fn new(cli_config: Option<PathBuf>, cli_output_dir: Option<PathBuf>) -> Result<Ctx> {
        let file = match cli_config {
            Some(path) => FileConfig::load(&path)?,
            None => FileConfig::default(),
        };
        let output_dir = cli_output_dir
            .or_else(|| file.path("output_dir"))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Ctx { file, output_dir })
    }

    /// Flag value, else config value, else a usage error naming both.
    fn required_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let path = flag.or_else(|| self.file.path(key)).ok_or_else(|| {
            anyhow!(
                "missing --{} (or {key}= in the config file)",
                key.replace('_', "-")
            )
        })?;
        if !path.exists() {
            bail!("input path {} does not exist", path.display());
        }
        Ok(path)
    }

    fn seed(&self, flag: Option<u64>) -> Result<u64> {
        Ok(flag.or(self.file.parsed("seed")?).unwrap_or(0))
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("cannot create output dir {}", self.output_dir.display()))?;
        Ok(self.output_dir.join(name))
    }

    fn write_report<F>(&self, name: &str, write: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
    {
        let path = self.out_path(name)?;
        let file =
            fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut writer = BufWriter::new(file);
        write(&mut writer)?;
        writer.flush()?;
        Ok(path)
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.config, cli.output_dir)?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&ctx, args),
        Command::Dedup(args) => cmd_dedup(&ctx, args),
        Command::Detect(args) => cmd_detect(&ctx, args),
        Command::Train(args) => cmd_train(&ctx, args),
        Command::Classify(args) => cmd_classify(&ctx, args),
        Command::TopPhrases(args) => cmd_top_phrases(&ctx, args),
        Command::Sessions(args) => cmd_sessions(&ctx, args),
        Command::Ages(args) => cmd_ages(&ctx, args),
        Command::Prevalence(args) => cmd_prevalence(&ctx, args),
        Command::ReviewSample(args) => cmd_review_sample(&ctx, args),
        Command::Filter(args) => cmd_filter(&ctx, args),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let file =
        fs::File::open(path).with_context(|| format!("cannot open corpus {}", path.display()))?;
    read_corpus(BufReader::new(file)).with_context(|| format!("corpus {}", path.display()))
}

fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read lexicon {}", path.display()))?;
    parse_lexicon(&text).with_context(|| format!("lexicon {}", path.display()))
}

/// Load every `*.txt` lexicon in a directory, keyed by category.
fn load_lexicon_dir(dir: &Path) -> Result<BTreeMap<Category, CompiledMatcher>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read lexicon dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    entries.sort();

    let mut matchers = BTreeMap::new();
    for path in entries {
        let lexicon = load_lexicon(&path)?;
        if matchers
            .insert(lexicon.category, CompiledMatcher::compile(&lexicon))
            .is_some()
        {
            bail!(
                "lexicon dir {}: category {} appears in more than one file",
                dir.display(),
                lexicon.category
            );
        }
    }
    if matchers.is_empty() {
        bail!("lexicon dir {} contains no .txt lexicons", dir.display());
    }
    Ok(matchers)
}

fn cmd_ingest(ctx: &Ctx, args: IngestArgs) -> Result<()> {
    let input = ctx.required_path(Some(args.input), "input")?;
    let file =
        fs::File::open(&input).with_context(|| format!("cannot open {}", input.display()))?;
    let outcome = ingest(BufReader::new(file))?;
    let path = ctx.write_report("corpus.jsonl", |w| {
        write_corpus(w, &outcome.documents)?;
        Ok(())
    })?;
    println!(
        "wrote {} ({} documents, {} rejects)",
        path.display(),
        outcome.documents.len(),
        outcome.rejects
    );
    Ok(())
}

fn cmd_dedup(ctx: &Ctx, args: DedupArgs) -> Result<()> {
    let corpus = load_corpus(&ctx.required_path(args.corpus, "corpus")?)?;
    let groups = group_duplicates(&corpus)?;
    let path = ctx.write_report("groups.csv", |w| {
        write_group_report(w, &groups)?;
        Ok(())
    })?;
    println!(
        "wrote {} ({} domains in {} groups)",
        path.display(),
        corpus.len(),
        groups.len()
    );
    Ok(())
}

fn cmd_detect(ctx: &Ctx, args: DetectArgs) -> Result<()> {
    let corpus = load_corpus(&ctx.required_path(args.corpus, "corpus")?)?;
    let lexicon = load_lexicon(&ctx.required_path(args.lexicon, "lexicon")?)?;
    let matcher = CompiledMatcher::compile(&lexicon);

    let mut matched = 0usize;
    let path = ctx.write_report("matches.csv", |w| {
        writeln!(w, "domain,matched,hit_count,patterns")?;
        for doc in &corpus {
            let result = matcher.match_text(&doc.scan_text());
            if result.matched {
                matched += 1;
            }
            let patterns: Vec<&str> = result.matched_patterns().into_iter().collect();
            writeln!(
                w,
                "{},{},{},{}",
                doc.domain,
                result.matched,
                result.hits.len(),
                csv_field(&patterns.join(";"))
            )?;
        }
        Ok(())
    })?;
    println!(
        "wrote {} ({} of {} documents matched)",
        path.display(),
        matched,
        corpus.len()
    );
    Ok(())
}

fn cmd_train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let input = ctx.required_path(Some(args.input), "input")?;
    let file = fs::File::open(&input)?;
    let examples = read_labeled(BufReader::new(file))?;
    let positives: Vec<LabeledExample> = examples
        .iter()
        .filter(|e| e.label == Label::Positive)
        .cloned()
        .collect();
    let negatives: Vec<LabeledExample> = examples
        .iter()
        .filter(|e| e.label == Label::Negative)
        .cloned()
        .collect();
    let model = train_nb(&positives, &negatives, args.alpha)?;
    let report = evaluate(|text| predict_nb(&model, text).0, &examples)?;
    let path = ctx.write_report("model.json", |w| {
        save_model(w, &model)?;
        Ok(())
    })?;
    println!(
        "wrote {} ({} positive, {} negative, vocabulary {}, training accuracy {:.4})",
        path.display(),
        positives.len(),
        negatives.len(),
        model.vocabulary_size(),
        report.accuracy
    );
    Ok(())
}

fn cmd_classify(ctx: &Ctx, args: ClassifyArgs) -> Result<()> {
    let model_path = ctx.required_path(args.model, "model")?;
    let model = load_model(BufReader::new(fs::File::open(&model_path)?))?;
    let corpus = load_corpus(&ctx.required_path(args.corpus, "corpus")?)?;

    let mut positives = 0usize;
    let path = ctx.write_report("predictions.csv", |w| {
        writeln!(w, "domain,label,posterior")?;
        for doc in &corpus {
            let (label, posterior) = predict_nb(&model, &doc.scan_text());
            if label == Label::Positive {
                positives += 1;
            }
            writeln!(w, "{},{label},{posterior:.6}", doc.domain)?;
        }
        Ok(())
    })?;
    println!(
        "wrote {} ({} of {} documents classified positive)",
        path.display(),
        positives,
        corpus.len()
    );
    Ok(())
}

fn cmd_top_phrases(ctx: &Ctx, args: TopPhrasesArgs) -> Result<()> {
    if args.k == 0 {
        bail!("--k must be at least 1");
    }
    let model_path = ctx.required_path(args.model, "model")?;
    let model = load_model(BufReader::new(fs::File::open(&model_path)?))?;
    let ranked = top_features(&model, args.k);
    let patterns: Vec<LexiconPattern> = ranked
        .iter()
        .map(|(token, _)| LexiconPattern::parse(token))
        .collect::<Result<_, _>>()?;
    let lexicon = Lexicon {
        id: args.lexicon_id,
        version: args.lexicon_version,
        category: args.category,
        patterns,
    };
    let path = ctx.write_report("top_phrases.txt", |w| {
        w.write_all(lexicon.to_file_string().as_bytes())?;
        Ok(())
    })?;
    println!(
        "wrote {} ({} phrases)",
        path.display(),
        lexicon.patterns.len()
    );
    Ok(())
}

fn cmd_sessions(ctx: &Ctx, args: SessionsArgs) -> Result<()> {
    let log_path = ctx.required_path(args.log, "log")?;
    let window = match args.window {
        Some(w) => w,
        None => ctx
            .file
            .parsed::<i64>("window_seconds")?
            .unwrap_or(DEFAULT_WINDOW_SECONDS),
    };
    if window < 1 {
        bail!("window must be at least 1 second, got {window}");
    }

    let parser = LogParser::new(args.search_path);
    let file = fs::File::open(&log_path)?;
    let parsed = parse_log(BufReader::new(file), &parser)?;
    let sessions = reconstruct_sessions(&parsed.records, window);

    let sessions_path = ctx.write_report("sessions.jsonl", |w| {
        write_sessions(w, &sessions)?;
        Ok(())
    })?;

    let matchers = match args.lexicon_dir.or_else(|| ctx.file.path("lexicon_dir")) {
        Some(dir) => {
            let session_categories = [
                Category::Target,
                Category::Sexual,
                Category::Violence,
                Category::GenderGirl,
                Category::GenderBoy,
            ];
            load_lexicon_dir(&dir)?
                .into_iter()
                .filter(|(c, _)| session_categories.contains(c))
                .collect()
        }
        None => BTreeMap::new(),
    };
    let metrics = aggregate(&sessions, &matchers);
    let json_path = ctx.write_report("session_metrics.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &metrics)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    let csv_path = ctx.write_report("session_metrics.csv", |w| {
        write_metrics_csv(w, &metrics)?;
        Ok(())
    })?;

    let skipped: u64 = parsed.skipped.values().sum();
    println!(
        "wrote {}, {}, {} ({} records -> {} sessions, {} lines skipped)",
        sessions_path.display(),
        json_path.display(),
        csv_path.display(),
        parsed.records.len(),
        sessions.len(),
        skipped
    );
    for (reason, count) in &parsed.skipped {
        println!("  skipped {count} line(s): {reason}");
    }
    Ok(())
}

fn cmd_ages(ctx: &Ctx, args: AgesArgs) -> Result<()> {
    let sessions_path = ctx.required_path(Some(args.sessions), "sessions")?;
    let file = fs::File::open(&sessions_path)?;
    let sessions = read_sessions(BufReader::new(file))?;

    let target_matcher = match args.lexicon_dir.or_else(|| ctx.file.path("lexicon_dir")) {
        Some(dir) => load_lexicon_dir(&dir)?
            .remove(&Category::Target)
            .ok_or_else(|| anyhow!("lexicon dir has no target-category lexicon"))?,
        None => {
            println!("note: no lexicon dir given; the teen broad term needs the target lexicon and stays 0");
            CompiledMatcher::from_patterns(Vec::new())
        }
    };

    let histogram = age_histogram(&sessions, &AgeExtractor::new(), &target_matcher);
    let ages_path = ctx.write_report("age_counts.csv", |w| {
        write_age_csv(w, &histogram)?;
        Ok(())
    })?;
    let broad_path = ctx.write_report("broad_term_counts.csv", |w| {
        write_broad_csv(w, &histogram)?;
        Ok(())
    })?;
    let age_sessions: u64 = histogram.exact_counts.values().sum();
    println!(
        "wrote {}, {} ({} sessions scanned, {} age mentions)",
        ages_path.display(),
        broad_path.display(),
        sessions.len(),
        age_sessions
    );
    Ok(())
}

fn cmd_prevalence(ctx: &Ctx, args: PrevalenceArgs) -> Result<()> {
    let corpus = load_corpus(&ctx.required_path(args.corpus, "corpus")?)?;
    let lexicon = load_lexicon(&ctx.required_path(args.lexicon, "lexicon")?)?;
    let matcher = CompiledMatcher::compile(&lexicon);
    let k = args
        .k
        .or(ctx.file.parsed("sample_k")?)
        .ok_or_else(|| anyhow!("missing --k (or sample_k= in the config file)"))?;
    let seed = ctx.seed(args.seed)?;

    let estimate = yearly_pipeline(
        &corpus,
        &matcher,
        k,
        seed,
        args.fp_rate,
        args.fn_rate,
        &args.period,
    )?;
    let path = ctx.write_report("prevalence.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &estimate)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    println!(
        "wrote {} (period {}, {} unique sites, {} matches, corrected share {:.4})",
        path.display(),
        estimate.period,
        estimate.unique_sites,
        estimate.raw_matches,
        estimate.corrected_share
    );
    Ok(())
}

fn cmd_review_sample(ctx: &Ctx, args: ReviewSampleArgs) -> Result<()> {
    let corpus = load_corpus(&ctx.required_path(args.corpus, "corpus")?)?;
    let k = args.k.or(ctx.file.parsed("sample_k")?).unwrap_or(1000);
    let seed = ctx.seed(args.seed)?;
    let rows = manual_sample(&corpus, k, seed)?;
    let path = ctx.write_report("review_sheet.csv", |w| {
        write_review_sheet(w, &rows)?;
        Ok(())
    })?;
    println!(
        "wrote {} ({} rows for annotation)",
        path.display(),
        rows.len()
    );
    Ok(())
}

fn cmd_filter(ctx: &Ctx, args: FilterArgs) -> Result<()> {
    let dir = args
        .lexicon_dir
        .or_else(|| ctx.file.path("lexicon_dir"))
        .ok_or_else(|| anyhow!("missing --lexicon-dir (or lexicon_dir= in the config file)"))?;
    let matchers = load_lexicon_dir(&dir)?;
    let mode = match args.mode {
        Some(mode) => mode,
        None => ctx
            .file
            .parsed::<PolicyMode>("mode")?
            .unwrap_or(PolicyMode::Targeted),
    };
    let policy = FilterPolicy::new(mode, args.help_url, args.survey_url, matchers)?;

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let summary = serve_stream(stdin.lock(), stdout.lock(), &policy)?;

    // Count-only log; query text is never recorded.
    eprintln!(
        "filter: {} request(s), {} malformed",
        summary.requests, summary.errors
    );
    for (action, count) in &summary.actions {
        eprintln!("  {action}: {count}");
    }
    Ok(())
}
