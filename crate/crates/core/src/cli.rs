//! The `pncf` command-line front end.
//!
//! Stages talk only through files in a data directory (`--data`, or
//! `$PNCF_DATA_DIR`, default `./data`):
//!
//! | file                 | written by            | format                          |
//! |----------------------|-----------------------|---------------------------------|
//! | `interactions.csv`   | ingest, synth         | `user_id,item_id`               |
//! | `index.csv`          | ingest, synth         | `kind,index,id`                 |
//! | `documents.jsonl`    | ingest                | one user document per line      |
//! | `filter_report.csv`  | ingest                | `metric,value`                  |
//! | `personality.csv`    | personality, synth    | `user_id,openness,..,provenance`|
//! | `model.pncf`         | train                 | binary checkpoint               |
//! | `epochs.csv`         | train                 | `epoch,loss,hr10,ndcg10`        |
//! | `metrics.csv`        | eval                  | `metric,K,value`                |
//! | `breakdown.csv`      | breakdown             | `trait,count,hr,ndcg`           |
//!
//! Exit codes: 0 success, 2 input error, 3 format error, 4 configuration error, 1 other.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{
    dataset_stats, filter_active, generate_synthetic, leave_one_out_split, parse_reviews, read_documents,
    write_documents, FilterConfig, HoldoutPolicy, InteractionSet, LeaveOneOutSplit, MalformedPolicy, SyntheticSpec,
};
use crate::evaluation::{breakdown_by_trait, evaluate, CandidatePool, EvalConfig, Evaluation};
use crate::model::{FeatureContext, Hyperparams, PersonalityMode, DEFAULT_TEMPERATURE};
use crate::numerics::AdamConfig;
use crate::personality::{import_scores_csv, Lexicon, LexiconScorer, PersonalityTable, Provenance, Trait};
use crate::training::{train, write_epoch_log, Checkpoint, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "pncf", version, about = "Personality-aware neural collaborative filtering")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse JSON-lines reviews, apply the active-user filter, write interactions and user documents.
    Ingest(IngestArgs),
    /// Produce the personality CSV from user documents (lexicon) or an external score file (import).
    Personality(PersonalityArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Generate a synthetic personality-correlated dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus epoch log.
    Train(TrainArgs),
    /// Evaluate a checkpoint (HR@K / NDCG@K).
    Eval(EvalArgs),
    /// Per-trait HR/NDCG of a checkpoint, grouped by most salient trait.
    Breakdown(BreakdownArgs),
    /// Per-trait score histograms (SVG) and a median/mean summary CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataDir {
    /// Data directory shared by all stages.
    #[arg(long, env = "PNCF_DATA_DIR", default_value = "data")]
    pub data: PathBuf,
}

impl DataDir {
    fn file(&self, name: &str) -> PathBuf {
        self.data.join(name)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Reviews file, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub dir: DataDir,
    /// Skip malformed lines instead of aborting.
    #[arg(long)]
    pub skip_malformed: bool,
    #[arg(long, default_value_t = 10)]
    pub min_items: usize,
    #[arg(long, default_value_t = 30)]
    pub min_words: usize,
    #[arg(long, default_value_t = 80)]
    pub max_words: usize,
    /// Require every review of a user to fall in the word window.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Lexicon,
    Import,
}

#[derive(Debug, Args)]
pub struct PersonalityArgs {
    #[arg(long, value_enum)]
    pub source: Source,
    #[command(flatten)]
    pub dir: DataDir,
    /// Score CSV to import (source=import).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Scale of the imported scores, `LOW,HIGH`.
    #[arg(long, value_name = "LOW,HIGH", default_value = "0,100", value_parser = parse_range)]
    pub range: (f64, f64),
    /// User documents (source=lexicon); defaults to `<data>/documents.jsonl`.
    #[arg(long)]
    pub documents: Option<PathBuf>,
    /// Lexicon CSV `trait,word,weight`; defaults to the bundled lexicon.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Output; defaults to `<data>/personality.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub dir: DataDir,
    /// Also write `statistic,value` rows here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub dir: DataDir,
    #[arg(long, default_value_t = 500)]
    pub users: usize,
    #[arg(long, default_value_t = 200)]
    pub items: usize,
    #[arg(long, default_value_t = 20)]
    pub per_user: usize,
    /// Weight of the personality-driven component in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    pub signal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Plain,
    Random,
    Same,
    Salient,
    Soft,
    Hard,
}

impl ModeArg {
    fn tag(self) -> &'static str {
        match self {
            ModeArg::Plain => "plain",
            ModeArg::Random => "random",
            ModeArg::Same => "same",
            ModeArg::Salient => "salient",
            ModeArg::Soft => "soft",
            ModeArg::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HoldoutArg {
    Random,
    Last,
}

impl From<HoldoutArg> for HoldoutPolicy {
    fn from(h: HoldoutArg) -> Self {
        match h {
            HoldoutArg::Random => HoldoutPolicy::Random,
            HoldoutArg::Last => HoldoutPolicy::Last,
        }
    }
}

fn parse_pool(s: &str) -> std::result::Result<CandidatePool, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (low, high) = s.split_once(',').ok_or("expected LOW,HIGH")?;
    let low: f64 = low.trim().parse().map_err(|e| format!("LOW: {e}"))?;
    let high: f64 = high.trim().parse().map_err(|e| format!("HIGH: {e}"))?;
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(format!("needs finite LOW < HIGH, got {low},{high}"));
    }
    Ok((low, high))
}

fn parse_trait(s: &str) -> std::result::Result<Trait, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Options shared by train, eval and breakdown.
#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub dir: DataDir,
    /// Personality CSV; defaults to `<data>/personality.csv`.
    #[arg(long)]
    pub personality: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    pub holdout: HoldoutArg,
    /// Sampled negatives per evaluated user, or `all`.
    #[arg(long, default_value = "99", value_parser = parse_pool)]
    pub eval_negatives: CandidatePool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_enum, default_value = "plain")]
    pub mode: ModeArg,
    /// Softmax temperature of the soft-labeled mode.
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    /// Trait assigned to every user by the `same` mode.
    #[arg(long, default_value = "openness", value_parser = parse_trait)]
    pub same_trait: Trait,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Negatives per positive.
    #[arg(long, default_value_t = 4)]
    pub negatives: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Early-stopping patience in epochs, capped at `--epochs`; 0 disables.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = [64usize, 32, 16, 8])]
    pub hidden: Vec<usize>,
    /// Keep the trait embedding table at its initial values.
    #[arg(long)]
    pub freeze_trait_emb: bool,
    /// Checkpoint path; defaults to `<data>/model.pncf`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Epoch log path; defaults to `<data>/epochs.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    /// Checkpoint; defaults to `<data>/model.pncf`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Expected mode of the checkpoint.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 10])]
    pub k: Vec<usize>,
    /// Seed of the negative samples; defaults to the checkpoint's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `<data>/metrics.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BreakdownArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `<data>/breakdown.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub dir: DataDir,
    #[arg(long)]
    pub personality: Option<PathBuf>,
    /// Output directory; defaults to `<data>/plots`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Personality(a) => cmd_personality(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Breakdown(a) => cmd_breakdown(&a),
        Command::Plot(a) => cmd_plot(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let cfg = FilterConfig {
        min_items: a.min_items,
        min_words: a.min_words,
        max_words: a.max_words,
        all_reviews_must_qualify: a.strict,
    };
    if cfg.min_words > cfg.max_words || cfg.min_items == 0 {
        return Err(Error::Config("need min-words <= max-words and min-items >= 1".into()));
    }
    let policy = if a.skip_malformed {
        MalformedPolicy::Skip
    } else {
        MalformedPolicy::Abort
    };
    let parsed = parse_reviews(open(&a.input)?, policy)?;
    if parsed.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out = filter_active(&parsed.records, &cfg);
    let dir = &a.dir;
    std::fs::create_dir_all(&dir.data).map_err(|e| Error::io(&dir.data, e))?;
    out.interactions.save(&dir.file("interactions.csv"), &dir.file("index.csv"))?;
    write_documents(&out.documents, create(&dir.file("documents.jsonl"))?)?;
    out.report.write_csv(create(&dir.file("filter_report.csv"))?)?;
    let r = &out.report;
    println!("users before filter   {:>8}", r.users_before);
    println!("users after filter    {:>8}", r.users_after);
    println!("reviews kept          {:>8}", r.reviews_kept);
    println!("reviews dropped       {:>8}", r.reviews_dropped());
    println!("interactions          {:>8}", r.interactions);
    if !parsed.skipped.is_empty() {
        println!("malformed lines       {:>8}", parsed.skipped.len());
    }
    Ok(())
}

pub fn cmd_personality(a: &PersonalityArgs) -> Result<()> {
    let out = a.out.clone().unwrap_or_else(|| a.dir.file("personality.csv"));
    let table = match a.source {
        Source::Import => {
            let input = a
                .input
                .as_ref()
                .ok_or_else(|| Error::Config("--source import needs --input <scores.csv>".into()))?;
            import_scores_csv(input, a.range)?
        }
        Source::Lexicon => {
            let lexicon = match &a.lexicon {
                Some(p) => Lexicon::load(p)?,
                None => Lexicon::builtin(),
            };
            let docs_path = a.documents.clone().unwrap_or_else(|| a.dir.file("documents.jsonl"));
            let docs = read_documents(open(&docs_path)?)?;
            let scorer = LexiconScorer::new(lexicon);
            let mut table = PersonalityTable::new();
            for d in &docs {
                table.insert(d.user_id.clone(), scorer.score(&d.text), Provenance::Lexicon)?;
            }
            table
        }
    };
    if table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    table.write_csv(create(&out)?)?;
    println!("wrote {} users to {}", table.len(), out.display());
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let set = load_interactions(&a.dir)?;
    let docs_path = a.dir.file("documents.jsonl");
    let docs = if docs_path.exists() {
        read_documents(open(&docs_path)?)?
    } else {
        Vec::new()
    };
    let stats = dataset_stats(&set, &docs)?;
    print!("{stats}");
    if let Some(out) = &a.out {
        stats.write_csv(create(out)?)?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec::new(a.users, a.items, a.per_user, a.signal);
    let data = generate_synthetic(spec, a.seed).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })?;
    std::fs::create_dir_all(&a.dir.data).map_err(|e| Error::io(&a.dir.data, e))?;
    data.interactions
        .save(&a.dir.file("interactions.csv"), &a.dir.file("index.csv"))?;
    data.personalities.write_csv(create(&a.dir.file("personality.csv"))?)?;
    println!(
        "synthetic data: {} users, {} items, {} interactions in {}",
        data.interactions.n_users(),
        data.interactions.n_items(),
        data.interactions.n_interactions(),
        a.dir.data.display()
    );
    Ok(())
}

fn load_interactions(dir: &DataDir) -> Result<InteractionSet> {
    let index = dir.file("index.csv");
    let set = InteractionSet::load(&dir.file("interactions.csv"), index.exists().then_some(index.as_path()))?;
    if set.n_interactions() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(set)
}

/// The personality table if the mode needs one (or `required`), else `None`.
fn load_personalities(a: &SplitArgs, mode_tag: &str, required: bool) -> Result<Option<PersonalityTable>> {
    let needs = required || matches!(mode_tag, "salient" | "soft" | "hard");
    if !needs {
        return Ok(None);
    }
    let path = a.personality.clone().unwrap_or_else(|| a.dir.file("personality.csv"));
    if !path.exists() {
        return Err(Error::Config(format!(
            "`{mode_tag}` needs personality scores but {} does not exist; run `pncf personality` (or `pncf synth`) first, pass --personality, or use --mode plain/random/same",
            path.display()
        )));
    }
    Ok(Some(import_scores_csv(&path, (0.0, 100.0))?))
}

fn prepare_split(a: &SplitArgs, seed: u64) -> Result<LeaveOneOutSplit> {
    let set = load_interactions(&a.dir)?;
    Ok(leave_one_out_split(&set, seed, a.holdout.into()))
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mode = PersonalityMode::from_tag(a.mode.tag(), a.seed, a.same_trait, a.temperature)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        negatives: a.negatives,
        adam: AdamConfig {
            learning_rate: a.lr,
            ..AdamConfig::default()
        },
        patience: (a.patience > 0).then_some(a.patience.min(a.epochs.max(1))),
        restore_best: true,
        freeze_trait_emb: a.freeze_trait_emb,
        seed: a.seed,
        eval: EvalConfig {
            candidates: a.split.eval_negatives,
            seed: a.seed,
            ks: vec![10],
        },
    };
    cfg.validate()?;
    if a.hidden.is_empty() || a.hidden.contains(&0) {
        return Err(Error::Config("--hidden needs positive widths".into()));
    }
    let hyper = Hyperparams {
        hidden: a.hidden.clone(),
        seed: a.seed,
        ..Hyperparams::default()
    };
    let split = prepare_split(&a.split, a.seed)?;
    let table = load_personalities(&a.split, mode.tag(), false)?;
    let ctx = FeatureContext::build(mode, split.train.user_ids(), table.as_ref())?;
    let out = train(&split, &ctx, &hyper, &cfg)?;
    let ck_path = a.out.clone().unwrap_or_else(|| a.split.dir.file("model.pncf"));
    let log_path = a.log.clone().unwrap_or_else(|| a.split.dir.file("epochs.csv"));
    Checkpoint {
        params: out.params,
        seed: a.seed,
        epoch: out.epoch as u64,
    }
    .save(&ck_path)?;
    write_epoch_log(&out.reports, create(&log_path)?)?;
    println!(
        "trained {} for {} epochs (kept epoch {}); checkpoint {}",
        mode,
        out.reports.len(),
        out.epoch,
        ck_path.display()
    );
    Ok(())
}

/// Load checkpoint, rebuild the split and features, evaluate.
fn evaluate_checkpoint(
    split_args: &SplitArgs,
    checkpoint: &Option<PathBuf>,
    mode: Option<ModeArg>,
    seed: Option<u64>,
    ks: Vec<usize>,
    require_personality: bool,
) -> Result<(Evaluation, LeaveOneOutSplit, Option<PersonalityTable>)> {
    let path = checkpoint.clone().unwrap_or_else(|| split_args.dir.file("model.pncf"));
    let ck = Checkpoint::load(&path, mode.map(ModeArg::tag))?;
    let cfg = EvalConfig {
        candidates: split_args.eval_negatives,
        seed: seed.unwrap_or(ck.seed),
        ks,
    };
    if cfg.ks.is_empty() || cfg.ks.contains(&0) {
        return Err(Error::Config("--k values must be >= 1".into()));
    }
    let split = prepare_split(split_args, ck.seed)?;
    if split.train.n_users() != ck.params.n_users() || split.train.n_items() != ck.params.n_items() {
        return Err(Error::Config(format!(
            "checkpoint is for {} users x {} items but the data has {} x {}",
            ck.params.n_users(),
            ck.params.n_items(),
            split.train.n_users(),
            split.train.n_items()
        )));
    }
    let table = load_personalities(split_args, ck.params.mode.tag(), require_personality)?;
    let ctx = FeatureContext::build(ck.params.mode, split.train.user_ids(), table.as_ref())?;
    let ev = evaluate(&ck.params, &ctx, &split, &cfg)?;
    Ok((ev, split, table))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (ev, _, _) = evaluate_checkpoint(&a.split, &a.checkpoint, a.mode, a.seed, a.k.clone(), false)?;
    println!("{}", ev.report);
    let out = a.out.clone().unwrap_or_else(|| a.split.dir.file("metrics.csv"));
    ev.report.write_csv(create(&out)?)
}

pub fn cmd_breakdown(a: &BreakdownArgs) -> Result<()> {
    if a.k == 0 {
        return Err(Error::Config("--k must be >= 1".into()));
    }
    let (ev, split, table) = evaluate_checkpoint(&a.split, &a.checkpoint, a.mode, a.seed, vec![a.k], true)?;
    let table = table.expect("required above");
    let b = breakdown_by_trait(&ev.per_user, split.train.user_ids(), &table, a.k)?;
    print!("{b}");
    println!("users={}", b.total_users());
    let out = a.out.clone().unwrap_or_else(|| a.split.dir.file("breakdown.csv"));
    b.write_csv(create(&out)?)
}

pub fn cmd_plot(a: &PlotArgs) -> Result<()> {
    if a.bins == 0 {
        return Err(Error::Config("--bins must be >= 1".into()));
    }
    let path = a.personality.clone().unwrap_or_else(|| a.dir.file("personality.csv"));
    let table = import_scores_csv(&path, (0.0, 100.0))?;
    let out = a.out.clone().unwrap_or_else(|| a.dir.file("plots"));
    for p in crate::plot::write_plots(&table, &out, a.bins)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
