//! The `cfisac` pipeline: dataset generation, training, evaluation,
//! benchmarking and ceiling estimation, each writing into its own output
//! directory together with a `manifest.json` that can replay the run.

use std::fs;
use std::path::{Path, PathBuf};

use cfisac_core::baselines::{benchmark_compare, ssnr_upper_bound};
use cfisac_core::io::{load_dataset, read_json, save_dataset, write_json, write_text, Checkpoint, CheckpointMeta};
use cfisac_core::metrics::MetricReport;
use cfisac_core::model::{ArchitectureKind, ArchitectureSpec};
use cfisac_core::scenario::{generate_dataset, Dataset, DEFAULT_TRAIN_FRACTION};
use cfisac_core::training::{estimate_ceilings, select_model, train, CeilingEstimates, Role, TrainingRecord};
use cfisac_core::{Error, Scalar};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

mod config;

pub use config::{Overrides, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const CEILINGS_FILE: &str = "ceilings.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 I/O, 2 usage, 3 data or configuration mismatch, 4 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Config(_) => 3,
            Self::Io(_) | Self::Core(Error::Io(_)) => 1,
            Self::Core(Error::Numeric(_)) => 4,
            Self::Core(_) => 3,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "cfisac", version, about = "Distributed teacher-student beamforming for cell-free ISAC", args_override_self = true)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: <out-root>/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "CFISAC_OUT", default_value = "runs")]
    pub out_root: PathBuf,
    /// Worker threads for data generation, training and evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a dataset of scenes.
    GenData(GenDataArgs),
    /// Train a teacher or the student.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    /// Time the student against the reference optimizer.
    Benchmark(BenchmarkArgs),
    /// Estimate the student's ceilings from two teachers.
    Ceilings(CeilingsArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GenData(_) => "gen-data",
            Self::Train(_) => "train",
            Self::Evaluate(_) => "evaluate",
            Self::Benchmark(_) => "benchmark",
            Self::Ceilings(_) => "ceilings",
            Self::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 20_000)]
    pub size: usize,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    /// Overrides the configured data seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "cnn1d")]
    pub arch: ArchitectureKind,
    /// ssnr-teacher, sinr-teacher, student or beta=<0..1>.
    #[arg(long)]
    pub role: Role,
    #[arg(long)]
    pub ssnr_teacher: Option<PathBuf>,
    #[arg(long)]
    pub sinr_teacher: Option<PathBuf>,
    /// Precomputed ceilings (JSON), used instead of the teachers.
    #[arg(long)]
    pub ceilings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Use only the first N scenes of the dataset (re-split).
    #[arg(long)]
    pub scenes: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    All,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Validation)]
    pub split: Split,
    /// Curves CSV to run the threshold selection on.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[arg(long, default_value_t = 0.94)]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Student checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n_points: usize,
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
    /// Point-selection seed (default: the shuffle seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub single_thread: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CeilingsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub ssnr_teacher: PathBuf,
    #[arg(long)]
    pub sinr_teacher: PathBuf,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Everything needed to reproduce one output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// Configuration after file loading, overrides and system resolution.
    pub config: RunConfig,
    pub ceilings: Option<CeilingEstimates>,
    pub artifacts: Vec<String>,
    pub started: String,
    pub finished: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(read_json(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub split: Split,
    pub scenes: usize,
    pub mean_g1: f64,
    pub mean_g2: f64,
    pub ssnr_upper_bound: f64,
    pub g1_fraction_of_bound: f64,
    pub threshold: f64,
    pub selected_epoch: Option<usize>,
}

struct Produced {
    config: RunConfig,
    ceilings: Option<CeilingEstimates>,
    artifacts: Vec<&'static str>,
}

/// Runs a parsed command line and returns its output directory.
pub fn run(cli: Cli) -> Result<PathBuf> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let (command, config) = match cli.command {
        Command::Replay(r) => {
            let m = RunManifest::load(&r.manifest)?;
            if cli.config.is_some() {
                warn!("--config is ignored when replaying a manifest");
            }
            (m.command, m.config)
        }
        c => (c, config),
    };
    let out = cli.out.unwrap_or_else(|| cli.out_root.join(command.name()));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| execute(&command, config, &out))?;
    Ok(out)
}

/// Runs `command` with an already-resolved configuration, writing its
/// artifacts and manifest into `out`.
pub fn execute(command: &Command, config: RunConfig, out: &Path) -> Result<()> {
    let started = now();
    let produced = match command {
        Command::GenData(a) => cmd_gen_data(a, config, out)?,
        Command::Train(a) => cmd_train(a, config, out)?,
        Command::Evaluate(a) => cmd_evaluate(a, config, out)?,
        Command::Benchmark(a) => cmd_benchmark(a, config, out)?,
        Command::Ceilings(a) => cmd_ceilings(a, config, out)?,
        Command::Replay(_) => return Err(CliError::Usage("a manifest cannot record a replay".into())),
    };
    let manifest = RunManifest {
        tool: "cfisac".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.clone(),
        config: produced.config,
        ceilings: produced.ceilings,
        artifacts: produced.artifacts.iter().map(|s| s.to_string()).collect(),
        started,
        finished: now(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn cmd_gen_data(args: &GenDataArgs, mut config: RunConfig, out: &Path) -> Result<Produced> {
    if args.size == 0 {
        return Err(CliError::Usage("--size must be at least 1".into()));
    }
    if let Some(seed) = args.seed {
        config.seeds.data = seed;
    }
    let system = config.system.get_or_insert_with(Default::default).clone();
    let data = generate_dataset(&system, args.size, args.train_fraction, config.seeds.data)?;
    save_dataset(&out.join(DATASET_FILE), &data)?;
    info!(
        "{} scenes ({} train / {} validation) written to {}",
        data.len(),
        data.split,
        data.len() - data.split,
        out.display()
    );
    Ok(Produced {
        config,
        ceilings: None,
        artifacts: vec![DATASET_FILE],
    })
}

fn load_data(path: &Path, config: &mut RunConfig) -> Result<Dataset> {
    let data = load_dataset(path)?;
    config.resolve_system(&data.config, "dataset")?;
    Ok(data)
}

fn load_checkpoint(path: &Path, data: &Dataset) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.ensure_system(&data.config)
        .map_err(|e| CliError::Core(Error::Mismatch(format!("{}: {e}", path.display()))))?;
    Ok(ckpt)
}

fn teacher_ceilings<T: Scalar>(ssnr: &Checkpoint, sinr: &Checkpoint, data: &Dataset) -> Result<CeilingEstimates> {
    Ok(estimate_ceilings(&ssnr.model::<T>()?, &sinr.model::<T>()?, data.train())?)
}

fn resolve_ceilings(args: &TrainArgs, data: &Dataset) -> Result<Option<CeilingEstimates>> {
    if args.role != Role::Student {
        return Ok(None);
    }
    if let Some(path) = &args.ceilings {
        let c: CeilingEstimates = read_json(path)?;
        c.validate()?;
        return Ok(Some(c));
    }
    match (&args.ssnr_teacher, &args.sinr_teacher) {
        (Some(a), Some(b)) => {
            let (a, b) = (load_checkpoint(a, data)?, load_checkpoint(b, data)?);
            let c = match args.precision {
                Precision::F32 => teacher_ceilings::<f32>(&a, &b, data)?,
                Precision::F64 => teacher_ceilings::<f64>(&a, &b, data)?,
            };
            info!("ceilings: g1_max = {:.4}, g2_max = {:.4}", c.g1_max, c.g2_max);
            Ok(Some(c))
        }
        (a, b) => {
            let missing: Vec<&str> = [(a.is_none(), "--ssnr-teacher"), (b.is_none(), "--sinr-teacher")]
                .into_iter()
                .filter_map(|(m, n)| m.then_some(n))
                .collect();
            Err(CliError::Usage(format!(
                "the student role needs {} (or --ceilings)",
                missing.join(" and ")
            )))
        }
    }
}

fn train_checkpoint<T: Scalar>(
    data: &Dataset,
    args: &TrainArgs,
    config: &RunConfig,
    ceilings: Option<CeilingEstimates>,
) -> Result<(Checkpoint, TrainingRecord)> {
    let spec = ArchitectureSpec::preset(args.arch);
    let outcome = train::<T>(data, &spec, args.role, ceilings, &config.training, config.seeds)?;
    let best = &outcome.record.rows[outcome.best_epoch - 1];
    let meta = CheckpointMeta {
        role: args.role.to_string(),
        epoch: outcome.best_epoch,
        lambda: outcome.lambda,
        val_g1: best.val_g1,
        val_g2: best.val_g2,
        ceilings,
        seeds: config.seeds,
    };
    Ok((Checkpoint::from_model(&outcome.model, meta), outcome.record))
}

fn cmd_train(args: &TrainArgs, mut config: RunConfig, out: &Path) -> Result<Produced> {
    args.overrides.apply(&mut config);
    let mut data = load_data(&args.dataset, &mut config)?;
    if let Some(n) = args.scenes {
        if n == 0 {
            return Err(CliError::Usage("--scenes must be at least 1".into()));
        }
        if n < data.len() {
            let positions = data.positions[..n].to_vec();
            data = Dataset::from_positions(data.config.clone(), data.seed, data.train_fraction, positions)?;
        }
    }
    let ceilings = resolve_ceilings(args, &data)?;
    let (ckpt, record) = match args.precision {
        Precision::F32 => train_checkpoint::<f32>(&data, args, &config, ceilings)?,
        Precision::F64 => train_checkpoint::<f64>(&data, args, &config, ceilings)?,
    };
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    write_text(&out.join(CURVES_FILE), &record.to_csv())?;
    info!(
        "{}: best epoch {} of {} (val g1 = {:.4}, val g2 = {:.4})",
        args.role,
        ckpt.meta.epoch,
        record.len(),
        ckpt.meta.val_g1,
        ckpt.meta.val_g2
    );
    Ok(Produced {
        config,
        ceilings,
        artifacts: vec![CHECKPOINT_FILE, CURVES_FILE],
    })
}

fn split_range(data: &Dataset, split: Split) -> std::ops::Range<usize> {
    match split {
        Split::Train => 0..data.split,
        Split::Validation => data.split..data.len(),
        Split::All => 0..data.len(),
    }
}

fn metric_rows<T: Scalar>(ckpt: &Checkpoint, data: &Dataset, range: std::ops::Range<usize>) -> Result<Vec<MetricReport>> {
    let model = ckpt.model::<T>()?;
    let scenes = &data.scenes[range];
    let beams = model.beamformers_chunked(scenes, 500)?;
    Ok(scenes
        .iter()
        .zip(&beams)
        .map(|(s, w)| MetricReport::evaluate(s, w, &data.config))
        .collect::<Result<_, _>>()?)
}

fn with_checkpoint_precision<R>(
    ckpt: &Checkpoint,
    f32_run: impl FnOnce() -> Result<R>,
    f64_run: impl FnOnce() -> Result<R>,
) -> Result<R> {
    match ckpt.precision.as_str() {
        "f32" => f32_run(),
        "f64" => f64_run(),
        p => Err(CliError::Core(Error::Format(format!("unknown checkpoint precision {p:?}")))),
    }
}

fn cmd_evaluate(args: &EvaluateArgs, mut config: RunConfig, out: &Path) -> Result<Produced> {
    let data = load_data(&args.dataset, &mut config)?;
    let ckpt = load_checkpoint(&args.checkpoint, &data)?;
    let range = split_range(&data, args.split);
    if range.is_empty() {
        return Err(CliError::Usage(format!("the {:?} split is empty", args.split).to_lowercase()));
    }
    let start = range.start;
    let reports = with_checkpoint_precision(
        &ckpt,
        || metric_rows::<f32>(&ckpt, &data, range.clone()),
        || metric_rows::<f64>(&ckpt, &data, range.clone()),
    )?;
    let mut csv = MetricReport::csv_header(data.config.num_ues);
    csv.push('\n');
    for (i, r) in reports.iter().enumerate() {
        csv.push_str(&r.csv_row(start + i));
        csv.push('\n');
    }
    write_text(&out.join(METRICS_FILE), &csv)?;

    let n = reports.len() as f64;
    let mean_g1 = reports.iter().map(|r| r.ssnr).sum::<f64>() / n;
    let mean_g2 = reports.iter().map(|r| r.min_sinr).sum::<f64>() / n;
    let bound = ssnr_upper_bound(&data.config);
    let selected_epoch = match &args.curves {
        Some(p) => Some(select_model(
            &TrainingRecord::from_csv(&fs::read_to_string(p)?)?,
            args.threshold,
            None,
        )?),
        None => None,
    };
    let summary = EvaluationSummary {
        split: args.split,
        scenes: reports.len(),
        mean_g1,
        mean_g2,
        ssnr_upper_bound: bound,
        g1_fraction_of_bound: mean_g1 / bound,
        threshold: args.threshold,
        selected_epoch,
    };
    println!(
        "mean g1 = {mean_g1:.6} ({:.1}% of the bound {bound:.4}), mean g2 = {mean_g2:.6} over {} scenes",
        100.0 * summary.g1_fraction_of_bound,
        reports.len()
    );
    if let Some(e) = selected_epoch {
        println!("selected epoch: {e}");
    }
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(Produced {
        config,
        ceilings: ckpt.meta.ceilings,
        artifacts: vec![METRICS_FILE, SUMMARY_FILE],
    })
}

fn cmd_benchmark(args: &BenchmarkArgs, mut config: RunConfig, out: &Path) -> Result<Produced> {
    let data = load_data(&args.dataset, &mut config)?;
    let ckpt = load_checkpoint(&args.checkpoint, &data)?;
    let scenes = &data.scenes[split_range(&data, args.split)];
    let seed = args.seed.unwrap_or(config.seeds.shuffle);
    let run = || {
        with_checkpoint_precision(
            &ckpt,
            || {
                let m = ckpt.model::<f32>()?;
                Ok(benchmark_compare(scenes, &m, &data.config, args.n_points, &config.baseline, seed, args.single_thread)?)
            },
            || {
                let m = ckpt.model::<f64>()?;
                Ok(benchmark_compare(scenes, &m, &data.config, args.n_points, &config.baseline, seed, args.single_thread)?)
            },
        )
    };
    let report = if args.single_thread {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };
    let s = &report.summary;
    println!(
        "{}: g1 = {:.4}, g2 = {:.4}, {:.3e} s/scene; student: g1 = {:.4}, g2 = {:.4}, {:.3e} s/scene; speedup {:.0}x",
        s.baseline_label,
        s.baseline_mean_g1,
        s.baseline_mean_g2,
        s.baseline_mean_seconds,
        s.student_mean_g1,
        s.student_mean_g2,
        s.student_mean_seconds,
        s.speedup
    );
    write_text(&out.join(COMPARISON_FILE), &report.to_csv())?;
    write_json(&out.join(SUMMARY_FILE), &report.summary)?;
    Ok(Produced {
        config,
        ceilings: ckpt.meta.ceilings,
        artifacts: vec![COMPARISON_FILE, SUMMARY_FILE],
    })
}

fn cmd_ceilings(args: &CeilingsArgs, mut config: RunConfig, out: &Path) -> Result<Produced> {
    let data = load_data(&args.dataset, &mut config)?;
    let a = load_checkpoint(&args.ssnr_teacher, &data)?;
    let b = load_checkpoint(&args.sinr_teacher, &data)?;
    let c = match args.precision {
        Precision::F32 => teacher_ceilings::<f32>(&a, &b, &data)?,
        Precision::F64 => teacher_ceilings::<f64>(&a, &b, &data)?,
    };
    println!("g1_max = {:.6}, g2_max = {:.6}", c.g1_max, c.g2_max);
    write_json(&out.join(CEILINGS_FILE), &c)?;
    Ok(Produced {
        config,
        ceilings: Some(c),
        artifacts: vec![CEILINGS_FILE],
    })
}
