use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use grec_core::io::{self, DatasetFileRef, Report, ReportFormat};
use grec_core::scaling::{run_scaling, BenchConfig};
use grec_core::synth::{self, SyntheticSpec};
use grec_core::{
    compare_splits, generalization_gap, grouped_recall_repeated, recall_at_k, Backend, Distance, EmbeddingSet,
    EvalConfig, MetricReport, RemainderPolicy, SingletonPolicy,
};

/// Leave-one-out Recall@K and grouped Recall@K for labeled embeddings.
#[derive(Debug, Parser)]
#[command(name = "grec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one dataset.
    Eval(EvalCmd),
    /// Compare two independent splits against their difference bound.
    Compare(CompareCmd),
    /// Train-minus-test generalization gap.
    Gap(GapCmd),
    /// Plain and grouped recall as the class count grows (synthetic data).
    Sweep(SweepCmd),
    /// Monte Carlo coverage of the split-difference bound (synthetic data).
    Coverage(CoverageCmd),
    /// Plain vs grouped recall across noise levels (synthetic data).
    Correlate(CorrelateCmd),
    /// Time full vs grouped evaluation over growing datasets.
    Bench(BenchCmd),
    /// Write a synthetic dataset.
    Gen(GenCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Brute,
    Vptree,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Brute => Backend::BruteForce,
            BackendArg::Vptree => Backend::VpTree,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DistanceArg {
    L2,
    Cosine,
}

impl From<DistanceArg> for Distance {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::L2 => Distance::SquaredEuclidean,
            DistanceArg::Cosine => Distance::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RemainderArg {
    Drop,
    Error,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SingletonArg {
    Skip,
    Error,
}

#[derive(Debug, Args)]
struct Output {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

impl Output {
    fn emit<R: Report + ?Sized>(&self, report: &R) -> anyhow::Result<()> {
        io::emit_report(report, self.format.into(), self.out.as_deref())?;
        Ok(())
    }
}

#[derive(Debug, Args)]
struct EvalFlags {
    /// Recall depth.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Labels per group; omitted means plain Recall@K over all labels.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    group_size: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Significance level of the confidence interval.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "vptree")]
    backend: BackendArg,
    #[arg(long, value_enum, default_value = "l2")]
    distance: DistanceArg,
    /// Repartitions with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    /// Labels left over after forming full groups.
    #[arg(long, value_enum, default_value = "drop")]
    remainder: RemainderArg,
    /// Rows whose label has a single sample.
    #[arg(long, value_enum, default_value = "skip")]
    singletons: SingletonArg,
}

impl EvalFlags {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            k: self.k as usize,
            group_size: self.group_size.map(|s| s as usize),
            seed: self.seed,
            alpha: self.alpha,
            remainder_policy: match self.remainder {
                RemainderArg::Drop => RemainderPolicy::Drop,
                RemainderArg::Error => RemainderPolicy::Error,
            },
            singleton_policy: match self.singletons {
                SingletonArg::Skip => SingletonPolicy::Skip,
                SingletonArg::Error => SingletonPolicy::Error,
            },
            backend: self.backend.into(),
            distance: self.distance.into(),
            repeats: self.repeats as usize,
        }
    }

    /// Plain recall without a group size, grouped recall otherwise.
    fn evaluate(&self, set: &EmbeddingSet) -> anyhow::Result<Vec<MetricReport>> {
        let config = self.config();
        let reports = match config.group_size {
            None => vec![recall_at_k(
                set,
                config.k,
                config.backend,
                config.distance,
                config.singleton_policy,
            )?],
            Some(_) => grouped_recall_repeated(set, &config)?,
        };
        for report in &reports {
            warn_all(report);
        }
        Ok(reports)
    }

    fn evaluate_one(&self, set: &EmbeddingSet) -> anyhow::Result<MetricReport> {
        if self.repeats > 1 {
            bail!("--repeats is only supported by eval");
        }
        Ok(self.evaluate(set)?.remove(0))
    }

    /// A saved JSON report is used as is; anything else is evaluated.
    fn report_for(&self, path: &Path, labels: Option<&Path>) -> anyhow::Result<MetricReport> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let report = io::load_metric_report(path).with_context(|| format!("reading report {}", path.display()))?;
            warn_all(&report);
            return Ok(report);
        }
        self.evaluate_one(&load(path, labels)?)
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let alpha: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(format!("{alpha} is not in (0, 1)"))
    }
}

fn warn_all(report: &MetricReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn load(path: &Path, labels: Option<&Path>) -> anyhow::Result<EmbeddingSet> {
    let mut file = DatasetFileRef::new(path);
    if let Some(labels) = labels {
        file = file.with_sidecar(labels);
    }
    Ok(io::load_dataset(&file)?)
}

#[derive(Debug, Args)]
struct EvalCmd {
    /// Dataset file (CSV or GREC binary).
    #[arg(long)]
    data: PathBuf,
    /// Newline-delimited labels, one per row.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    eval: EvalFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct CompareCmd {
    /// First split: a dataset file or a saved JSON report.
    #[arg(long)]
    data_a: PathBuf,
    #[arg(long)]
    labels_a: Option<PathBuf>,
    /// Second split: a dataset file or a saved JSON report.
    #[arg(long)]
    data_b: PathBuf,
    #[arg(long)]
    labels_b: Option<PathBuf>,
    #[command(flatten)]
    eval: EvalFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct GapCmd {
    /// Train split: a dataset file or a saved JSON report.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    /// Test split: a dataset file or a saved JSON report.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[command(flatten)]
    eval: EvalFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SynthFlags {
    #[arg(long, default_value_t = synth::DEFAULT_PER_CLASS)]
    per_class: usize,
    #[arg(long, default_value_t = synth::DEFAULT_DIM)]
    dim: usize,
    /// Cluster noise; calibrated to Recall@1 = 0.6 at 64 classes when omitted.
    #[arg(long)]
    std: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SynthFlags {
    fn spec(&self, num_classes: usize) -> anyhow::Result<SyntheticSpec> {
        let base = SyntheticSpec {
            num_classes: synth::CALIBRATION_CLASSES,
            samples_per_class: self.per_class,
            dim: self.dim,
            class_center_scale: self.center_scale,
            cluster_std: self.std.unwrap_or(0.0),
            seed: self.seed,
        };
        let cluster_std = match self.std {
            Some(std) => std,
            None => {
                let std = synth::calibrate_noise(&base, synth::CALIBRATION_TARGET, 8)?;
                eprintln!("calibrated cluster std: {std}");
                std
            }
        };
        let spec = SyntheticSpec {
            num_classes,
            cluster_std,
            ..base
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct SweepCmd {
    /// Class counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128, 256])]
    classes: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    group_size: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[command(flatten)]
    synth: SynthFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct CoverageCmd {
    /// Class count of each trial's dataset, split into two halves.
    #[arg(long, default_value_t = 512)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    group_size: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[command(flatten)]
    synth: SynthFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct CorrelateCmd {
    #[arg(long, default_value_t = synth::CALIBRATION_CLASSES)]
    classes: usize,
    /// Number of noise levels, evenly spaced from 0 to twice the base noise.
    #[arg(long, default_value_t = 10)]
    levels: usize,
    #[arg(long, default_value_t = 8)]
    group_size: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[command(flatten)]
    synth: SynthFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct BenchCmd {
    /// Dataset sizes in rows, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [5000usize, 10000, 20000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    group_size: usize,
    #[arg(long, value_enum, default_value = "brute")]
    backend: BackendArg,
    /// Timed repetitions per size; the median is reported.
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.25)]
    std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct GenCmd {
    #[arg(long, default_value_t = synth::CALIBRATION_CLASSES)]
    classes: usize,
    #[command(flatten)]
    synth: SynthFlags,
    /// Destination; `.csv` writes CSV, anything else the GREC binary format.
    #[arg(long)]
    out: PathBuf,
    /// Write labels to this sidecar file instead of a CSV column.
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Eval(cmd) => {
            let set = load(&cmd.data, cmd.labels.as_deref())?;
            let mut reports = cmd.eval.evaluate(&set)?;
            if reports.len() == 1 {
                cmd.output.emit(&reports.remove(0))
            } else {
                cmd.output.emit(&reports)
            }
        }
        Command::Compare(cmd) => {
            let a = cmd.eval.report_for(&cmd.data_a, cmd.labels_a.as_deref())?;
            let b = cmd.eval.report_for(&cmd.data_b, cmd.labels_b.as_deref())?;
            let comparison = compare_splits(&a, &b, cmd.eval.alpha)?;
            if !comparison.consistent {
                eprintln!(
                    "warning: difference {} exceeds the bound {}",
                    comparison.difference, comparison.bound
                );
            }
            cmd.output.emit(&comparison)
        }
        Command::Gap(cmd) => {
            let train = cmd.eval.report_for(&cmd.train, cmd.train_labels.as_deref())?;
            let test = cmd.eval.report_for(&cmd.test, cmd.test_labels.as_deref())?;
            cmd.output.emit(&generalization_gap(&train, &test)?)
        }
        Command::Sweep(cmd) => {
            let spec = cmd.synth.spec(synth::CALIBRATION_CLASSES)?;
            let report = synth::sweep_class_count(&spec, &cmd.classes, cmd.group_size, cmd.k, cmd.trials)?;
            cmd.output.emit(&report)
        }
        Command::Coverage(cmd) => {
            let spec = cmd.synth.spec(cmd.classes)?;
            let report = synth::coverage_experiment(&spec, cmd.group_size, cmd.k, cmd.alpha, cmd.trials)?;
            cmd.output.emit(&report)
        }
        Command::Correlate(cmd) => {
            let spec = cmd.synth.spec(cmd.classes)?;
            let specs = synth::noise_ladder(&spec, 2.0 * spec.cluster_std, cmd.levels);
            let report = synth::correlation_experiment(&specs, cmd.group_size, cmd.k)?;
            if report.pearson.is_none() {
                eprintln!("warning: correlation is undefined, one metric is constant across levels");
            }
            cmd.output.emit(&report)
        }
        Command::Bench(cmd) => {
            let config = BenchConfig {
                sizes: cmd.sizes,
                group_size: cmd.group_size,
                backend: cmd.backend.into(),
                trials: cmd.trials,
                samples_per_class: cmd.per_class,
                dim: cmd.dim,
                cluster_std: cmd.std,
                k: 1,
                seed: cmd.seed,
            };
            let report = run_scaling(&config)?;
            if report.full_slope.is_none() {
                eprintln!("warning: slopes need at least two sizes");
            }
            cmd.output.emit(&report)
        }
        Command::Gen(cmd) => {
            let set = synth::generate(&cmd.synth.spec(cmd.classes)?)?;
            let mut file = DatasetFileRef::new(&cmd.out);
            if let Some(labels) = &cmd.labels {
                file = file.with_sidecar(labels);
            }
            io::save_dataset(&set, &file)?;
            Ok(())
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("GREC_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("GREC_THREADS={value:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let internal = err.chain().any(|e| {
        e.downcast_ref::<grec_core::Error>()
            .is_some_and(grec_core::Error::is_internal)
    });
    if internal {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = std::panic::catch_unwind(|| configure_threads().and_then(|()| run(cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
        Err(_) => ExitCode::from(2),
    }
}
