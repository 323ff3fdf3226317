//! The `driftflow` command line: `train`, `sample`, `eval`, `verify`.
//!
//! Everything that affects the math lives in a JSON [`RunConfig`]; flags only
//! choose paths, seeds, NFE and output toggles.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evalkit::{emd_to_target, MetricReport};
use crate::io::{read_points, write_points};
use crate::netcore::{read_checkpoint, write_checkpoint};
use crate::sampler::{generate, TimeGrid};
use crate::svg::{write_scatter, Layer, GENERATED_COLOR, SOURCE_COLOR};
use crate::synthdata::{sample_source, sample_target, DatasetName, DatasetSpec, PointBatch, SourceSpec};
use crate::trainer::{train, TrainConfig};
use crate::verify::{run_suite, Suite, SuiteSizes};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Evaluation sample count used for the per-NFE metrics written by `train`.
pub const EVAL_POINTS: usize = 512;

fn default_nfe() -> Vec<usize> {
    vec![1, 2, 5, 10, 20, 50]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// The JSON run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub source: SourceSpec,
    /// Grid sizes evaluated after training.
    #[serde(default = "default_nfe")]
    pub nfe: Vec<usize>,
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(train: TrainConfig, dataset: DatasetSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            train,
            dataset,
            source: SourceSpec::default(),
            nfe: default_nfe(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_slice(bytes).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.nfe.contains(&0) {
            return Err(Error::Config("nfe entries must be at least 1".into()));
        }
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        self.source.validate().map_err(|e| field("source", e))?;
        self.dataset.validate().map_err(|e| field("dataset", e))?;
        self.train.validate(&self.dataset).map_err(|e| field("train", e))
    }
}

/// SHA-256 of the raw config bytes, hex encoded.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Metric(_) => EXIT_CONFIG,
        Error::Divergence { .. } | Error::NonFinite(_) | Error::Inference { .. } => EXIT_DIVERGENCE,
        Error::Corrupt { .. } | Error::Io { .. } | Error::Csv { .. } => EXIT_IO,
    }
}

#[derive(Debug, Parser)]
#[command(name = "driftflow", version, about = "Drift flow matching on 2-D synthetic data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a JSON run config.
    Train(TrainArgs),
    /// Generate points from a checkpoint.
    Sample(SampleArgs),
    /// Squared 2-Wasserstein distance of generated points to a reference.
    Eval(EvalArgs),
    /// Run a property suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub nfe: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV of generated points.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-step state CSVs and a manifest.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Scatter plot of source and generated points.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub generated: PathBuf,
    /// Reference points as CSV.
    #[arg(long, conflicts_with = "dataset")]
    pub reference: Option<PathBuf>,
    /// Reference dataset given as a JSON dataset spec or a bare dataset name.
    #[arg(long, required_unless_present = "reference")]
    pub dataset: Option<String>,
    /// Seed for sampling the reference dataset.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subsample the larger side with this seed instead of failing on a count mismatch.
    #[arg(long)]
    pub subsample: Option<u64>,
    /// Config file whose hash is recorded in the report.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// One of drift_equilibrium, gradient_fd, w2_bounds, action_bound,
    /// infinitesimal_limit, sinkhorn, or `all`.
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Summary written next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub method: crate::trainer::Method,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub initial_mean_drift_norm: Option<f64>,
    pub final_mean_drift_norm: Option<f64>,
    /// `(nfe, emd)` on fresh evaluation samples.
    pub emd_by_nfe: Vec<(usize, f64)>,
    pub source_emd: f64,
    pub wall_time_secs: f64,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reference points for an unconditional or class-conditional dataset.
fn reference_points(dataset: &DatasetSpec, n: usize, seed: u64) -> PointBatch {
    sample_target(dataset, n, seed)
}

fn class_labels(n: usize, classes: usize) -> Option<Vec<usize>> {
    (classes > 0).then(|| (0..n).map(|i| i % classes).collect())
}

/// Trains, writes `checkpoint.bin`, `train_report.csv` and `train_report.json`.
pub fn cmd_train(config_path: &Path, out_override: Option<&Path>) -> Result<TrainSummary> {
    let bytes = fs::read(config_path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", config_path.display())))?;
    let cfg = RunConfig::from_json(&bytes)?;
    let out_dir = match out_override {
        Some(p) => p.to_path_buf(),
        None if cfg.output_dir.is_absolute() => cfg.output_dir.clone(),
        None => config_path.parent().unwrap_or(Path::new(".")).join(&cfg.output_dir),
    };
    create_dir(&out_dir)?;

    let outcome = train(&cfg.train, &cfg.source, &cfg.dataset)?;
    write_checkpoint(&out_dir.join("checkpoint.bin"), &outcome.checkpoint)?;
    outcome.report.write_csv(&out_dir.join("train_report.csv"))?;

    let eval_seed = cfg.train.seed.wrapping_add(1);
    let x0 = sample_source(&cfg.source, EVAL_POINTS, eval_seed);
    let reference = reference_points(&cfg.dataset, EVAL_POINTS, eval_seed.wrapping_add(1));
    let labels = class_labels(EVAL_POINTS, outcome.checkpoint.net.arch().class_count);
    let unlabeled_ref;
    let reference = if labels.is_some() {
        &reference
    } else {
        unlabeled_ref = PointBatch::new(reference.data().to_owned())?;
        &unlabeled_ref
    };
    let source_emd = match &labels {
        Some(l) => emd_to_target(&PointBatch::with_labels(x0.data().to_owned(), l.clone())?, reference, Some(eval_seed))?,
        None => emd_to_target(&x0, reference, None)?,
    };
    let mut emd_by_nfe = Vec::with_capacity(cfg.nfe.len());
    for &nfe in &cfg.nfe {
        let generated = generate(&outcome.checkpoint.net, &x0, &TimeGrid::uniform(nfe)?, false, labels.as_deref())?;
        emd_by_nfe.push((nfe, emd_to_target(&generated.output, reference, Some(eval_seed))?));
    }

    let report = &outcome.report;
    let summary = TrainSummary {
        config_hash: config_hash(&bytes),
        method: cfg.train.method,
        steps: report.losses.len(),
        final_loss: report.losses.last().copied(),
        initial_mean_drift_norm: report.drift_norms.first().copied(),
        final_mean_drift_norm: report.drift_norms.last().copied(),
        emd_by_nfe,
        source_emd,
        wall_time_secs: report.wall_time_secs,
    };
    write_json(&out_dir.join("train_report.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub nfe: usize,
    pub grid: Vec<f64>,
    pub files: Vec<String>,
}

/// Generates `n` points with `nfe` transport steps from the checkpoint's source.
pub fn cmd_sample(args: &SampleArgs) -> Result<PointBatch> {
    if args.nfe == 0 {
        return Err(Error::InvalidArgument("nfe must be at least 1".into()));
    }
    if args.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let source_spec = ckpt.source.unwrap_or_default();
    let source = sample_source(&source_spec, args.n, args.seed);
    let labels = class_labels(args.n, ckpt.net.arch().class_count);
    let grid = TimeGrid::uniform(args.nfe)?;
    let generated = generate(&ckpt.net, &source, &grid, args.trajectory.is_some(), labels.as_deref())?;
    write_points(&args.out, &generated.output)?;

    if let (Some(dir), Some(states)) = (&args.trajectory, &generated.trajectory) {
        create_dir(dir)?;
        let mut files = Vec::with_capacity(states.len());
        for (m, state) in states.iter().enumerate() {
            let name = format!("step_{m:03}.csv");
            let batch = match &labels {
                Some(l) => PointBatch::with_labels(state.clone(), l.clone())?,
                None => PointBatch::new(state.clone())?,
            };
            write_points(&dir.join(&name), &batch)?;
            files.push(name);
        }
        let manifest = TrajectoryManifest {
            nfe: args.nfe,
            grid: grid.points().to_vec(),
            files,
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    if let Some(path) = &args.svg {
        write_scatter(
            path,
            &[
                Layer {
                    points: source.data(),
                    color: SOURCE_COLOR,
                    label: "source",
                },
                Layer {
                    points: generated.output.data(),
                    color: GENERATED_COLOR,
                    label: "generated",
                },
            ],
        )?;
    }
    Ok(generated.output)
}

fn parse_dataset(arg: &str) -> Result<DatasetSpec> {
    let spec = if arg.trim_start().starts_with('{') {
        serde_json::from_str(arg).map_err(|e| Error::Config(format!("--dataset: {e}")))?
    } else {
        let name: DatasetName = serde_json::from_value(serde_json::Value::String(arg.to_string()))
            .map_err(|_| Error::Config(format!("--dataset: unknown dataset {arg:?}")))?;
        DatasetSpec::new(name)
    };
    spec.validate().map_err(|e| Error::Config(format!("--dataset: {e}")))?;
    Ok(spec)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricReport> {
    let generated = read_points(&args.generated)?;
    let reference = match (&args.reference, &args.dataset) {
        (Some(path), _) => read_points(path)?,
        (None, Some(ds)) => reference_points(&parse_dataset(ds)?, generated.len(), args.seed),
        (None, None) => return Err(Error::InvalidArgument("give --reference or --dataset".into())),
    };
    let value = emd_to_target(&generated, &reference, args.subsample)?;
    let config_hash = match &args.config {
        Some(p) => Some(config_hash(&fs::read(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };
    let report = MetricReport {
        metric: "emd".into(),
        value,
        n: generated.len().min(reference.len()),
        seed: args.subsample.unwrap_or(args.seed),
        config_hash,
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

/// Runs the requested suites; `Ok(false)` when any property failed.
pub fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let suites = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(&args.suite)?]
    };
    let mut ok = true;
    for suite in suites {
        let report = run_suite(suite, args.seed, &SuiteSizes::default())?;
        print!("{report}");
        if !report.passed() {
            ok = false;
            if let Some(s) = report.first_failing_seed() {
                println!("  first failing instance seed: {s}");
            }
        }
    }
    Ok(ok)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => {
            let s = cmd_train(&a.config, a.out.as_deref())?;
            println!("trained {} steps, config hash {}", s.steps, s.config_hash);
            for (nfe, emd) in &s.emd_by_nfe {
                println!("  nfe {nfe:>3}: emd {emd:.5}");
            }
            Ok(EXIT_OK)
        }
        Command::Sample(a) => {
            let out = cmd_sample(&a)?;
            println!("wrote {} points to {}", out.len(), a.out.display());
            Ok(EXIT_OK)
        }
        Command::Eval(a) => {
            let r = cmd_eval(&a)?;
            println!("{}", serde_json::to_string(&r).expect("serializable"));
            Ok(EXIT_OK)
        }
        Command::Verify(a) => Ok(if cmd_verify(&a)? { EXIT_OK } else { EXIT_VERIFY }),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{"schema_version":1,
            "train":{"method":"dfm","groups":2,"group_size":4,"steps":0,"seed":3},
            "dataset":{"name":"two_moons","scale":1.0,"noise_std":0.05}}"#
            .to_string()
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg = RunConfig::from_json(minimal_json().as_bytes()).unwrap();
        assert_eq!(cfg.nfe, default_nfe());
        assert_eq!(cfg.source, SourceSpec::default());
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        let extra = minimal_json().replace("\"schema_version\":1,", "\"schema_version\":1,\"bogus\":2,");
        assert!(matches!(RunConfig::from_json(extra.as_bytes()), Err(Error::Config(_))));
        let v2 = minimal_json().replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(RunConfig::from_json(v2.as_bytes()).unwrap_err().to_string().contains("schema_version"));
        let nested = minimal_json().replace("\"seed\":3", "\"seed\":3,\"lr\":0.1");
        assert!(RunConfig::from_json(nested.as_bytes()).is_err());
    }

    #[test]
    fn exit_codes_cover_every_error() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Divergence { step: 3, detail: "nan".into() }), 2);
        assert_eq!(exit_code(&Error::Inference { step: 0 }), 2);
        assert_eq!(exit_code(&Error::Corrupt { path: "a".into(), detail: "b".into() }), 3);
        assert_eq!(exit_code(&Error::Metric("m".into())), 1);
    }

    #[test]
    fn dataset_argument_forms() {
        assert_eq!(parse_dataset("two_moons").unwrap(), DatasetSpec::new(DatasetName::TwoMoons));
        let json = r#"{"name":"checkerboard","scale":2.0,"noise_std":0.0,"class_count":4}"#;
        assert_eq!(parse_dataset(json).unwrap().class_count, 4);
        assert!(parse_dataset("spiral").is_err());
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            config_hash(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
