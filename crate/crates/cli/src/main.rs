use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jpdl::data::{corrupt, load_dataset, save_dataset, CorruptionSpec, DataFormat};
use jpdl::harness::{
    ablate, ablation_csv, alm_trace_csv, objective_trace_csv, sweep, sweep_csv, ExperimentConfig,
};
use jpdl::{
    evaluate, fit_with_report, load_model, save_model, CorruptionKind, Dataset64, Error, Model64,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRAIN: u8 = 3;
const EXIT_DIMENSION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "jpdl",
    version,
    about = "Joint projection and dictionary learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on the configured training data.
    Train(TrainArgs),
    /// Classify a test set with a saved model.
    Eval(EvalArgs),
    /// Write a corrupted copy of a dataset.
    Corrupt(CorruptArgs),
    /// Accuracy over a grid of dimensions and noise settings.
    Sweep(Common),
    /// Compare the full model against its two ablated variants.
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target dimension d.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    noise_kind: Option<String>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Drop the low-rank term (alpha = 0).
    #[arg(long)]
    no_lowrank: bool,
    /// Keep the initial PCA projection.
    #[arg(long)]
    fixed_projection: bool,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Write the objective trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the sub-dictionary solver residuals as CSV.
    #[arg(long)]
    alm_trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Test file; without it the test split of the configuration is used.
    #[arg(long)]
    data: Option<PathBuf>,
    /// csv or idx (default: inferred from the extension).
    #[arg(long)]
    format: Option<String>,
    /// Per-sample predictions and residuals as CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    noise_kind: String,
    #[arg(long)]
    noise_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image shape as HxW, needed for block corruption.
    #[arg(long)]
    image_shape: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, e: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn config_error(e: Error) -> Failure {
    Failure::new(EXIT_CONFIG, e)
}

fn load_config(c: &Common) -> CliResult<ExperimentConfig<f64>> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path).map_err(config_error)?,
        None => ExperimentConfig::default(),
    };
    let here = Path::new(".");
    let overrides = [
        ("seed", c.seed.map(|v| v.to_string())),
        ("dim", c.dim.map(|v| v.to_string())),
        ("noise.kind", c.noise_kind.clone()),
        ("noise.level", c.noise_level.map(|v| v.to_string())),
        ("reps", c.reps.map(|v| v.to_string())),
        ("alpha", c.no_lowrank.then(|| "0".to_string())),
        (
            "fixed_projection",
            c.fixed_projection.then(|| "true".to_string()),
        ),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v, here).map_err(config_error)?;
        }
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn format_of(path: &Path, explicit: Option<&str>) -> CliResult<DataFormat> {
    match explicit {
        Some(f) => f.parse().map_err(config_error),
        None => Ok(match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DataFormat::Csv,
            _ => DataFormat::Idx,
        }),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents)
        .map_err(|e| Failure::new(1, format!("cannot write {}: {e}", path.display())))
}

fn train(args: TrainArgs) -> CliResult {
    let cfg = load_config(&args.common)?;
    let out = args
        .common
        .out
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "train needs --out"))?;
    let data = cfg.training_set().map_err(config_error)?;
    cfg.hp.validate(data.dim()).map_err(config_error)?;
    let (model, report) =
        fit_with_report(&data, &cfg.hp).map_err(|e| Failure::new(EXIT_TRAIN, e))?;
    for (i, v) in model.objective_trace.iter().enumerate() {
        println!("{i} {v:.6e}");
    }
    if report.alm_unconverged > 0 {
        eprintln!(
            "warning: {} sub-dictionary solves hit the iteration cap",
            report.alm_unconverged
        );
    }
    save_model(&model, &out).map_err(|e| Failure::new(1, e))?;
    if let Some(p) = args.trace {
        write_file(&p, &objective_trace_csv(&model.objective_trace))?;
    }
    if let Some(p) = args.alm_trace {
        write_file(&p, &alm_trace_csv(&report, &model.class_names))?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult {
    let model: Model64 = load_model(&args.model).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let test: Dataset64 = match &args.data {
        Some(path) => {
            let format = format_of(path, args.format.as_deref())?;
            load_dataset(path, format).map_err(config_error)?
        }
        None => load_config(&args.common)?
            .test_set()
            .map_err(config_error)?,
    };
    let report = evaluate(&model, &test).map_err(|e| match e {
        Error::Dimension(_) => Failure::new(EXIT_DIMENSION, e),
        Error::Input(_) => Failure::new(EXIT_CONFIG, e),
        other => Failure::new(1, other),
    })?;
    println!(
        "accuracy {:.6} ({} / {})",
        report.accuracy,
        report.correct(),
        report.truth.len()
    );
    if let Some(p) = &args.common.out {
        write_file(p, &report.confusion_csv())?;
    }
    if let Some(p) = &args.predictions {
        write_file(p, &report.predictions_csv())?;
    }
    Ok(())
}

fn corrupt_cmd(args: CorruptArgs) -> CliResult {
    let format = format_of(&args.data, args.format.as_deref())?;
    let data: Dataset64 = load_dataset(&args.data, format).map_err(config_error)?;
    let kind: CorruptionKind = args.noise_kind.parse().map_err(config_error)?;
    let mut spec = CorruptionSpec::new(kind, args.noise_level, args.seed);
    if let Some(shape) = &args.image_shape {
        let parsed = shape
            .split_once('x')
            .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)));
        let (h, w) = parsed.ok_or_else(|| {
            Failure::new(EXIT_CONFIG, format!("image shape `{shape}` is not HxW"))
        })?;
        spec = spec.with_image_shape(h, w);
    }
    let noisy = corrupt(&data, &spec).map_err(config_error)?;
    save_dataset(&noisy, &args.out).map_err(|e| Failure::new(1, e))
}

fn sweep_cmd(args: Common) -> CliResult {
    let cfg = load_config(&args)?;
    let rows = sweep(&cfg).map_err(|e| Failure::new(EXIT_TRAIN, e))?;
    let csv = sweep_csv(&rows);
    match &args.out {
        Some(p) => write_file(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn ablate_cmd(args: Common) -> CliResult {
    let cfg = load_config(&args)?;
    let rows = ablate(&cfg).map_err(|e| Failure::new(EXIT_TRAIN, e))?;
    for r in &rows {
        println!("{} {:.4}", r.variant.name(), r.accuracy);
    }
    if let Some(p) = &args.out {
        write_file(p, &ablation_csv(&rows))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::debug!("exiting with code {}", f.code);
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
