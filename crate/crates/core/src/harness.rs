//! Experiment plumbing: a flat `key = value` configuration, data preparation
//! with optional corruption, and the dimension/noise sweep and ablation runs.
//!
//! Configuration keys (anything else is rejected):
//!
//! ```text
//! data.source            synthetic | csv | idx
//! data.path              training file (csv/idx)
//! data.test_path         optional separate test file; otherwise a per-class split
//! data.normalize         scale every sample to unit l2 norm (default false)
//! synthetic.classes      default 5
//! synthetic.per_class    samples generated per class (default 80)
//! synthetic.dim          default 64
//! synthetic.sep          default 6
//! split.train_per_class  default 40
//! noise.kind             pixel | block | salt_pepper | gaussian (default pixel)
//! noise.level            default 0
//! noise.image_height     image shape for block corruption
//! noise.image_width
//! noise.train            corrupt the training split as well (default true)
//! sweep.dims             comma list of target dimensions
//! sweep.noise            comma list of kind@level entries
//! reps                   repetitions per grid cell (default 3)
//! <hyperparameter>       any key of Hyperparameters::set, e.g. lambda1, dim, seed
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::classifier::evaluate;
use crate::data::{
    corrupt, load_dataset, make_synthetic, CorruptionKind, CorruptionSpec, DataFormat,
    LabeledDataset,
};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trainer::{fit, FitReport, Hyperparameters};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        per_class: usize,
        dim: usize,
        sep: f64,
    },
    File {
        path: PathBuf,
        format: DataFormat,
        test_path: Option<PathBuf>,
    },
}

/// One noise setting of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSetting {
    pub kind: CorruptionKind,
    pub level: f64,
}

impl FromStr for NoiseSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, level) = s
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("noise entry `{s}` is not kind@level")))?;
        let level = level
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid noise level in `{s}`")))?;
        Ok(Self {
            kind: kind.trim().parse()?,
            level,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig<T: Real> {
    pub source: DataSource,
    pub normalize: bool,
    pub train_per_class: usize,
    pub noise: NoiseSetting,
    pub image_shape: Option<(usize, usize)>,
    pub corrupt_train: bool,
    pub sweep_dims: Vec<usize>,
    pub sweep_noise: Vec<NoiseSetting>,
    pub reps: usize,
    pub hp: Hyperparameters<T>,
}

impl<T: Real> Default for ExperimentConfig<T> {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic {
                classes: 5,
                per_class: 80,
                dim: 64,
                sep: 6.0,
            },
            normalize: false,
            train_per_class: 40,
            noise: NoiseSetting {
                kind: CorruptionKind::Pixel,
                level: 0.0,
            },
            image_shape: None,
            corrupt_train: true,
            sweep_dims: Vec::new(),
            sweep_noise: Vec::new(),
            reps: 3,
            hp: Hyperparameters::default(),
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid value `{value}` for `{key}`"
        ))),
    }
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl<T: Real> ExperimentConfig<T> {
    /// Parses config text. Paths are resolved relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut raw: Vec<(usize, String, String)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim().to_string();
            if raw.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    n + 1
                )));
            }
            raw.push((n + 1, key, value.trim().to_string()));
        }
        let mut cfg = Self::default();
        // The source kind decides how the other data keys are read.
        if let Some((line, _, v)) = raw.iter().find(|(_, k, _)| k == "data.source") {
            cfg.source = match v.as_str() {
                "synthetic" => cfg.source,
                "csv" | "idx" => DataSource::File {
                    path: PathBuf::new(),
                    format: v.parse()?,
                    test_path: None,
                },
                other => {
                    return Err(Error::Config(format!(
                        "line {line}: unknown data source `{other}`"
                    )))
                }
            };
        }
        for (line, key, value) in &raw {
            if key == "data.source" {
                continue;
            }
            cfg.set(key, value, base)
                .map_err(|e| Error::Config(format!("line {line}: {}", strip_config(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies one `key = value` pair (also used for command-line overrides).
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        match (key, &mut self.source) {
            ("data.path", DataSource::File { path, .. }) => *path = base.join(value),
            ("data.test_path", DataSource::File { test_path, .. }) => {
                *test_path = Some(base.join(value))
            }
            ("synthetic.classes", DataSource::Synthetic { classes, .. }) => {
                *classes = parse_value(key, value)?
            }
            ("synthetic.per_class", DataSource::Synthetic { per_class, .. }) => {
                *per_class = parse_value(key, value)?
            }
            ("synthetic.dim", DataSource::Synthetic { dim, .. }) => *dim = parse_value(key, value)?,
            ("synthetic.sep", DataSource::Synthetic { sep, .. }) => *sep = parse_value(key, value)?,
            ("data.path" | "data.test_path", _) => {
                return Err(Error::Config(format!(
                    "`{key}` needs data.source = csv or idx"
                )))
            }
            (k, _) if k.starts_with("synthetic.") => {
                return Err(Error::Config(format!(
                    "`{key}` needs data.source = synthetic"
                )))
            }
            ("data.normalize", _) => self.normalize = parse_flag(key, value)?,
            ("split.train_per_class", _) => self.train_per_class = parse_value(key, value)?,
            ("noise.kind", _) => self.noise.kind = value.parse()?,
            ("noise.level", _) => self.noise.level = parse_value(key, value)?,
            ("noise.image_height", _) => {
                let w = self.image_shape.map_or(0, |s| s.1);
                self.image_shape = Some((parse_value(key, value)?, w));
            }
            ("noise.image_width", _) => {
                let h = self.image_shape.map_or(0, |s| s.0);
                self.image_shape = Some((h, parse_value(key, value)?));
            }
            ("noise.train", _) => self.corrupt_train = parse_flag(key, value)?,
            ("sweep.dims", _) => self.sweep_dims = parse_list(key, value)?,
            ("sweep.noise", _) => self.sweep_noise = parse_list(key, value)?,
            ("reps", _) => self.reps = parse_value(key, value)?,
            _ => {
                if !self.hp.set(key, value)? {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match &self.source {
            DataSource::Synthetic {
                classes,
                per_class,
                dim,
                sep,
            } => {
                if *classes < 2 || *per_class < 2 || *dim < 2 || !(*sep >= 0.0) {
                    return Err(Error::Config(
                        "synthetic data needs classes >= 2, per_class >= 2, dim >= 2 and sep >= 0"
                            .into(),
                    ));
                }
                if self.train_per_class == 0 || self.train_per_class >= *per_class {
                    return Err(Error::Config(format!(
                        "split.train_per_class = {} must lie in 1..{per_class}",
                        self.train_per_class
                    )));
                }
            }
            DataSource::File {
                path, test_path, ..
            } => {
                if path.as_os_str().is_empty() {
                    return Err(Error::Config(
                        "data.path is required for file sources".into(),
                    ));
                }
                if test_path.is_none() && self.train_per_class == 0 {
                    return Err(Error::Config(
                        "split.train_per_class must be at least 1".into(),
                    ));
                }
            }
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if matches!(self.image_shape, Some((0, _)) | Some((_, 0))) {
            return Err(Error::Config(
                "noise.image_height and noise.image_width must both be set".into(),
            ));
        }
        Ok(())
    }

    fn spec(&self, noise: NoiseSetting, seed: u64) -> CorruptionSpec {
        let spec = CorruptionSpec::new(noise.kind, noise.level, seed);
        match self.image_shape {
            Some((h, w)) => spec.with_image_shape(h, w),
            None => spec,
        }
    }

    /// Clean train/test data for repetition `rep`.
    pub fn clean_split(&self, rep: usize) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
        let seed = rep_seed(self.hp.seed, rep);
        let (train, test) = match &self.source {
            DataSource::Synthetic {
                classes,
                per_class,
                dim,
                sep,
            } => make_synthetic::<T>(*classes, *per_class, *dim, *sep, seed)?
                .split_per_class(self.train_per_class, seed)?,
            DataSource::File {
                path,
                format,
                test_path,
            } => {
                let all = load_dataset::<T>(path, *format)?;
                match test_path {
                    Some(tp) => (all, load_dataset::<T>(tp, *format)?),
                    None => all.split_per_class(self.train_per_class, seed)?,
                }
            }
        };
        if self.normalize {
            Ok((train.normalized_columns(), test.normalized_columns()))
        } else {
            Ok((train, test))
        }
    }

    /// Train/test data for repetition `rep` under `noise`. The two splits are
    /// corrupted with independent seeds.
    pub fn split(
        &self,
        rep: usize,
        noise: NoiseSetting,
    ) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
        let (train, test) = self.clean_split(rep)?;
        if noise.level == 0.0 {
            return Ok((train, test));
        }
        let seed = rep_seed(self.hp.seed, rep);
        let train = if self.corrupt_train {
            corrupt(&train, &self.spec(noise, seed ^ 0x7472_6169_6e00_0000))?
        } else {
            train
        };
        let test = corrupt(&test, &self.spec(noise, seed ^ 0x7465_7374_0000_0000))?;
        Ok((train, test))
    }

    /// Dataset used by `train`: the (possibly corrupted) training split of
    /// repetition 0.
    pub fn training_set(&self) -> Result<LabeledDataset<T>> {
        Ok(self.split(0, self.noise)?.0)
    }

    /// Test split of repetition 0 under the configured noise.
    pub fn test_set(&self) -> Result<LabeledDataset<T>> {
        Ok(self.split(0, self.noise)?.1)
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Seed of repetition `rep`.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64)
}

/// Fit on one split and return the test accuracy.
pub fn run_trial<T: Real>(
    cfg: &ExperimentConfig<T>,
    hp: &Hyperparameters<T>,
    rep: usize,
    noise: NoiseSetting,
) -> Result<f64> {
    let (train, test) = cfg.split(rep, noise)?;
    let hp = Hyperparameters {
        seed: rep_seed(hp.seed, rep),
        ..hp.clone()
    };
    let model = fit(&train, &hp)?;
    Ok(evaluate(&model, &test)?.accuracy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dimension: usize,
    pub noise: NoiseSetting,
    /// Mean over repetitions.
    pub accuracy: f64,
    pub per_rep: Vec<f64>,
}

/// Trains and evaluates every `(dimension, noise)` cell `reps` times. Cells
/// run in parallel; rows come back in grid order (dimensions outer).
pub fn sweep<T: Real>(cfg: &ExperimentConfig<T>) -> Result<Vec<SweepRow>> {
    let dims = if cfg.sweep_dims.is_empty() {
        vec![cfg.hp.dim]
    } else {
        cfg.sweep_dims.clone()
    };
    let noise = if cfg.sweep_noise.is_empty() {
        vec![cfg.noise]
    } else {
        cfg.sweep_noise.clone()
    };
    let cells: Vec<(usize, NoiseSetting, usize)> = dims
        .iter()
        .flat_map(|&d| {
            noise
                .iter()
                .flat_map(move |&n| (0..cfg.reps).map(move |r| (d, n, r)))
        })
        .collect();
    let accs: Vec<f64> = cells
        .par_iter()
        .map(|&(dim, n, rep)| {
            let hp = Hyperparameters {
                dim,
                ..cfg.hp.clone()
            };
            run_trial(cfg, &hp, rep, n).map_err(|e| {
                Error::Input(format!(
                    "sweep cell d={dim}, {}@{}, rep {rep}: {e}",
                    n.kind, n.level
                ))
            })
        })
        .collect::<Result<_>>()?;
    Ok(accs
        .chunks(cfg.reps)
        .zip(cells.iter().step_by(cfg.reps))
        .map(|(per_rep, &(dimension, noise, _))| SweepRow {
            dimension,
            noise,
            accuracy: per_rep.iter().sum::<f64>() / per_rep.len() as f64,
            per_rep: per_rep.to_vec(),
        })
        .collect())
}

/// `dimension,noise_kind,noise_level,accuracy`
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("dimension,noise_kind,noise_level,accuracy\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.dimension, r.noise.kind, r.noise.level, r.accuracy
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Full model.
    JpdlLr,
    /// No low-rank term (`alpha = 0`).
    Jpdl,
    /// Projection fixed at its PCA initialization.
    JdlLr,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::JpdlLr, Variant::Jpdl, Variant::JdlLr];

    pub fn name(self) -> &'static str {
        match self {
            Self::JpdlLr => "jpdl-lr",
            Self::Jpdl => "jpdl",
            Self::JdlLr => "jdl-lr",
        }
    }

    pub fn apply<T: Real>(self, hp: &Hyperparameters<T>) -> Hyperparameters<T> {
        match self {
            Self::JpdlLr => hp.clone(),
            Self::Jpdl => Hyperparameters {
                alpha: T::zero(),
                ..hp.clone()
            },
            Self::JdlLr => Hyperparameters {
                fixed_projection: true,
                ..hp.clone()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub accuracy: f64,
    pub per_rep: Vec<f64>,
}

/// The three variants on identical splits under the configured noise.
pub fn ablate<T: Real>(cfg: &ExperimentConfig<T>) -> Result<Vec<AblationRow>> {
    let cells: Vec<(Variant, usize)> = Variant::ALL
        .iter()
        .flat_map(|&v| (0..cfg.reps).map(move |r| (v, r)))
        .collect();
    let accs: Vec<f64> = cells
        .par_iter()
        .map(|&(v, rep)| run_trial(cfg, &v.apply(&cfg.hp), rep, cfg.noise))
        .collect::<Result<_>>()?;
    Ok(Variant::ALL
        .iter()
        .zip(accs.chunks(cfg.reps))
        .map(|(&variant, per_rep)| AblationRow {
            variant,
            accuracy: per_rep.iter().sum::<f64>() / per_rep.len() as f64,
            per_rep: per_rep.to_vec(),
        })
        .collect())
}

/// `variant,rep,accuracy`
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,rep,accuracy\n");
    for r in rows {
        for (rep, a) in r.per_rep.iter().enumerate() {
            let _ = writeln!(out, "{},{rep},{a}", r.variant.name());
        }
    }
    out
}

/// `outer,class,iteration,dict_gap,constraint,code_gap,mu` over every
/// sub-dictionary solve of a fit. Classes are reported by original label.
pub fn alm_trace_csv<T: Real>(report: &FitReport<T>, class_names: &[i64]) -> String {
    let mut out = String::from("outer,class,iteration,dict_gap,constraint,code_gap,mu\n");
    for (outer, classes) in report.alm_traces.iter().enumerate() {
        for (class, rows) in classes.iter().enumerate() {
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{:e},{:e},{:e},{:e}",
                    outer + 1,
                    class_names[class],
                    r.iteration,
                    r.dict_gap,
                    r.constraint,
                    r.code_gap,
                    r.mu
                );
            }
        }
    }
    out
}

/// `iteration,objective`
pub fn objective_trace_csv<T: Real>(trace: &[T]) -> String {
    let mut out = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}
