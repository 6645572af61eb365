//! Labeled sample matrices: loading, saving, synthetic generation and the
//! four corruption models used by the robustness experiments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Real;

/// Default intensity ceiling used by the pixel-style corruptions.
pub const DEFAULT_MAX_VALUE: f64 = 255.0;

/// Samples stored as the columns of an `m x N` matrix together with a class
/// index per column.
///
/// Class indices are zero-based and contiguous (`0..K`); `class_names` keeps
/// the original label value of every class in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T: Real> {
    samples: DMatrix<T>,
    labels: Vec<usize>,
    class_names: Vec<i64>,
    max_value: T,
}

impl<T: Real> LabeledDataset<T> {
    /// Builds a dataset from zero-based class indices.
    pub fn new(samples: DMatrix<T>, labels: Vec<usize>, class_names: Vec<i64>) -> Result<Self> {
        if samples.ncols() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} sample columns but {} labels",
                samples.ncols(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Input("dataset has no samples".into()));
        }
        let k = class_names.len();
        let mut seen = vec![false; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::Input(format!("class index {l} outside 0..{k}")));
            }
            seen[l] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!(
                "class {} has no samples",
                class_names[empty]
            )));
        }
        if let Some((idx, _)) = samples.iter().enumerate().find(|(_, v)| !v.finite()) {
            return Err(Error::Input(format!(
                "non-finite feature in sample {}",
                idx / samples.nrows().max(1)
            )));
        }
        let max_value = T::of(DEFAULT_MAX_VALUE);
        Ok(Self {
            samples,
            labels,
            class_names,
            max_value,
        })
    }

    /// Builds a dataset from arbitrary integer labels, remapping them to
    /// contiguous class indices in order of first appearance.
    pub fn from_raw_labels(samples: DMatrix<T>, raw: &[i64]) -> Result<Self> {
        let mut names: Vec<i64> = Vec::new();
        let labels = raw
            .iter()
            .map(|r| match names.iter().position(|n| n == r) {
                Some(i) => i,
                None => {
                    names.push(*r);
                    names.len() - 1
                }
            })
            .collect();
        Self::new(samples, labels, names)
    }

    pub fn with_max_value(mut self, max_value: T) -> Self {
        self.max_value = max_value;
        self
    }

    pub fn samples(&self) -> &DMatrix<T> {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[i64] {
        &self.class_names
    }

    pub fn max_value(&self) -> T {
        self.max_value
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Column indices of the samples belonging to `class`.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.labels[j] == class)
            .collect()
    }

    /// Columns of `class` as a standalone matrix.
    pub fn class_samples(&self, class: usize) -> DMatrix<T> {
        self.samples.select_columns(&self.class_indices(class))
    }

    /// Keeps the given columns, in the given order. Classes that end up empty
    /// are dropped and indices recompacted.
    pub fn subset(&self, columns: &[usize]) -> Result<Self> {
        let samples = self.samples.select_columns(columns);
        let raw: Vec<i64> = columns
            .iter()
            .map(|&j| self.class_names[self.labels[j]])
            .collect();
        Ok(Self::from_raw_labels(samples, &raw)?.with_max_value(self.max_value))
    }

    /// Reorders samples so every class occupies a contiguous column span, in
    /// class-index order. Within a class the original order is kept. Returns
    /// the reordered dataset, its column partition, and the permutation
    /// (`new column -> old column`).
    pub fn grouped_by_class(&self) -> (Self, Partition, Vec<usize>) {
        let mut order = Vec::with_capacity(self.len());
        for c in 0..self.num_classes() {
            order.extend(self.class_indices(c));
        }
        let grouped = Self {
            samples: self.samples.select_columns(&order),
            labels: order.iter().map(|&j| self.labels[j]).collect(),
            class_names: self.class_names.clone(),
            max_value: self.max_value,
        };
        (grouped, Partition::from_counts(&self.class_counts()), order)
    }

    pub fn is_grouped(&self) -> bool {
        self.labels.windows(2).all(|w| w[0] <= w[1])
    }

    /// Scales every nonzero column to unit `l2` norm.
    pub fn normalized_columns(&self) -> Self {
        let mut out = self.clone();
        for mut col in out.samples.column_iter_mut() {
            let n = col.norm();
            if n > T::zero() {
                col /= n;
            }
        }
        out
    }

    /// Splits each class into its first `train_per_class` samples (after a
    /// seeded shuffle) and the remainder.
    pub fn split_per_class(&self, train_per_class: usize, seed: u64) -> Result<(Self, Self)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for c in 0..self.num_classes() {
            let mut idx = self.class_indices(c);
            if idx.len() <= train_per_class {
                return Err(Error::Input(format!(
                    "class {} has {} samples, cannot hold out any after {} training samples",
                    self.class_names[c],
                    idx.len(),
                    train_per_class
                )));
            }
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
            let rest = idx.split_off(train_per_class);
            idx.sort_unstable();
            let mut rest = rest;
            rest.sort_unstable();
            train.extend(idx);
            test.extend(rest);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train)?, self.subset(&test)?))
    }
}

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// One sample per row, features then an integer label.
    Csv,
    /// Big-endian IDX3 image file with a companion IDX1 label file.
    Idx,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "idx" => Ok(DataFormat::Idx),
            other => Err(Error::Config(format!("unknown data format `{other}`"))),
        }
    }
}

pub fn load_dataset<T: Real>(
    path: impl AsRef<Path>,
    format: DataFormat,
) -> Result<LabeledDataset<T>> {
    let path = path.as_ref();
    match format {
        DataFormat::Csv => parse_csv(&fs::read_to_string(path)?),
        DataFormat::Idx => {
            let labels = companion_label_path(path).ok_or_else(|| {
                Error::Input(format!(
                    "no companion label file found for {}",
                    path.display()
                ))
            })?;
            load_idx_pair(path, labels)
        }
    }
}

/// Derives the IDX1 label file next to an IDX3 image file: `images` becomes
/// `labels` and `idx3` becomes `idx1` in the file name; failing that,
/// `<file>.labels` is tried.
pub fn companion_label_path(images: &Path) -> Option<PathBuf> {
    let name = images.file_name()?.to_string_lossy().into_owned();
    let swapped = name.replace("images", "labels").replace("idx3", "idx1");
    let candidates = [
        images.with_file_name(swapped),
        images.with_file_name(format!("{name}.labels")),
    ];
    candidates.into_iter().find(|p| p != images && p.is_file())
}

pub fn parse_csv<T: Real>(text: &str) -> Result<LabeledDataset<T>> {
    let mut columns: Vec<T> = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let location = format!("row {}", lineno + 1);
        if fields.len() < 2 {
            return Err(Error::parse(
                location,
                "expected at least one feature and a label",
            ));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Dimension(format!(
                    "{location} has {} fields, expected {w}",
                    fields.len()
                )))
            }
            _ => {}
        }
        let (features, label) = fields.split_at(fields.len() - 1);
        for (c, f) in features.iter().enumerate() {
            let v: T = f.parse().map_err(|_| {
                Error::parse(
                    format!("{location}, column {}", c + 1),
                    format!("`{f}` is not a number"),
                )
            })?;
            columns.push(v);
        }
        let label: i64 = label[0].parse().map_err(|_| {
            Error::parse(
                location.clone(),
                format!("label `{}` is not an integer", label[0]),
            )
        })?;
        raw_labels.push(label);
    }
    let Some(width) = width else {
        return Err(Error::parse("row 1", "no samples"));
    };
    let samples = DMatrix::from_column_slice(width - 1, raw_labels.len(), &columns);
    LabeledDataset::from_raw_labels(samples, &raw_labels)
}

/// Writes the dataset in the CSV schema read by [`parse_csv`], using the
/// scalar's shortest round-trip representation.
pub fn to_csv<T: Real>(ds: &LabeledDataset<T>) -> String {
    let mut out = String::new();
    for j in 0..ds.len() {
        for v in ds.samples.column(j).iter() {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", ds.class_names[ds.labels[j]]);
    }
    out
}

pub fn save_dataset<T: Real>(ds: &LabeledDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_csv(ds))?;
    Ok(())
}

struct IdxArray {
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn parse_idx(bytes: &[u8], what: &str) -> Result<IdxArray> {
    let at = |off: usize| format!("{what} byte {off}");
    if bytes.len() < 4 {
        return Err(Error::parse(at(0), "truncated IDX header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::parse(at(0), "bad IDX magic"));
    }
    let type_code = bytes[2];
    let ndim = bytes[3] as usize;
    let width = match type_code {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        other => {
            return Err(Error::parse(
                at(2),
                format!("unknown IDX type code {other:#04x}"),
            ))
        }
    };
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::parse(
            at(bytes.len()),
            "truncated IDX dimension list",
        ));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let need = header + count * width;
    if bytes.len() < need {
        return Err(Error::parse(
            at(bytes.len()),
            format!("expected {need} bytes of IDX data"),
        ));
    }
    let body = &bytes[header..need];
    let values = body
        .chunks_exact(width)
        .map(|c| match type_code {
            0x08 => c[0] as f64,
            0x09 => c[0] as i8 as f64,
            0x0B => i16::from_be_bytes([c[0], c[1]]) as f64,
            0x0C => i32::from_be_bytes(c.try_into().unwrap()) as f64,
            0x0D => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            _ => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect();
    Ok(IdxArray { dims, values })
}

pub fn load_idx_pair<T: Real>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<LabeledDataset<T>> {
    parse_idx_pair(&fs::read(images)?, &fs::read(labels)?)
}

pub fn parse_idx_pair<T: Real>(images: &[u8], labels: &[u8]) -> Result<LabeledDataset<T>> {
    let img = parse_idx(images, "images")?;
    let lab = parse_idx(labels, "labels")?;
    if img.dims.is_empty() || lab.dims.len() != 1 {
        return Err(Error::Dimension(
            "expected an N x ... image array and an N label vector".into(),
        ));
    }
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(Error::Dimension(format!(
            "{n} images but {} labels",
            lab.dims[0]
        )));
    }
    let m: usize = img.dims[1..].iter().product();
    // IDX stores images row-major one after another, which is column-major
    // with one sample per column.
    let samples = DMatrix::from_iterator(m, n, img.values.iter().map(|&v| T::of(v)));
    let raw: Vec<i64> = lab.values.iter().map(|&v| v as i64).collect();
    LabeledDataset::from_raw_labels(samples, &raw)
}

/// Encodes a dataset as an unsigned-byte IDX3/IDX1 pair; values are rounded
/// and clamped to `0..=255`, labels must fit in a byte.
pub fn encode_idx_pair<T: Real>(
    ds: &LabeledDataset<T>,
    shape: (usize, usize),
) -> Result<(Vec<u8>, Vec<u8>)> {
    if shape.0 * shape.1 != ds.dim() {
        return Err(Error::Dimension(format!(
            "image shape {shape:?} does not cover {} features",
            ds.dim()
        )));
    }
    let mut img = vec![0, 0, 0x08, 3];
    for d in [ds.len(), shape.0, shape.1] {
        img.extend((d as u32).to_be_bytes());
    }
    img.extend(
        ds.samples
            .iter()
            .map(|v| v.to_f().round().clamp(0.0, 255.0) as u8),
    );
    let mut lab = vec![0, 0, 0x08, 1];
    lab.extend((ds.len() as u32).to_be_bytes());
    for &l in &ds.labels {
        let name = ds.class_names[l];
        let byte = u8::try_from(name)
            .map_err(|_| Error::Input(format!("label {name} does not fit in a byte")))?;
        lab.push(byte);
    }
    Ok((img, lab))
}

/// Gaussian blobs: `classes` clusters of `per_class` samples in `dim`
/// dimensions, unit within-class covariance, means at pairwise distance at
/// least `class_separation`. Class names are `1..=classes`; `max_value` is set
/// to the largest generated entry so pixel-style corruption stays on scale.
pub fn make_synthetic<T: Real>(
    classes: usize,
    per_class: usize,
    dim: usize,
    class_separation: f64,
    seed: u64,
) -> Result<LabeledDataset<T>> {
    if classes < 2 || per_class < 1 || dim < 2 {
        return Err(Error::Parameter(format!(
            "synthetic data needs classes >= 2, per_class >= 1, dim >= 2 (got {classes}, {per_class}, {dim})"
        )));
    }
    if !(class_separation >= 0.0) || !class_separation.is_finite() {
        return Err(Error::Parameter(
            "class separation must be finite and nonnegative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = draw_separated_means(classes, dim, class_separation, &mut rng);
    let mut samples = DMatrix::<f64>::zeros(dim, classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for s in 0..per_class {
            let j = c * per_class + s;
            for r in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                samples[(r, j)] = mean[r] + z;
            }
            labels.push(c);
        }
    }
    let max_value = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ds = LabeledDataset::new(samples.map(T::of), labels, (1..=classes as i64).collect())?;
    Ok(ds.with_max_value(T::of(max_value)))
}

// Rejection sampling from an isotropic Gaussian whose expected pairwise
// distance equals the target; the spread grows if draws keep failing.
fn draw_separated_means(
    classes: usize,
    dim: usize,
    sep: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let mut scale = sep / (2.0 * dim as f64).sqrt();
    loop {
        for _ in 0..100 {
            let means: Vec<DVector<f64>> = (0..classes)
                .map(|_| DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let ok = (0..classes)
                .all(|a| (a + 1..classes).all(|b| (&means[a] - &means[b]).norm() >= sep));
            if ok {
                return means;
            }
        }
        scale *= 1.1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptionKind {
    Pixel,
    Block,
    SaltPepper,
    Gaussian,
}

impl CorruptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionKind::Pixel => "pixel",
            CorruptionKind::Block => "block",
            CorruptionKind::SaltPepper => "salt_pepper",
            CorruptionKind::Gaussian => "gaussian",
        }
    }
}

impl std::fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pixel" => Ok(CorruptionKind::Pixel),
            "block" => Ok(CorruptionKind::Block),
            "salt_pepper" | "saltpepper" | "salt" => Ok(CorruptionKind::SaltPepper),
            "gaussian" | "gauss" => Ok(CorruptionKind::Gaussian),
            other => Err(Error::Config(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// One corruption model applied column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Fraction in `[0, 1]`, or the standard deviation for Gaussian noise.
    pub level: f64,
    /// `(height, width)`, with images stored column-major. Required for block
    /// corruption.
    pub image_shape: Option<(usize, usize)>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, level: f64, seed: u64) -> Self {
        Self {
            kind,
            level,
            image_shape: None,
            seed,
        }
    }

    pub fn with_image_shape(mut self, height: usize, width: usize) -> Self {
        self.image_shape = Some((height, width));
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.level.is_finite() || self.level < 0.0 {
            return Err(Error::Config(format!(
                "corruption level {} must be >= 0",
                self.level
            )));
        }
        if self.kind != CorruptionKind::Gaussian && self.level > 1.0 {
            return Err(Error::Config(format!(
                "{} corruption level {} exceeds 1",
                self.kind, self.level
            )));
        }
        if self.kind == CorruptionKind::Block {
            match self.image_shape {
                None => {
                    return Err(Error::Config(
                        "block corruption needs an image shape".into(),
                    ))
                }
                Some((h, w)) if h * w != dim => {
                    return Err(Error::Config(format!(
                        "image shape {h}x{w} does not match dimension {dim}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Number of entries a fractional corruption touches in a column of length
/// `m`: `ceil(level * m)`, with a small guard so e.g. `0.1 * 30` yields 3.
pub fn corrupted_count(level: f64, m: usize) -> usize {
    let raw = level * m as f64;
    ((raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize).min(m)
}

/// Applies `spec` to every column; labels and column count are preserved.
pub fn corrupt<T: Real>(
    ds: &LabeledDataset<T>,
    spec: &CorruptionSpec,
) -> Result<LabeledDataset<T>> {
    let m = ds.dim();
    spec.validate(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = ds.clone();
    let max_value = ds.max_value;
    match spec.kind {
        CorruptionKind::Pixel => {
            let count = corrupted_count(spec.level, m);
            for mut col in out.samples.column_iter_mut() {
                for r in sample_indices(&mut rng, m, count) {
                    col[r] = max_value;
                }
            }
        }
        CorruptionKind::SaltPepper => {
            let count = corrupted_count(spec.level, m);
            for mut col in out.samples.column_iter_mut() {
                for r in sample_indices(&mut rng, m, count) {
                    col[r] = if rng.random_bool(0.5) {
                        max_value
                    } else {
                        T::zero()
                    };
                }
            }
        }
        CorruptionKind::Gaussian => {
            if spec.level > 0.0 {
                let noise =
                    Normal::new(0.0, spec.level).map_err(|e| Error::Config(e.to_string()))?;
                for v in out.samples.iter_mut() {
                    *v += T::of(noise.sample(&mut rng));
                }
            }
        }
        CorruptionKind::Block => {
            let (h, w) = spec.image_shape.expect("validated");
            let side = spec.level.sqrt();
            let bh = ((side * h as f64).round() as usize).min(h);
            let bw = ((side * w as f64).round() as usize).min(w);
            if bh > 0 && bw > 0 {
                for mut col in out.samples.column_iter_mut() {
                    let top = rng.random_range(0..=h - bh);
                    let left = rng.random_range(0..=w - bw);
                    for c in 0..bw {
                        for r in 0..bh {
                            col[(left + c) * h + top + r] =
                                max_value * T::of(texture(r, c, bh, bw));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Fixed occluder pattern: a 4-pixel checkerboard modulated by a diagonal
/// gradient, valued in `[0, 1]`.
pub fn texture(r: usize, c: usize, height: usize, width: usize) -> f64 {
    let checker = if (r / 4 + c / 4).is_multiple_of(2) { 0.8 } else { 0.2 };
    let gradient = (r as f64 + c as f64 + 1.0) / (height + width) as f64;
    (0.5 * checker + 0.5 * gradient).clamp(0.0, 1.0)
}
