#![allow(dead_code)]

use jpdl::dictionary::StructuredDictionary;
use jpdl::{CodingMatrix, Partition};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random dictionary with unit-norm atoms.
pub fn unit_dictionary(
    dim: usize,
    blocks: &Partition,
    rng: &mut ChaCha8Rng,
) -> StructuredDictionary<f64> {
    let mut d = gaussian(dim, blocks.total(), rng);
    for mut c in d.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    StructuredDictionary::new(d, blocks.clone()).unwrap()
}

pub fn random_codes(
    rows: &Partition,
    columns: &Partition,
    rng: &mut ChaCha8Rng,
) -> CodingMatrix<f64> {
    CodingMatrix::new(
        gaussian(rows.total(), columns.total(), rng),
        columns.clone(),
        rows.clone(),
    )
    .unwrap()
}

/// Random positive class sizes summing to at most `max_total`.
pub fn class_sizes(classes: usize, max_each: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..classes)
        .map(|_| rng.random_range(2..=max_each))
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(
    x: &DMatrix<f64>,
    h: f64,
    mut f: impl FnMut(&DMatrix<f64>) -> f64,
) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let v = x[idx];
        probe[idx] = v + h;
        let up = f(&probe);
        probe[idx] = v - h;
        let down = f(&probe);
        probe[idx] = v;
        g[idx] = (up - down) / (2.0 * h);
    }
    g
}

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}
