//! Supervised k-nearest-neighbour graph and its normalized Laplacian.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Heat-kernel bandwidth `t`, in squared-distance units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth<T> {
    /// Median squared distance over the graph's edges, or 1 if that is 0.
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedGraph<T: Real> {
    weights: DMatrix<T>,
    laplacian: DMatrix<T>,
    k: usize,
    t: T,
}

impl<T: Real> SupervisedGraph<T> {
    /// Wraps a precomputed weight matrix, deriving the Laplacian from it.
    pub fn from_weights(weights: DMatrix<T>, k: usize, t: T) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::Dimension("weight matrix must be square".into()));
        }
        let laplacian = normalized_laplacian(&weights);
        Ok(Self {
            weights,
            laplacian,
            k,
            t,
        })
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    /// `I - D^{-1/2} W D^{-1/2}`; isolated vertices keep a unit diagonal.
    pub fn laplacian(&self) -> &DMatrix<T> {
        &self.laplacian
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bandwidth(&self) -> T {
        self.t
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Debug dump: one `i j w` line per undirected edge, `i < j`.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        let n = self.len();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.weights[(i, j)];
                if w > T::zero() {
                    let _ = writeln!(out, "{i} {j} {w}");
                }
            }
        }
        out
    }
}

/// `min(5, smallest class size - 1)`, never below 1.
pub fn default_neighbors(class_counts: &[usize]) -> usize {
    let smallest = class_counts.iter().copied().min().unwrap_or(1);
    5.min(smallest.saturating_sub(1)).max(1)
}

/// Builds the supervised graph: samples `i` and `j` are joined iff they share
/// a class and one is among the other's `k` nearest same-class neighbours.
/// Distance ties are broken by column index.
pub fn build_graph<T: Real>(
    ds: &LabeledDataset<T>,
    k: Option<usize>,
    t: Bandwidth<T>,
) -> Result<SupervisedGraph<T>> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::Input("graph needs at least two samples".into()));
    }
    let k = k.unwrap_or_else(|| default_neighbors(&ds.class_counts()));
    if k == 0 {
        return Err(Error::Parameter(
            "neighbour count k must be at least 1".into(),
        ));
    }
    if let Bandwidth::Fixed(t) = t {
        if !(t > T::zero()) || !t.finite() {
            return Err(Error::Parameter(format!(
                "heat-kernel bandwidth t = {t} must be positive"
            )));
        }
    }

    let x = ds.samples();
    let labels = ds.labels();
    let mut dist2 = DMatrix::<T>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = (x.column(i) - x.column(j)).norm_squared();
            dist2[(i, j)] = d;
            dist2[(j, i)] = d;
        }
    }

    let mut adjacent = vec![false; n * n];
    for j in 0..n {
        let mut same: Vec<usize> = (0..n)
            .filter(|&i| i != j && labels[i] == labels[j])
            .collect();
        same.sort_by(|&a, &b| {
            dist2[(a, j)]
                .partial_cmp(&dist2[(b, j)])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &i in same.iter().take(k) {
            adjacent[i * n + j] = true;
            adjacent[j * n + i] = true;
        }
    }

    let t = match t {
        Bandwidth::Fixed(t) => t,
        Bandwidth::Auto => {
            let mut d: Vec<T> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| adjacent[i * n + j])
                .map(|(i, j)| dist2[(i, j)])
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let median = match d.len() {
                0 => T::zero(),
                l if l % 2 == 1 => d[l / 2],
                l => (d[l / 2 - 1] + d[l / 2]) * T::of(0.5),
            };
            if median > T::zero() {
                median
            } else {
                T::one()
            }
        }
    };

    let weights = DMatrix::from_fn(n, n, |i, j| {
        if adjacent[i * n + j] {
            (-dist2[(i, j)] / t).exp()
        } else {
            T::zero()
        }
    });
    let laplacian = normalized_laplacian(&weights);
    Ok(SupervisedGraph {
        weights,
        laplacian,
        k,
        t,
    })
}

/// `I - D^{-1/2} W D^{-1/2}` with `D^{-1/2}` taken as 0 on zero-degree rows.
pub fn normalized_laplacian<T: Real>(w: &DMatrix<T>) -> DMatrix<T> {
    let n = w.nrows();
    let inv_sqrt: Vec<T> = w
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > T::zero() {
                T::one() / d.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { T::one() } else { T::zero() };
        delta - (inv_sqrt[i] * inv_sqrt[j]) * w[(i, j)]
    })
}

/// `tr(P^T X L X^T P)` for an `m x d` projection and `m x N` samples.
pub fn projection_graph_cost<T: Real>(
    p: &DMatrix<T>,
    x: &DMatrix<T>,
    g: &SupervisedGraph<T>,
) -> Result<T> {
    if p.nrows() != x.nrows() || x.ncols() != g.len() {
        return Err(Error::Dimension(format!(
            "projection {}x{}, samples {}x{}, graph over {} vertices",
            p.nrows(),
            p.ncols(),
            x.nrows(),
            x.ncols(),
            g.len()
        )));
    }
    let y = x.transpose() * p;
    Ok((y.transpose() * &g.laplacian * &y).trace())
}

/// `X L X^T` (the `m x m` graph scatter used by the projection update).
pub fn graph_scatter<T: Real>(x: &DMatrix<T>, g: &SupervisedGraph<T>) -> DMatrix<T> {
    x * &g.laplacian * x.transpose()
}
