//! Class-wise update of the coding coefficients with the dictionary and
//! projection held fixed: proximal gradient on
//! `Q(A_i) + lambda1 ||A_i||_1`, where `Q` is the discriminative
//! reconstruction error of class `i` plus the weighted Fisher term.

use std::ops::Range;

use nalgebra::{DMatrix, DMatrixView};

use crate::dictionary::StructuredDictionary;
use crate::error::{Error, Phase, Result};
use crate::fisher::{ClassFisher, CodingMatrix};
use crate::prox::{l1_norm, prox_l1, spectral_norm};
use crate::scalar::Real;
use crate::state::ModelState;

/// Stopping rule for the proximal-gradient loop.
#[derive(Debug, Clone, Copy)]
pub struct ProxGradOptions {
    pub max_iter: usize,
    /// Stop once the proximal step is shorter than this fraction of `||A||`.
    pub rel_tol: f64,
    /// Double the Lipschitz estimate until the quadratic upper bound holds.
    pub backtracking: bool,
    /// Monotone momentum (FISTA extrapolation, restarted whenever a step
    /// would raise the objective). Plain iterations otherwise.
    pub accelerated: bool,
}

impl Default for ProxGradOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            rel_tol: 1e-6,
            backtracking: true,
            accelerated: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxGradOutcome<T: Real> {
    pub solution: DMatrix<T>,
    pub iterations: usize,
    /// Composite objective (smooth part plus `l1` penalty), starting with
    /// the value at the initial point.
    pub objective: Vec<T>,
    pub lipschitz: T,
}

/// Minimizes `smooth(X) + l1_weight * ||X||_1` from `start`, stepping with
/// `1 / L` and thresholding by `l1_weight / L`. The returned objective
/// sequence never increases.
pub fn proximal_gradient<T, V, G>(
    start: DMatrix<T>,
    l1_weight: T,
    lipschitz: T,
    opts: ProxGradOptions,
    phase: Phase,
    smooth: V,
    gradient: G,
) -> Result<ProxGradOutcome<T>>
where
    T: Real,
    V: Fn(&DMatrix<T>) -> T,
    G: Fn(&DMatrix<T>) -> DMatrix<T>,
{
    if !(lipschitz > T::zero()) || !lipschitz.finite() {
        return Err(Error::numeric(
            phase,
            0,
            format!("invalid Lipschitz constant {lipschitz}"),
        ));
    }
    let composite = |m: &DMatrix<T>, smooth_value: T| smooth_value + l1_weight * l1_norm(m);
    let mut x = start;
    let mut best = composite(&x, smooth(&x));
    let mut objective = vec![best];
    // Extrapolated point and its smooth value.
    let mut y = x.clone();
    let mut y_value = smooth(&y);
    let mut t = T::one();
    let mut lip = lipschitz;
    let tol = T::of(opts.rel_tol);
    let half = T::of(0.5);
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        let g = gradient(&y);
        if !g.iter().all(|v| v.finite()) {
            return Err(Error::numeric(phase, it, "non-finite gradient"));
        }
        let (z, z_value, step) = loop {
            let z = prox_l1(&(&y - &g / lip), l1_weight / lip);
            let step = &z - &y;
            let zv = smooth(&z);
            if !opts.backtracking {
                break (z, zv, step);
            }
            let bound = y_value + g.dot(&step) + lip * half * step.norm_squared();
            let slack = T::of(1e-12) * y_value.abs().max(T::one());
            if zv <= bound + slack {
                break (z, zv, step);
            }
            lip *= T::of(2.0);
            if !lip.finite() {
                return Err(Error::numeric(
                    phase,
                    it,
                    "step size underflow in backtracking",
                ));
            }
        };
        if !z_value.finite() {
            return Err(Error::numeric(phase, it, "non-finite objective"));
        }
        iterations = it;
        let rel = step.norm() / x.norm().max(T::TINY);
        let z_obj = composite(&z, z_value);
        if z_obj <= best || !opts.accelerated {
            if opts.accelerated {
                let t_next = (T::one() + (T::one() + T::of(4.0) * t * t).sqrt()) * half;
                y = &z + (&z - &x) * ((t - T::one()) / t_next);
                y_value = smooth(&y);
                t = t_next;
            } else {
                y = z.clone();
                y_value = z_value;
            }
            x = z;
            best = z_obj;
        } else {
            // Momentum overshot: restart from the last accepted point.
            y = x.clone();
            y_value = smooth(&y);
            t = T::one();
        }
        objective.push(best);
        if rel < tol || step.norm() == T::zero() {
            break;
        }
    }
    Ok(ProxGradOutcome {
        solution: x,
        iterations,
        objective,
        lipschitz: lip,
    })
}

/// Smooth objective of one class block, everything but `A_i` frozen.
#[derive(Debug, Clone)]
pub struct ClassObjective<'a, T: Real> {
    projected: DMatrixView<'a, T>,
    dict: &'a StructuredDictionary<T>,
    own: Range<usize>,
    gram: DMatrix<T>,
    gram_blocks: DMatrix<T>,
    dty: DMatrix<T>,
    own_dty: DMatrix<T>,
    fisher: ClassFisher<T>,
    lambda2: T,
    class_size: usize,
    total: usize,
    eta: T,
}

impl<'a, T: Real> ClassObjective<'a, T> {
    pub fn new(
        projected: DMatrixView<'a, T>,
        dict: &'a StructuredDictionary<T>,
        codes: &CodingMatrix<T>,
        class: usize,
        lambda2: T,
        eta: T,
    ) -> Self {
        let d = dict.atoms();
        let gram = d.tr_mul(d);
        let n = d.ncols();
        let mut gram_blocks = DMatrix::zeros(n, n);
        for r in dict.blocks().ranges() {
            gram_blocks
                .view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(&gram.view((r.start, r.start), (r.len(), r.len())));
        }
        let dty = d.tr_mul(&projected);
        let own = dict.blocks().range(class);
        let mut own_dty = DMatrix::zeros(n, projected.ncols());
        own_dty
            .rows_mut(own.start, own.len())
            .copy_from(&dty.rows(own.start, own.len()));
        Self {
            projected,
            dict,
            own,
            gram,
            gram_blocks,
            dty,
            own_dty,
            fisher: ClassFisher::new(codes, class, eta),
            lambda2,
            class_size: codes.column_partition().size(class),
            total: codes.values().ncols(),
            eta,
        }
    }

    /// `||Y_i - D A_i||^2 + ||Y_i - D_i A_i^i||^2 + sum_{j != i} ||D_j A_i^j||^2`.
    pub fn reconstruction(&self, a: &DMatrix<T>) -> T {
        let d = self.dict.atoms();
        let own = &self.own;
        let full = (self.projected - d * a).norm_squared();
        let own_fit = (self.projected
            - d.columns(own.start, own.len()) * a.rows(own.start, own.len()))
        .norm_squared();
        let mut cross = T::zero();
        for r in self.dict.blocks().ranges().iter().filter(|r| *r != own) {
            cross += (d.columns(r.start, r.len()) * a.rows(r.start, r.len())).norm_squared();
        }
        full + own_fit + cross
    }

    pub fn fisher_value(&self, a: &DMatrix<T>) -> T {
        self.fisher.value(a)
    }

    /// `Q(A_i)`.
    pub fn value(&self, a: &DMatrix<T>) -> T {
        self.reconstruction(a) + self.lambda2 * self.fisher.value(a)
    }

    pub fn gradient(&self, a: &DMatrix<T>) -> DMatrix<T> {
        let two = T::of(2.0);
        let mut g = (&self.gram * a - &self.dty + &self.gram_blocks * a - &self.own_dty) * two;
        if self.lambda2 != T::zero() {
            g += self.fisher.gradient(a) * self.lambda2;
        }
        g
    }

    /// `2(s(D)^2 + s(D_i)^2 + max_j s(D_j)^2) + lambda2 * 2(1 + eta + 2/n_i + K/N)`
    /// with `s` the spectral norm.
    pub fn lipschitz(&self) -> Result<T> {
        let d = self.dict.atoms().clone_owned();
        let full = spectral_norm(&d)?;
        let mut own = T::zero();
        let mut worst = T::zero();
        for r in self.dict.blocks().ranges() {
            let s = spectral_norm(&d.columns(r.start, r.len()).clone_owned())?;
            worst = worst.max(s);
            if *r == self.own {
                own = s;
            }
        }
        let two = T::of(2.0);
        let k = T::of_usize(self.dict.num_classes());
        let mean_curvature = two
            * (T::one()
                + self.eta
                + two / T::of_usize(self.class_size.max(1))
                + k / T::of_usize(self.total.max(1)));
        let lip = two * (full * full + own * own + worst * worst) + self.lambda2 * mean_curvature;
        Ok(lip.max(T::of(1e-12)))
    }
}

/// `Q(A_i)` for the class block currently stored in the state.
pub fn smooth_objective<T: Real>(state: &ModelState<T>, class: usize) -> T {
    let hp = state.params();
    let obj = ClassObjective::new(
        state.projected_class(class),
        state.dictionary(),
        state.codes(),
        class,
        hp.lambda2,
        hp.eta,
    );
    obj.value(&state.codes().class_codes(class).clone_owned())
}

/// Runs the proximal-gradient iterations for class `class` and returns the
/// full outcome (new `A_i`, iteration count, objective trace).
pub fn update_codes_class<T: Real>(
    state: &ModelState<T>,
    class: usize,
    max_inner: usize,
) -> Result<ProxGradOutcome<T>> {
    let hp = state.params();
    let obj = ClassObjective::new(
        state.projected_class(class),
        state.dictionary(),
        state.codes(),
        class,
        hp.lambda2,
        hp.eta,
    );
    let start = state.codes().class_codes(class).clone_owned();
    let lip = obj.lipschitz()?;
    let opts = ProxGradOptions {
        max_iter: max_inner,
        ..ProxGradOptions::default()
    };
    // Q + 2 tau ||A_i||_1 with tau = lambda1 / 2.
    proximal_gradient(
        start,
        hp.lambda1,
        lip,
        opts,
        Phase::Codes,
        |a| obj.value(a),
        |a| obj.gradient(a),
    )
}

/// One sweep over the classes in index order, each update seeing the codes
/// already refreshed earlier in the sweep.
pub fn update_all_codes<T: Real>(state: &mut ModelState<T>, max_inner: usize) -> Result<()> {
    for class in 0..state.num_classes() {
        let out = update_codes_class(state, class, max_inner)?;
        state.codes.set_class_codes(class, &out.solution);
    }
    Ok(())
}

/// Ridge start `(D^T D + ridge I)^{-1} D^T P^T X`.
pub fn ridge_codes<T: Real>(
    dict: &StructuredDictionary<T>,
    projected: &DMatrix<T>,
    ridge: T,
) -> Result<DMatrix<T>> {
    let d = dict.atoms();
    let n = d.ncols();
    let system = d.tr_mul(d) + DMatrix::identity(n, n) * ridge;
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::numeric(Phase::Codes, 0, "ridge system is not positive definite"))?;
    Ok(chol.solve(&d.tr_mul(projected)))
}
