//! Sub-dictionary update by inexact ALM.
//!
//! For class `i` with `Y = P^T X_i` and the frozen cross reconstruction
//! `C = sum_{j != i} D_j A_i^j`, the solver targets
//!
//! ```text
//! min ||Z||_1 + alpha ||J||_* + beta ||E||_{2,1} + lambda ||Y - D A - C||^2
//! s.t. Y = D A + E,  D = J,  A = Z
//! ```
//!
//! over `D = D_i`, `A = A_i^i`, alternating closed-form block updates with
//! multiplier ascent and a geometric penalty schedule.
//!
//! Under [`DictUpdateRule::Derived`] the coupling term also carries the
//! reconstruction terms of the other classes that involve `D_i`,
//! `sum_{j != i} ||Y_j - D A_j^i - C_j||^2 + ||D A_j^i||^2`, so a sweep does not
//! undo the fit of samples outside class `i`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Phase, Result};
use crate::prox::{max_abs, prox_l1, prox_l21, prox_nuclear};
use crate::scalar::Real;
use crate::state::ModelState;

/// Closed form used for the `A` and `D` block updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DictUpdateRule {
    /// Exact minimizers of the augmented Lagrangian in `A` and in `D`,
    /// including the coupling term `lambda ||Y - D A - C||^2`.
    #[default]
    Derived,
    /// The printed update formulas: the `A` step drops the coupling term and
    /// the `D` step uses `+C` and the factor `2(lambda/mu + 1)`.
    Published,
}

impl std::str::FromStr for DictUpdateRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" => Ok(Self::Derived),
            "published" => Ok(Self::Published),
            other => Err(Error::Config(format!(
                "unknown dictionary update rule `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for DictUpdateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Derived => "derived",
            Self::Published => "published",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmParams {
    pub mu: f64,
    pub max_mu: f64,
    pub rho: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub rule: DictUpdateRule,
}

impl Default for AlmParams {
    fn default() -> Self {
        Self {
            mu: 1e-6,
            max_mu: 1e30,
            rho: 1.1,
            eps: 1e-8,
            max_iters: 500,
            rule: DictUpdateRule::Derived,
        }
    }
}

impl AlmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= self.max_mu) {
            return Err(Error::Parameter(format!(
                "ALM penalty mu = {} must lie in (0, max_mu]",
                self.mu
            )));
        }
        if !(self.rho > 1.0) {
            return Err(Error::Parameter(format!(
                "ALM growth rho = {} must exceed 1",
                self.rho
            )));
        }
        if !(self.eps > 0.0) || self.max_iters == 0 {
            return Err(Error::Parameter(
                "ALM needs eps > 0 and at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

/// One ALM iteration: the three stopping residuals (infinity norms) and the
/// penalty the iteration ran with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmTraceRow<T> {
    pub iteration: usize,
    /// `||D - J||_inf`
    pub dict_gap: T,
    /// `||Y - D A - E||_inf`
    pub constraint: T,
    /// `||A - Z||_inf`
    pub code_gap: T,
    pub mu: T,
}

impl<T: Real> AlmTraceRow<T> {
    pub fn worst(&self) -> T {
        self.dict_gap.max(self.constraint).max(self.code_gap)
    }
}

#[derive(Debug, Clone)]
pub struct AlmOutcome<T: Real> {
    pub dictionary: DMatrix<T>,
    pub codes: DMatrix<T>,
    pub error: DMatrix<T>,
    pub iterations: usize,
    /// `false` when the iteration cap was hit; the returned iterate is then the
    /// one with the smallest worst residual.
    pub converged: bool,
    pub trace: Vec<AlmTraceRow<T>>,
}

/// Data of one sub-dictionary problem.
#[derive(Debug, Clone)]
pub struct AlmProblem<T: Real> {
    /// `P^T X_i`, `d x n_i`.
    pub target: DMatrix<T>,
    /// `sum_{j != i} D_j A_i^j`, `d x n_i`.
    pub cross: DMatrix<T>,
    pub alpha: T,
    pub beta: T,
    pub lambda: T,
    /// `sum_{j != i} 2 A_j^i A_j^i^T`, `n_i x n_i`; used by the derived rule only.
    pub foreign_gram: DMatrix<T>,
    /// `sum_{j != i} (Y_j - C_j) A_j^i^T`, `d x n_i`, where `C_j` excludes `D_i`.
    pub foreign_cross: DMatrix<T>,
}

impl<T: Real> AlmProblem<T> {
    /// A problem with no other classes coupled to `D_i`.
    pub fn new(
        target: DMatrix<T>,
        cross: DMatrix<T>,
        atoms: usize,
        alpha: T,
        beta: T,
        lambda: T,
    ) -> Self {
        let dim = target.nrows();
        Self {
            target,
            cross,
            alpha,
            beta,
            lambda,
            foreign_gram: DMatrix::zeros(atoms, atoms),
            foreign_cross: DMatrix::zeros(dim, atoms),
        }
    }
}

fn spd_solve<T: Real>(system: DMatrix<T>, rhs: &DMatrix<T>, it: usize) -> Result<DMatrix<T>> {
    let chol = system.cholesky().ok_or_else(|| {
        Error::numeric(
            Phase::Dictionary,
            it,
            "ALM normal matrix lost positive definiteness",
        )
    })?;
    Ok(chol.solve(rhs))
}

type BestIterate<T> = (T, DMatrix<T>, DMatrix<T>, DMatrix<T>);

/// Runs the inexact ALM from a warm start `(d_init, a_init)`, with
/// `J = E = T1 = T2 = T3 = 0` and `Z = a_init`.
pub fn solve_alm<T: Real>(
    problem: &AlmProblem<T>,
    d_init: DMatrix<T>,
    a_init: DMatrix<T>,
    params: &AlmParams,
) -> Result<AlmOutcome<T>> {
    params.validate()?;
    let y = &problem.target;
    let c = &problem.cross;
    let (dim, samples) = y.shape();
    let atoms = d_init.ncols();
    if d_init.nrows() != dim
        || a_init.shape() != (atoms, samples)
        || c.shape() != y.shape()
        || problem.foreign_gram.shape() != (atoms, atoms)
        || problem.foreign_cross.shape() != (dim, atoms)
    {
        return Err(Error::Dimension(format!(
            "ALM blocks: Y {dim}x{samples}, D {}x{}, A {}x{}, C {}x{}",
            d_init.nrows(),
            d_init.ncols(),
            a_init.nrows(),
            a_init.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let eye_a = DMatrix::<T>::identity(atoms, atoms);
    let two = T::of(2.0);
    let eps = T::of(params.eps);
    let rho = T::of(params.rho);
    let max_mu = T::of(params.max_mu);

    let mut d = d_init;
    let mut a = a_init;
    let mut z;
    let mut j;
    let mut e = DMatrix::<T>::zeros(dim, samples);
    let mut t1 = DMatrix::<T>::zeros(dim, samples);
    let mut t2 = DMatrix::<T>::zeros(dim, atoms);
    let mut t3 = DMatrix::<T>::zeros(atoms, samples);
    let mut mu = T::of(params.mu);
    let y_minus_c = y - c;
    let y_plus_c = y + c;

    let mut trace = Vec::new();
    // Worst residual with the (D, A, E) that produced it.
    let mut best: Option<BestIterate<T>> = None;
    for it in 1..=params.max_iters {
        let inv_mu = T::one() / mu;
        let coupling = two * problem.lambda * inv_mu;

        z = prox_l1(&(&a + &t3 * inv_mu), inv_mu);

        let dt = d.transpose();
        let mut rhs = &dt * (y - &e) + &z + (&dt * &t1 - &t3) * inv_mu;
        let gram = &dt * &d;
        let system = match params.rule {
            DictUpdateRule::Published => gram + &eye_a,
            DictUpdateRule::Derived => {
                rhs += &dt * &y_minus_c * coupling;
                gram * (T::one() + coupling) + &eye_a
            }
        };
        a = spd_solve(system, &rhs, it)?;

        j = prox_nuclear(&(&d + &t2 * inv_mu), problem.alpha * inv_mu)
            .map_err(|err| err.in_phase(Phase::Dictionary, it))?;

        let at = a.transpose();
        let aat = &a * &at;
        let rhs_d = (y - &e) * &at + &j + (&t1 * &at - &t2) * inv_mu;
        let (rhs_d, system) = match params.rule {
            DictUpdateRule::Published => (
                rhs_d + &y_plus_c * &at * coupling,
                aat * (two * (problem.lambda * inv_mu + T::one())) + &eye_a,
            ),
            DictUpdateRule::Derived => (
                rhs_d + (&y_minus_c * &at + &problem.foreign_cross) * coupling,
                aat * (coupling + T::one()) + &problem.foreign_gram * coupling + &eye_a,
            ),
        };
        // D M = R with M symmetric  <=>  M D^T = R^T.
        d = spd_solve(system, &rhs_d.transpose(), it)?.transpose();

        let da = &d * &a;
        e = prox_l21(&(y - &da + &t1 * inv_mu), problem.beta * inv_mu);

        let r_constraint = y - &da - &e;
        let r_dict = &d - &j;
        let r_code = &a - &z;
        t1 += &r_constraint * mu;
        t2 += &r_dict * mu;
        t3 += &r_code * mu;

        let row = AlmTraceRow {
            iteration: it,
            dict_gap: max_abs(&r_dict),
            constraint: max_abs(&r_constraint),
            code_gap: max_abs(&r_code),
            mu,
        };
        mu = (rho * mu).min(max_mu);
        trace.push(row);

        let worst = row.worst();
        if !worst.finite() {
            return Err(Error::numeric(
                Phase::Dictionary,
                it,
                "ALM residuals diverged",
            ));
        }
        if row.dict_gap < eps && row.constraint < eps && row.code_gap < eps {
            return Ok(AlmOutcome {
                dictionary: d,
                codes: a,
                error: e,
                iterations: it,
                converged: true,
                trace,
            });
        }
        if best.as_ref().is_none_or(|(b, ..)| worst < *b) {
            best = Some((worst, d.clone(), a.clone(), e.clone()));
        }
    }
    let (_, d, a, e) = best.expect("at least one iteration");
    log::warn!(
        "sub-dictionary ALM stopped after {} iterations without meeting eps = {:e}",
        params.max_iters,
        params.eps
    );
    Ok(AlmOutcome {
        dictionary: d,
        codes: a,
        error: e,
        iterations: params.max_iters,
        converged: false,
        trace,
    })
}

/// The ALM problem for class `class` under the current state.
pub fn subdictionary_problem<T: Real>(state: &ModelState<T>, class: usize) -> AlmProblem<T> {
    let hp = state.params();
    let target = state.projected_class(class).clone_owned();
    let own = state.dictionary().sub(class) * state.codes().block(class, class);
    let cross = state.dictionary().atoms() * state.codes().class_codes(class) - own;
    let atoms = state.dictionary().blocks().size(class);
    let mut problem = AlmProblem::new(target, cross, atoms, hp.alpha, hp.beta, hp.lambda);
    let sub = state.dictionary().sub(class);
    for j in (0..state.num_classes()).filter(|&j| j != class) {
        let a_ji = state.codes().block(j, class);
        let rest = state.projected_class(j)
            - state.dictionary().atoms() * state.codes().class_codes(j)
            + sub * a_ji;
        problem.foreign_gram += a_ji * a_ji.transpose() * T::of(2.0);
        problem.foreign_cross += rest * a_ji.transpose();
    }
    problem
}

/// Solves the ALM for `D_i`, `A_i^i`, `E_i` without touching the state.
pub fn update_subdictionary<T: Real>(
    state: &ModelState<T>,
    class: usize,
    params: &AlmParams,
) -> Result<AlmOutcome<T>> {
    let problem = subdictionary_problem(state, class);
    let d0 = state.dictionary().sub(class).clone_owned();
    let a0 = state.codes().block(class, class).clone_owned();
    solve_alm(&problem, d0, a0, params)
}

/// Rescales the atoms of block `class` to unit norm, dividing the matching
/// code rows (for every sample column) by the same factor, so all products
/// `D_i A_j^i` are unchanged. Numerically zero atoms are replaced by the
/// normalized worst-reconstructed column of `P^T X_i - D_i A_i^i` and their
/// code rows cleared.
pub fn normalize_atoms<T: Real>(state: &mut ModelState<T>, class: usize) {
    let range = state.dictionary().blocks().range(class);
    let norms: Vec<T> = range
        .clone()
        .map(|a| state.dictionary().atoms().column(a).norm())
        .collect();
    let largest = norms.iter().copied().fold(T::one(), |m, v| m.max(v));
    let zero_tol = T::default_epsilon().sqrt() * largest;
    let residual = state.projected_class(class)
        - state.dictionary().sub(class) * state.codes().block(class, class);
    let dim = state.dictionary().dim();
    let mut reseeded = 0;
    for (offset, atom) in range.enumerate() {
        let norm = norms[offset];
        if norm > zero_tol {
            let mut col = state.dictionary.atom_mut(atom);
            col /= norm;
            let mut row = state.codes.values_mut().row_mut(atom);
            row *= norm;
        } else {
            let mut worst = 0;
            for c in 1..residual.ncols() {
                if residual.column(c).norm() > residual.column(worst).norm() {
                    worst = c;
                }
            }
            let seed = residual.column(worst);
            let seed_norm = seed.norm();
            let mut col = state.dictionary.atom_mut(atom);
            if seed_norm > T::default_epsilon() {
                col.copy_from(&(seed / seed_norm));
            } else {
                col.fill(T::zero());
                col[(offset + reseeded) % dim] = T::one();
            }
            reseeded += 1;
            state.codes.values_mut().row_mut(atom).fill(T::zero());
        }
    }
}

/// Updates every sub-dictionary in class order, writing each result (and its
/// own-class codes) back before the next class is solved, then normalizing
/// that block's atoms.
pub fn sweep_dictionary<T: Real>(
    state: &mut ModelState<T>,
    params: &AlmParams,
) -> Result<Vec<AlmOutcome<T>>> {
    let mut outcomes = Vec::with_capacity(state.num_classes());
    for class in 0..state.num_classes() {
        let out = update_subdictionary(state, class, params)?;
        state.dictionary.set_sub(class, &out.dictionary);
        state.codes.set_block(class, class, &out.codes);
        normalize_atoms(state, class);
        outcomes.push(out);
    }
    Ok(outcomes)
}

/// `iteration,dict_gap,constraint,code_gap,mu` rows with a header.
pub fn residual_trace_csv<T: Real>(trace: &[AlmTraceRow<T>]) -> String {
    let mut out = String::from("iteration,dict_gap,constraint,code_gap,mu\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.iteration, r.dict_gap, r.constraint, r.code_gap, r.mu
        );
    }
    out
}
