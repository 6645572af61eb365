//! Orthonormal projection update: the stacked reconstruction system, the
//! eigenvector target of the trace subproblem, and the damped blend.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dictionary::StructuredDictionary;
use crate::error::{Error, Phase, Result};
use crate::fisher::CodingMatrix;
use crate::scalar::Real;

/// Worst allowed `max |P^T P - I|` on a committed `f64` projection.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// [`ORTHONORMAL_TOL`], widened to a few ulps for low-precision scalars.
pub fn orthonormal_tol<T: Real>() -> T {
    T::of(ORTHONORMAL_TOL).max(T::default_epsilon() * T::of(64.0))
}

/// `m x d` matrix with orthonormal columns, `d < m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T: Real>(DMatrix<T>);

impl<T: Real> ProjectionMatrix<T> {
    /// Validates shape and orthonormality (to [`orthonormal_tol`]).
    pub fn new(p: DMatrix<T>) -> Result<Self> {
        if p.ncols() == 0 || p.ncols() >= p.nrows() {
            return Err(Error::Dimension(format!(
                "projection must be m x d with 0 < d < m, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        let dev = orthonormality_error(&p);
        if !(dev <= orthonormal_tol::<T>()) {
            return Err(Error::numeric(
                Phase::Projection,
                0,
                format!("columns are not orthonormal (max |P^T P - I| = {dev:e})"),
            ));
        }
        Ok(Self(p))
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }

    /// Input dimension `m`.
    pub fn input_dim(&self) -> usize {
        self.0.nrows()
    }

    /// Output dimension `d`.
    pub fn output_dim(&self) -> usize {
        self.0.ncols()
    }

    /// `P^T X`.
    pub fn project(&self, x: &DMatrix<T>) -> DMatrix<T> {
        self.0.tr_mul(x)
    }
}

/// `max |P^T P - I|`.
pub fn orthonormality_error<T: Real>(p: &DMatrix<T>) -> T {
    let g = p.tr_mul(p) - DMatrix::identity(p.ncols(), p.ncols());
    g.iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

/// Which end of the spectrum the projection target keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSelection {
    /// Minimizes the trace objective.
    #[default]
    Smallest,
    /// Keeps the dominant eigenvectors instead.
    Largest,
}

impl std::str::FromStr for EigenSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smallest" => Ok(Self::Smallest),
            "largest" => Ok(Self::Largest),
            other => Err(Error::Config(format!("unknown eigen selection `{other}`"))),
        }
    }
}

impl std::fmt::Display for EigenSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Smallest => "smallest",
            Self::Largest => "largest",
        })
    }
}

/// Stacked reconstruction system for the projection step.
///
/// Each class contributes two reconstruction targets, `D A_i` and
/// `D_i A_i^i`, both fitted against `X_i`. With the doubled sample matrix
/// `X~ = [X_1, X_1, X_2, X_2, ...]`, `D^ = [D, D_1, D, D_2, ...]` and the
/// block-diagonal `Z^ = diag(A_1, A_1^1, A_2, A_2^2, ...)`,
/// `||P^T X~ - D^ Z^||^2` is the sum of those reconstruction errors.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem<T: Real> {
    pub dictionary: DMatrix<T>,
    pub codes: DMatrix<T>,
}

impl<T: Real> StackedSystem<T> {
    /// `D^ Z^`, formed without materializing the block-diagonal matrix.
    pub fn reconstruction(&self) -> DMatrix<T> {
        &self.dictionary * &self.codes
    }
}

pub fn assemble_stacked_system<T: Real>(
    dict: &StructuredDictionary<T>,
    codes: &CodingMatrix<T>,
) -> Result<StackedSystem<T>> {
    let k = dict.num_classes();
    if codes.row_partition() != dict.blocks() || codes.num_classes() != k {
        return Err(Error::Dimension(
            "coding rows do not follow the dictionary blocks".into(),
        ));
    }
    let d = dict.dim();
    let n = dict.total_atoms();
    let cols = codes.column_partition();
    let stacked_atoms: usize = (0..k).map(|i| n + dict.blocks().size(i)).sum();
    let stacked_cols = 2 * cols.total();
    let mut dhat = DMatrix::zeros(d, stacked_atoms);
    let mut zhat = DMatrix::zeros(stacked_atoms, stacked_cols);
    let (mut a0, mut c0) = (0, 0);
    for i in 0..k {
        let ni = cols.size(i);
        let ai = dict.blocks().size(i);
        dhat.columns_mut(a0, n).copy_from(dict.atoms());
        zhat.view_mut((a0, c0), (n, ni))
            .copy_from(&codes.class_codes(i));
        a0 += n;
        c0 += ni;
        dhat.columns_mut(a0, ai).copy_from(&dict.sub(i));
        zhat.view_mut((a0, c0), (ai, ni))
            .copy_from(&codes.block(i, i));
        a0 += ai;
        c0 += ni;
    }
    Ok(StackedSystem {
        dictionary: dhat,
        codes: zhat,
    })
}

/// `[X_1, X_1, X_2, X_2, ...]` for class-grouped samples.
pub fn doubled_samples<T: Real>(x: &DMatrix<T>, columns: &crate::Partition) -> DMatrix<T> {
    let mut out = DMatrix::zeros(x.nrows(), 2 * x.ncols());
    let mut c0 = 0;
    for r in columns.ranges() {
        let block = x.columns(r.start, r.len());
        out.columns_mut(c0, r.len()).copy_from(&block);
        out.columns_mut(c0 + r.len(), r.len()).copy_from(&block);
        c0 += 2 * r.len();
    }
    out
}

/// `S = phi(P_prev) + delta * X L X^T` with
/// `phi(P) = (X~ - P D^Z^)(X~ - P D^Z^)^T`.
pub fn projection_system<T: Real>(
    p_prev: &DMatrix<T>,
    doubled: &DMatrix<T>,
    stacked: &StackedSystem<T>,
    graph_scatter: &DMatrix<T>,
    delta: T,
) -> DMatrix<T> {
    let residual = doubled - p_prev * stacked.reconstruction();
    let mut s = &residual * residual.transpose();
    s += graph_scatter * delta;
    // Symmetrize against round-off before the eigensolver.
    let st = s.transpose();
    (s + st) * T::of(0.5)
}

/// Eigenvectors of the `d` smallest (or largest) eigenvalues of the
/// symmetric matrix `s`, ordered by eigenvalue with ties broken by index,
/// each flipped so its largest-magnitude entry is positive.
pub fn select_eigenvectors<T: Real>(
    s: &DMatrix<T>,
    d: usize,
    selection: EigenSelection,
) -> Result<DMatrix<T>> {
    if s.nrows() != s.ncols() || d == 0 || d > s.nrows() {
        return Err(Error::Dimension(format!(
            "cannot take {d} eigenvectors of a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    if !s.iter().all(|v| v.finite()) {
        return Err(Error::numeric(
            Phase::Projection,
            0,
            "non-finite projection system",
        ));
    }
    let eig = SymmetricEigen::try_new(s.clone(), T::default_epsilon(), 0).ok_or_else(|| {
        Error::numeric(Phase::Projection, 0, "eigendecomposition did not converge")
    })?;
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        let o = x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal);
        let o = if selection == EigenSelection::Largest {
            o.reverse()
        } else {
            o
        };
        o.then(a.cmp(&b))
    });
    let mut out = DMatrix::zeros(s.nrows(), d);
    for (c, &idx) in order.iter().take(d).enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        fix_sign(&mut v);
        out.set_column(c, &v);
    }
    Ok(out)
}

fn fix_sign<T: Real>(v: &mut nalgebra::DVector<T>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < T::zero() {
        v.neg_mut();
    }
}

/// Target projection for the trace subproblem
/// `min tr(P^T S P) s.t. P^T P = I`.
pub fn projection_target<T: Real>(
    p_prev: &ProjectionMatrix<T>,
    doubled: &DMatrix<T>,
    stacked: &StackedSystem<T>,
    graph_scatter: &DMatrix<T>,
    delta: T,
    selection: EigenSelection,
) -> Result<DMatrix<T>> {
    let s = projection_system(p_prev.as_matrix(), doubled, stacked, graph_scatter, delta);
    select_eigenvectors(&s, p_prev.output_dim(), selection)
}

/// Thin QR with the sign convention `diag(R) >= 0`; `None` if a column
/// collapses.
pub fn orthonormalize<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = max_abs_entry(m).max(T::TINY);
    for c in 0..q.ncols() {
        let diag = r[(c, c)];
        if !(diag.abs() > T::of(1e-10) * scale) {
            return None;
        }
        if diag < T::zero() {
            q.column_mut(c).neg_mut();
        }
    }
    Some(q)
}

fn max_abs_entry<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

/// `P_prev + gamma (P_new - P_prev)`, re-orthonormalized. `gamma = 1` returns
/// `P_new` unchanged; a rank-deficient blend falls back to `P_new`.
pub fn blend_projection<T: Real>(
    p_prev: &ProjectionMatrix<T>,
    p_new: &DMatrix<T>,
    gamma: T,
) -> Result<ProjectionMatrix<T>> {
    if !(gamma > T::zero() && gamma <= T::one()) {
        return Err(Error::Parameter(format!(
            "blend factor gamma = {gamma} must lie in (0, 1]"
        )));
    }
    if p_new.shape() != p_prev.as_matrix().shape() {
        return Err(Error::Dimension("blend operands differ in shape".into()));
    }
    if gamma == T::one() {
        return ProjectionMatrix::new(p_new.clone());
    }
    let prev = p_prev.as_matrix();
    if p_new == prev {
        return Ok(p_prev.clone());
    }
    let blend = prev + (p_new - prev) * gamma;
    match orthonormalize(&blend) {
        Some(q) => ProjectionMatrix::new(q),
        None => ProjectionMatrix::new(p_new.clone()),
    }
}

/// Right-rotates `target` onto `reference` (orthogonal Procrustes). The
/// column span, and so `tr(P^T S P)`, is unchanged; only the basis moves.
pub fn align_basis<T: Real>(target: &DMatrix<T>, reference: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = target.tr_mul(reference);
    let svd = m
        .try_svd(true, true, T::default_epsilon(), 0)
        .ok_or_else(|| Error::numeric(Phase::Projection, 0, "SVD did not converge"))?;
    let rot = svd.u.expect("requested") * svd.v_t.expect("requested");
    Ok(target * rot)
}

/// Top-`d` principal directions of the column-centered samples.
pub fn pca_init<T: Real>(x: &DMatrix<T>, d: usize) -> Result<ProjectionMatrix<T>> {
    let m = x.nrows();
    if d == 0 || d >= m {
        return Err(Error::Parameter(format!(
            "target dimension {d} must satisfy 0 < d < m = {m}"
        )));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let cov = &centered * centered.transpose();
    let st = cov.transpose();
    let cov = (cov + st) * T::of(0.5);
    let p = select_eigenvectors(&cov, d, EigenSelection::Largest)?;
    ProjectionMatrix::new(p)
}
