//! Closed-form proximal operators: `argmin_Z tau * g(Z) + 1/2 ||Z - M||_F^2`
//! for the `l1`, nuclear and column-wise `l2,1` norms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Phase, Result};
use crate::scalar::Real;

#[inline]
pub fn soft_threshold<T: Real>(v: T, tau: T) -> T {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        T::zero()
    }
}

/// Elementwise soft-thresholding.
pub fn prox_l1<T: Real>(m: &DMatrix<T>, tau: T) -> DMatrix<T> {
    m.map(|v| soft_threshold(v, tau))
}

/// In-place variant of [`prox_l1`].
pub fn prox_l1_mut<T: Real>(m: &mut DMatrix<T>, tau: T) {
    m.apply(|v| *v = soft_threshold(*v, tau));
}

/// Singular-value thresholding: `U max(S - tau, 0) V^T`.
pub fn prox_nuclear<T: Real>(m: &DMatrix<T>, tau: T) -> Result<DMatrix<T>> {
    if !m.iter().all(|v| v.finite()) {
        return Err(Error::numeric(
            Phase::Prox,
            0,
            "non-finite input to singular-value thresholding",
        ));
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let svd = m
        .clone()
        .try_svd(true, true, T::default_epsilon(), 0)
        .ok_or_else(|| Error::numeric(Phase::Prox, 0, "SVD did not converge"))?;
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let shrunk = svd.singular_values.map(|s| (s - tau).max(T::zero()));
    Ok(u * DMatrix::from_diagonal(&shrunk) * v_t)
}

/// Column shrinkage: each column `c` becomes `max(1 - tau / ||c||, 0) c`.
pub fn prox_l21<T: Real>(m: &DMatrix<T>, tau: T) -> DMatrix<T> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        let scale = if norm > tau {
            T::one() - tau / norm
        } else {
            T::zero()
        };
        col *= scale;
    }
    out
}

pub fn l1_norm<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |s, v| s + v.abs())
}

pub fn l21_norm<T: Real>(m: &DMatrix<T>) -> T {
    m.column_iter().fold(T::zero(), |s, c| s + c.norm())
}

pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Result<DVector<T>> {
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    if !m.iter().all(|v| v.finite()) {
        return Err(Error::numeric(Phase::Prox, 0, "non-finite matrix"));
    }
    m.clone()
        .try_svd(false, false, T::default_epsilon(), 0)
        .map(|s| s.singular_values)
        .ok_or_else(|| Error::numeric(Phase::Prox, 0, "SVD did not converge"))
}

pub fn nuclear_norm<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(singular_values(m)?.sum())
}

/// Largest singular value (0 for an empty matrix).
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(singular_values(m)?
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b)))
}

/// Largest absolute entry.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn l1_closed_form() {
        let out = prox_l1(&dmatrix![3.0, -0.5, -4.0], 1.0);
        assert_eq!(out, dmatrix![2.0, 0.0, -3.0]);
        let m = dmatrix![1.5, -2.0; 0.1, 0.0];
        assert_eq!(prox_l1(&m, 0.0), m);
    }

    #[test]
    fn nuclear_on_diagonal() {
        let out = prox_nuclear(&dmatrix![3.0, 0.0; 0.0, 1.0], 2.0).unwrap();
        assert!((out - dmatrix![1.0, 0.0; 0.0, 0.0]).abs().max() < 1e-12);
    }

    #[test]
    fn nuclear_identity_at_zero() {
        let m = DMatrix::from_fn(4, 3, |r, c| ((r * 3 + c) as f64).cos());
        let out = prox_nuclear(&m, 0.0).unwrap();
        assert!((out - &m).abs().max() < 1e-10);
    }

    #[test]
    fn nuclear_rejects_nan() {
        let m = dmatrix![1.0, f64::NAN];
        assert!(matches!(prox_nuclear(&m, 1.0), Err(Error::Numeric { .. })));
    }

    #[test]
    fn l21_closed_form() {
        let m: DMatrix<f64> = dmatrix![3.0, 0.3, 0.0; 0.0, 0.4, 0.0];
        let out = prox_l21(&m, 1.0);
        assert!((out[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(out.column(1).norm(), 0.0);
        assert_eq!(out.column(2).norm(), 0.0);
        assert_eq!(prox_l21(&m, 0.0), m);
    }

    #[test]
    fn norms() {
        let m = dmatrix![3.0, 0.0; -4.0, 1.0];
        assert_eq!(l1_norm(&m), 8.0);
        assert_eq!(l21_norm(&m), 6.0);
        assert_eq!(max_abs(&m), 4.0);
        let d: DMatrix<f64> = dmatrix![3.0, 0.0; 0.0, -2.0];
        assert!((nuclear_norm(&d).unwrap() - 5.0).abs() < 1e-12);
        assert!((spectral_norm(&d).unwrap() - 3.0).abs() < 1e-12);
    }
}
