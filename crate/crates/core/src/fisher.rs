//! Class-partitioned coding coefficients and the Fisher discriminant term on
//! them: `tr(S_W) - tr(S_B) + eta * ||A||_F^2`.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Real;

/// `n x N` coefficients over a structured dictionary. Columns are grouped by
/// sample class (`A_i`), rows by the atom blocks of each sub-dictionary, so
/// `block(i, j)` is `A_i^j`: the codes of class-`i` samples over `D_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingMatrix<T: Real> {
    values: DMatrix<T>,
    columns: Partition,
    rows: Partition,
}

impl<T: Real> CodingMatrix<T> {
    pub fn new(values: DMatrix<T>, columns: Partition, rows: Partition) -> Result<Self> {
        if values.ncols() != columns.total() || values.nrows() != rows.total() {
            return Err(Error::Dimension(format!(
                "coding matrix {}x{} does not match partitions {}x{}",
                values.nrows(),
                values.ncols(),
                rows.total(),
                columns.total()
            )));
        }
        if columns.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} column classes but {} row blocks",
                columns.len(),
                rows.len()
            )));
        }
        Ok(Self {
            values,
            columns,
            rows,
        })
    }

    pub fn zeros(columns: Partition, rows: Partition) -> Self {
        let values = DMatrix::zeros(rows.total(), columns.total());
        Self {
            values,
            columns,
            rows,
        }
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<T> {
        &mut self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn column_partition(&self) -> &Partition {
        &self.columns
    }

    pub fn row_partition(&self) -> &Partition {
        &self.rows
    }

    pub fn num_classes(&self) -> usize {
        self.columns.len()
    }

    /// `A_i`, all rows.
    pub fn class_codes(&self, class: usize) -> DMatrixView<'_, T> {
        let c = self.columns.range(class);
        self.values.columns(c.start, c.len())
    }

    pub fn set_class_codes(&mut self, class: usize, codes: &DMatrix<T>) {
        let c = self.columns.range(class);
        self.values.columns_mut(c.start, c.len()).copy_from(codes);
    }

    /// `A_i^j`.
    pub fn block(&self, class: usize, atoms_of: usize) -> DMatrixView<'_, T> {
        let c = self.columns.range(class);
        let r = self.rows.range(atoms_of);
        self.values.view((r.start, c.start), (r.len(), c.len()))
    }

    pub fn set_block(&mut self, class: usize, atoms_of: usize, block: &DMatrix<T>) {
        let c = self.columns.range(class);
        let r = self.rows.range(atoms_of);
        self.values
            .view_mut((r.start, c.start), (r.len(), c.len()))
            .copy_from(block);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.finite())
    }

    pub fn class_mean(&self, class: usize) -> DVector<T> {
        column_mean(&self.class_codes(class))
    }

    pub fn global_mean(&self) -> DVector<T> {
        column_mean(&self.values.as_view())
    }

    pub fn class_means(&self) -> Vec<DVector<T>> {
        (0..self.num_classes())
            .map(|c| self.class_mean(c))
            .collect()
    }
}

pub(crate) fn column_mean<T: Real>(m: &DMatrixView<'_, T>) -> DVector<T> {
    if m.ncols() == 0 {
        return DVector::zeros(m.nrows());
    }
    m.column_sum() / T::of_usize(m.ncols())
}

/// Within-class scatter `S_W = sum_i sum_{a in A_i} (a - m_i)(a - m_i)^T`.
pub fn scatter_within<T: Real>(a: &CodingMatrix<T>) -> DMatrix<T> {
    let n = a.values.nrows();
    let mut s = DMatrix::zeros(n, n);
    for c in 0..a.num_classes() {
        let mean = a.class_mean(c);
        let mut centered = a.class_codes(c).clone_owned();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        s += &centered * centered.transpose();
    }
    s
}

/// Between-class scatter `S_B = sum_i n_i (m_i - m)(m_i - m)^T`.
pub fn scatter_between<T: Real>(a: &CodingMatrix<T>) -> DMatrix<T> {
    let n = a.values.nrows();
    let global = a.global_mean();
    let mut s = DMatrix::zeros(n, n);
    for c in 0..a.num_classes() {
        let diff = a.class_mean(c) - &global;
        s += &diff * diff.transpose() * T::of_usize(a.columns.size(c));
    }
    s
}

/// `tr(S_W) - tr(S_B) + eta * ||A||_F^2`, evaluated through traces without
/// forming the scatter matrices.
pub fn fisher_term<T: Real>(a: &CodingMatrix<T>, eta: T) -> T {
    let global = a.global_mean();
    let mut within = T::zero();
    let mut between = T::zero();
    for c in 0..a.num_classes() {
        let codes = a.class_codes(c);
        let mean = column_mean(&codes);
        within += codes
            .column_iter()
            .map(|col| (col - &mean).norm_squared())
            .fold(T::zero(), |s, v| s + v);
        between += (mean - &global).norm_squared() * T::of_usize(codes.ncols());
    }
    within - between + eta * a.values.norm_squared()
}

/// The Fisher term seen by one class block.
///
/// Everything except `A_i` is frozen; the global mean still moves with `A_i`.
/// For a candidate block `X`,
/// `F_i(X) = ||X - M_i||^2 - sum_k n_k ||m_k - m||^2 + eta ||X||^2`,
/// which agrees with the full Fisher term up to a constant (the frozen
/// classes' within-class scatter and `eta`-weight), so descent on `F_i` is
/// descent on the full term.
#[derive(Debug, Clone)]
pub struct ClassFisher<T: Real> {
    eta: T,
    total: usize,
    class_size: usize,
    rest_sum: DVector<T>,
    others: Vec<(usize, DVector<T>)>,
}

impl<T: Real> ClassFisher<T> {
    pub fn new(a: &CodingMatrix<T>, class: usize, eta: T) -> Self {
        let n = a.values.nrows();
        let mut rest_sum = DVector::zeros(n);
        let mut others = Vec::new();
        for c in (0..a.num_classes()).filter(|&c| c != class) {
            let codes = a.class_codes(c);
            let sum = codes.column_sum();
            rest_sum += &sum;
            let size = codes.ncols();
            if size > 0 {
                others.push((size, sum / T::of_usize(size)));
            }
        }
        Self {
            eta,
            total: a.values.ncols(),
            class_size: a.columns.size(class),
            rest_sum,
            others,
        }
    }

    fn means(&self, block: &DMatrix<T>) -> (DVector<T>, DVector<T>) {
        let class_mean = column_mean(&block.as_view());
        let global = (&self.rest_sum + block.column_sum()) / T::of_usize(self.total);
        (class_mean, global)
    }

    pub fn value(&self, block: &DMatrix<T>) -> T {
        let (class_mean, global) = self.means(block);
        let within = block
            .column_iter()
            .map(|col| (col - &class_mean).norm_squared())
            .fold(T::zero(), |s, v| s + v);
        let mut between = (&class_mean - &global).norm_squared() * T::of_usize(self.class_size);
        for (size, mean) in &self.others {
            between += (mean - &global).norm_squared() * T::of_usize(*size);
        }
        within - between + self.eta * block.norm_squared()
    }

    /// `2(X - M_i) - 2(M_i - M) + 2 eta X`.
    pub fn gradient(&self, block: &DMatrix<T>) -> DMatrix<T> {
        let (class_mean, global) = self.means(block);
        let two = T::of(2.0);
        let shift = (&class_mean * two - &global) * two;
        let mut g = block * (two + two * self.eta);
        for mut col in g.column_iter_mut() {
            col -= &shift;
        }
        g
    }
}

/// Gradient of the class-`i` Fisher term with respect to `A_i`.
pub fn fisher_term_grad<T: Real>(a: &CodingMatrix<T>, class: usize, eta: T) -> DMatrix<T> {
    ClassFisher::new(a, class, eta).gradient(&a.class_codes(class).clone_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn coding(values: DMatrix<f64>, counts: &[usize]) -> CodingMatrix<f64> {
        let rows = Partition::from_counts(&{
            let mut r = vec![0; counts.len()];
            r[0] = values.nrows();
            r
        });
        CodingMatrix::new(values, Partition::from_counts(counts), rows).unwrap()
    }

    #[test]
    fn singleton_classes_have_no_within_scatter() {
        let a = coding(dmatrix![1.0, 2.0, -3.0; 0.5, 4.0, 1.0], &[1, 1, 1]);
        assert_eq!(scatter_within(&a), DMatrix::zeros(2, 2));
    }

    #[test]
    fn hand_scatters() {
        let a = coding(dmatrix![1.0, -1.0; 0.0, 0.0], &[2]);
        assert_eq!(scatter_within(&a), dmatrix![2.0, 0.0; 0.0, 0.0]);
        let b = coding(dmatrix![1.0, -1.0], &[1, 1]);
        assert_eq!(scatter_between(&b), dmatrix![2.0]);
        let same = coding(dmatrix![3.0, 3.0, 3.0; 1.0, 1.0, 1.0], &[2, 1]);
        assert_eq!(scatter_between(&same), DMatrix::zeros(2, 2));
    }

    #[test]
    fn fisher_special_cases() {
        let zero = coding(DMatrix::zeros(3, 4), &[2, 2]);
        assert_eq!(fisher_term(&zero, 1.0), 0.0);
        let single = coding(dmatrix![1.0, 2.0, 4.0; 0.0, 1.0, -1.0], &[3]);
        let expected = scatter_within(&single).trace() + 0.5 * single.values().norm_squared();
        assert!((fisher_term(&single, 0.5) - expected).abs() < 1e-12);
    }

    #[test]
    fn balanced_stationary_configuration_has_zero_gradient() {
        // Each class sits at its mean and every class mean equals the global mean.
        let a = coding(dmatrix![1.0, 1.0, 1.0, 1.0; 2.0, 2.0, 2.0, 2.0], &[2, 2]);
        let g = fisher_term_grad(&a, 0, 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g}");
    }

    #[test]
    fn class_value_tracks_full_term_up_to_constant() {
        let mut a = coding(
            DMatrix::from_fn(3, 5, |r, c| ((r * 5 + c) as f64).sin()),
            &[2, 3],
        );
        let f = ClassFisher::new(&a, 1, 0.7);
        let before = fisher_term(&a, 0.7) - f.value(&a.class_codes(1).clone_owned());
        let new_block = DMatrix::from_fn(3, 3, |r, c| (r as f64) - 0.5 * c as f64);
        a.set_class_codes(1, &new_block);
        let after = fisher_term(&a, 0.7) - f.value(&new_block);
        assert!((before - after).abs() < 1e-12);
    }
}
