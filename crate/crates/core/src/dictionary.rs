use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::scalar::Real;

/// `d x n` dictionary whose columns (atoms) are split into one contiguous
/// sub-dictionary `D_i` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredDictionary<T: Real> {
    atoms: DMatrix<T>,
    blocks: Partition,
}

impl<T: Real> StructuredDictionary<T> {
    pub fn new(atoms: DMatrix<T>, blocks: Partition) -> Result<Self> {
        if atoms.ncols() != blocks.total() {
            return Err(Error::Dimension(format!(
                "{} atoms but partition covers {}",
                atoms.ncols(),
                blocks.total()
            )));
        }
        Ok(Self { atoms, blocks })
    }

    pub fn atoms(&self) -> &DMatrix<T> {
        &self.atoms
    }

    pub fn blocks(&self) -> &Partition {
        &self.blocks
    }

    /// Reduced dimension `d`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn total_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.blocks.len()
    }

    /// `D_i`.
    pub fn sub(&self, class: usize) -> DMatrixView<'_, T> {
        let r = self.blocks.range(class);
        self.atoms.columns(r.start, r.len())
    }

    pub fn set_sub(&mut self, class: usize, block: &DMatrix<T>) {
        let r = self.blocks.range(class);
        self.atoms.columns_mut(r.start, r.len()).copy_from(block);
    }

    pub(crate) fn atom_mut(&mut self, index: usize) -> nalgebra::DVectorViewMut<'_, T> {
        self.atoms.column_mut(index)
    }

    pub fn atom_norms(&self) -> Vec<T> {
        self.atoms.column_iter().map(|c| c.norm()).collect()
    }

    /// Every atom has norm 0 or within `tol` of 1.
    pub fn is_normalized(&self, tol: T) -> bool {
        self.atom_norms()
            .into_iter()
            .all(|n| n == T::zero() || (n - T::one()).abs() <= tol)
    }
}
