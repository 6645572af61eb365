//! The mutable bundle the alternating updates operate on.

use nalgebra::{DMatrix, DMatrixView};

use crate::dictionary::StructuredDictionary;
use crate::error::{Error, Result};
use crate::fisher::CodingMatrix;
use crate::graph::SupervisedGraph;
use crate::partition::Partition;
use crate::proj_update::ProjectionMatrix;
use crate::scalar::Real;
use crate::trainer::Hyperparameters;

/// Training samples (class-grouped columns) together with the current
/// projection, dictionary and codes. `P^T X` is cached and refreshed whenever
/// the projection changes.
#[derive(Debug, Clone)]
pub struct ModelState<T: Real> {
    samples: DMatrix<T>,
    columns: Partition,
    projection: ProjectionMatrix<T>,
    projected: DMatrix<T>,
    pub(crate) dictionary: StructuredDictionary<T>,
    pub(crate) codes: CodingMatrix<T>,
    graph: SupervisedGraph<T>,
    params: Hyperparameters<T>,
}

impl<T: Real> ModelState<T> {
    pub fn new(
        samples: DMatrix<T>,
        columns: Partition,
        projection: ProjectionMatrix<T>,
        dictionary: StructuredDictionary<T>,
        codes: CodingMatrix<T>,
        graph: SupervisedGraph<T>,
        params: Hyperparameters<T>,
    ) -> Result<Self> {
        let n = samples.ncols();
        let k = columns.len();
        let consistent = columns.total() == n
            && projection.input_dim() == samples.nrows()
            && dictionary.dim() == projection.output_dim()
            && dictionary.num_classes() == k
            && codes.column_partition() == &columns
            && codes.row_partition() == dictionary.blocks()
            && graph.len() == n;
        if !consistent {
            return Err(Error::Dimension(format!(
                "inconsistent state: X {}x{}, P {}x{}, D {}x{} over {} blocks, A {}x{}, graph {} over {} classes",
                samples.nrows(),
                n,
                projection.input_dim(),
                projection.output_dim(),
                dictionary.dim(),
                dictionary.total_atoms(),
                dictionary.num_classes(),
                codes.values().nrows(),
                codes.values().ncols(),
                graph.len(),
                k
            )));
        }
        let projected = projection.project(&samples);
        Ok(Self {
            samples,
            columns,
            projection,
            projected,
            dictionary,
            codes,
            graph,
            params,
        })
    }

    pub fn samples(&self) -> &DMatrix<T> {
        &self.samples
    }

    pub fn class_samples(&self, class: usize) -> DMatrixView<'_, T> {
        let r = self.columns.range(class);
        self.samples.columns(r.start, r.len())
    }

    pub fn columns(&self) -> &Partition {
        &self.columns
    }

    pub fn num_classes(&self) -> usize {
        self.columns.len()
    }

    pub fn projection(&self) -> &ProjectionMatrix<T> {
        &self.projection
    }

    pub fn set_projection(&mut self, p: ProjectionMatrix<T>) -> Result<()> {
        if p.as_matrix().shape() != self.projection.as_matrix().shape() {
            return Err(Error::Dimension("projection shape changed".into()));
        }
        self.projected = p.project(&self.samples);
        self.projection = p;
        Ok(())
    }

    /// `P^T X`.
    pub fn projected(&self) -> &DMatrix<T> {
        &self.projected
    }

    /// `P^T X_i`.
    pub fn projected_class(&self, class: usize) -> DMatrixView<'_, T> {
        let r = self.columns.range(class);
        self.projected.columns(r.start, r.len())
    }

    pub fn dictionary(&self) -> &StructuredDictionary<T> {
        &self.dictionary
    }

    pub fn codes(&self) -> &CodingMatrix<T> {
        &self.codes
    }

    pub fn set_codes(&mut self, codes: CodingMatrix<T>) -> Result<()> {
        if codes.column_partition() != &self.columns
            || codes.row_partition() != self.dictionary.blocks()
        {
            return Err(Error::Dimension(
                "coding matrix partitions do not match the state".into(),
            ));
        }
        self.codes = codes;
        Ok(())
    }

    pub fn set_dictionary(&mut self, dictionary: StructuredDictionary<T>) -> Result<()> {
        if dictionary.blocks() != self.dictionary.blocks()
            || dictionary.dim() != self.dictionary.dim()
        {
            return Err(Error::Dimension("dictionary layout changed".into()));
        }
        self.dictionary = dictionary;
        Ok(())
    }

    pub fn graph(&self) -> &SupervisedGraph<T> {
        &self.graph
    }

    pub fn params(&self) -> &Hyperparameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Hyperparameters<T> {
        &mut self.params
    }
}
