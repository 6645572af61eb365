//! Query classification: sparse-code the projected query over the whole
//! dictionary, then pick the class with the smallest regularized residual.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::coder::{proximal_gradient, ProxGradOptions};
use crate::data::LabeledDataset;
use crate::error::{Error, Phase, Result};
use crate::prox::spectral_norm;
use crate::scalar::Real;
use crate::trainer::TrainedModel;

/// Query coder with the Gram matrix and step size cached.
#[derive(Debug, Clone)]
pub struct Encoder<'a, T: Real> {
    model: &'a TrainedModel<T>,
    gram: DMatrix<T>,
    lipschitz: T,
    options: ProxGradOptions,
}

impl<'a, T: Real> Encoder<'a, T> {
    pub fn new(model: &'a TrainedModel<T>) -> Result<Self> {
        let d = model.dictionary.atoms();
        let s = spectral_norm(d).map_err(|e| e.in_phase(Phase::Classify, 0))?;
        Ok(Self {
            model,
            gram: d.tr_mul(d),
            lipschitz: (T::of(2.0) * s * s).max(T::of(1e-12)),
            options: ProxGradOptions {
                max_iter: 1000,
                rel_tol: 1e-9,
                backtracking: false,
                accelerated: true,
            },
        })
    }

    pub fn with_options(mut self, options: ProxGradOptions) -> Self {
        self.options = options;
        self
    }

    fn check(&self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.model.input_dim() {
            return Err(Error::Dimension(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.model.input_dim()
            )));
        }
        if !x.iter().all(|v| v.finite()) {
            return Err(Error::Input("query has non-finite features".into()));
        }
        Ok(())
    }

    /// `P^T x`.
    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        self.model.projection.as_matrix().tr_mul(x)
    }

    /// `argmin_a ||P^T x - D a||^2 + xi ||a||_1`.
    pub fn encode(&self, x: &DVector<T>, xi: T) -> Result<DVector<T>> {
        self.check(x)?;
        if !(xi >= T::zero()) {
            return Err(Error::Parameter(format!("xi = {xi} must be nonnegative")));
        }
        let y = self.project(x);
        let d = self.model.dictionary.atoms();
        let dty = DMatrix::from_column_slice(d.ncols(), 1, d.tr_mul(&y).as_slice());
        let y_col = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        let two = T::of(2.0);
        let out = proximal_gradient(
            DMatrix::zeros(d.ncols(), 1),
            xi,
            self.lipschitz,
            self.options,
            Phase::Classify,
            |a| (&y_col - d * a).norm_squared(),
            |a| (&self.gram * a - &dty) * two,
        )?;
        Ok(DVector::from_column_slice(out.solution.as_slice()))
    }

    /// `e_i` for every class, given the projected query and its code.
    pub fn residuals(&self, projected: &DVector<T>, code: &DVector<T>, omega: T) -> Vec<T> {
        (0..self.model.num_classes())
            .map(|i| class_residual(self.model, projected, code, i, omega))
            .collect()
    }

    /// Class index and all residuals.
    pub fn classify(&self, x: &DVector<T>) -> Result<(usize, Vec<T>)> {
        let hp = &self.model.params;
        let code = self.encode(x, hp.xi)?;
        let residuals = self.residuals(&self.project(x), &code, hp.omega);
        Ok((argmin(&residuals), residuals))
    }
}

/// Lowest index among the minimizers.
fn argmin<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

pub fn encode<T: Real>(model: &TrainedModel<T>, x: &DVector<T>, xi: T) -> Result<DVector<T>> {
    Encoder::new(model)?.encode(x, xi)
}

/// `||P^T x - D_i a_i||^2 + omega ||a - m_i||^2` with `projected = P^T x`.
pub fn class_residual<T: Real>(
    model: &TrainedModel<T>,
    projected: &DVector<T>,
    code: &DVector<T>,
    class: usize,
    omega: T,
) -> T {
    let r = model.dictionary.blocks().range(class);
    let fit =
        (projected - model.dictionary.sub(class) * code.rows(r.start, r.len())).norm_squared();
    fit + omega * (code - &model.class_means[class]).norm_squared()
}

/// Class index of the query.
pub fn predict<T: Real>(model: &TrainedModel<T>, x: &DVector<T>) -> Result<usize> {
    Ok(Encoder::new(model)?.classify(x)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub accuracy: f64,
    /// `confusion[true][predicted]`, indexed by model class.
    pub confusion: Vec<Vec<usize>>,
    pub truth: Vec<usize>,
    pub predictions: Vec<usize>,
    pub residuals: Vec<Vec<T>>,
    pub class_names: Vec<i64>,
}

impl<T: Real> Evaluation<T> {
    pub fn correct(&self) -> usize {
        self.truth
            .iter()
            .zip(&self.predictions)
            .filter(|(a, b)| a == b)
            .count()
    }

    /// `sample,true_label,predicted_label,e_<label>...`
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("sample,true_label,predicted_label");
        for name in &self.class_names {
            let _ = write!(out, ",e_{name}");
        }
        out.push('\n');
        for (s, ((t, p), res)) in self
            .truth
            .iter()
            .zip(&self.predictions)
            .zip(&self.residuals)
            .enumerate()
        {
            let _ = write!(out, "{s},{},{}", self.class_names[*t], self.class_names[*p]);
            for e in res {
                let _ = write!(out, ",{e}");
            }
            out.push('\n');
        }
        out
    }

    /// `true_label,<predicted labels...>` count matrix.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true_label");
        for name in &self.class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{}", self.class_names[t]);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Classifies every test column. Test labels are matched to model classes by
/// their original label values.
pub fn evaluate<T: Real>(
    model: &TrainedModel<T>,
    test: &LabeledDataset<T>,
) -> Result<Evaluation<T>> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    if test.dim() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "test features have dimension {}, model expects {}",
            test.dim(),
            model.input_dim()
        )));
    }
    let truth: Vec<usize> = test
        .labels()
        .iter()
        .map(|&l| {
            let name = test.class_names()[l];
            model
                .class_names
                .iter()
                .position(|&n| n == name)
                .ok_or_else(|| Error::Input(format!("test label {name} is unknown to the model")))
        })
        .collect::<Result<_>>()?;
    let encoder = Encoder::new(model)?;
    let results: Vec<(usize, Vec<T>)> = (0..test.len())
        .into_par_iter()
        .map(|j| encoder.classify(&test.samples().column(j).clone_owned()))
        .collect::<Result<_>>()?;
    let k = model.num_classes();
    let mut confusion = vec![vec![0; k]; k];
    let mut predictions = Vec::with_capacity(results.len());
    let mut residuals = Vec::with_capacity(results.len());
    for (t, (p, res)) in truth.iter().zip(results) {
        confusion[*t][p] += 1;
        predictions.push(p);
        residuals.push(res);
    }
    let correct = truth
        .iter()
        .zip(&predictions)
        .filter(|(a, b)| a == b)
        .count();
    Ok(Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        confusion,
        truth,
        predictions,
        residuals,
        class_names: model.class_names.clone(),
    })
}
