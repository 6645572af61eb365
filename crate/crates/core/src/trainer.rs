//! Outer alternating loop over codes, dictionary and projection.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coder::{ridge_codes, update_all_codes};
use crate::data::LabeledDataset;
use crate::dict_update::{sweep_dictionary, AlmParams, AlmTraceRow, DictUpdateRule};
use crate::dictionary::StructuredDictionary;
use crate::error::{Error, Phase, Result};
use crate::fisher::{fisher_term, CodingMatrix};
use crate::graph::{build_graph, graph_scatter, projection_graph_cost, Bandwidth};
use crate::partition::Partition;
use crate::proj_update::{
    align_basis, assemble_stacked_system, blend_projection, doubled_samples, pca_init,
    projection_target, EigenSelection, ProjectionMatrix,
};
use crate::prox::{l1_norm, nuclear_norm};
use crate::scalar::Real;
use crate::state::ModelState;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters<T> {
    /// `l1` weight on the codes.
    pub lambda1: T,
    /// Fisher term weight.
    pub lambda2: T,
    /// Frobenius regularizer inside the Fisher term.
    pub eta: T,
    /// Nuclear-norm weight on each sub-dictionary; 0 disables the low-rank term.
    pub alpha: T,
    /// Graph term weight.
    pub delta: T,
    /// `l2,1` weight on the sub-dictionary error matrix.
    pub beta: T,
    /// Coupling weight inside the sub-dictionary solver.
    pub lambda: T,
    /// Projection blend factor in `(0, 1]`.
    pub gamma: T,
    /// `l1` weight when coding a query.
    pub xi: T,
    /// Weight of the distance to the class mean code in the class residual.
    pub omega: T,
    /// Reduced dimension `d`.
    pub dim: usize,
    pub atoms_per_class: usize,
    pub k: Option<usize>,
    pub t: Bandwidth<T>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub max_alm_iters: usize,
    pub seed: u64,
    pub eigen_selection: EigenSelection,
    pub dict_rule: DictUpdateRule,
    /// Keep the PCA projection fixed (no projection updates).
    pub fixed_projection: bool,
    /// Early stop on relative objective change across one outer iteration.
    pub outer_tol: T,
}

impl<T: Real> Default for Hyperparameters<T> {
    fn default() -> Self {
        Self {
            lambda1: T::of(0.05),
            lambda2: T::of(0.05),
            eta: T::one(),
            alpha: T::one(),
            delta: T::one(),
            beta: T::one(),
            lambda: T::one(),
            gamma: T::of(0.03),
            xi: T::of(0.001),
            omega: T::of(0.001),
            dim: 8,
            atoms_per_class: 5,
            k: None,
            t: Bandwidth::Auto,
            outer_iters: 10,
            inner_iters: 50,
            max_alm_iters: 500,
            seed: 0,
            eigen_selection: EigenSelection::Smallest,
            dict_rule: DictUpdateRule::Derived,
            fixed_projection: false,
            outer_tol: T::of(1e-4),
        }
    }
}

impl<T: Real> Hyperparameters<T> {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let weights = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("delta", self.delta),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("xi", self.xi),
            ("omega", self.omega),
            ("outer_tol", self.outer_tol),
        ];
        for (name, v) in weights {
            if !(v >= T::zero()) || !v.finite() {
                return Err(Error::Parameter(format!(
                    "{name} = {v} must be finite and nonnegative"
                )));
            }
        }
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return Err(Error::Parameter(format!(
                "gamma = {} must lie in (0, 1]",
                self.gamma
            )));
        }
        if self.dim == 0 || self.dim >= input_dim {
            return Err(Error::Parameter(format!(
                "target dimension {} must satisfy 0 < d < m = {input_dim}",
                self.dim
            )));
        }
        if self.atoms_per_class == 0 {
            return Err(Error::Parameter(
                "atoms_per_class must be at least 1".into(),
            ));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 || self.max_alm_iters == 0 {
            return Err(Error::Parameter(
                "iteration limits must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Sets one field from its text form. Returns `Ok(false)` for an unknown
    /// key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!(
                    "invalid value `{value}` for `{key}`"
                ))),
            }
        }
        match key {
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "xi" => self.xi = parse(key, value)?,
            "omega" => self.omega = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "atoms_per_class" => self.atoms_per_class = parse(key, value)?,
            "k" => {
                self.k = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "t" => {
                self.t = if value == "auto" {
                    Bandwidth::Auto
                } else {
                    Bandwidth::Fixed(parse(key, value)?)
                }
            }
            "outer_iters" => self.outer_iters = parse(key, value)?,
            "inner_iters" => self.inner_iters = parse(key, value)?,
            "max_alm_iters" => self.max_alm_iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "eigen_selection" => self.eigen_selection = value.parse()?,
            "dict_rule" => self.dict_rule = value.parse()?,
            "fixed_projection" => self.fixed_projection = flag(key, value)?,
            "outer_tol" => self.outer_tol = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every field as `(key, value)` in the text form accepted by [`Self::set`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |k| k.to_string());
        let t = match self.t {
            Bandwidth::Auto => "auto".to_string(),
            Bandwidth::Fixed(t) => t.to_string(),
        };
        vec![
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("eta", self.eta.to_string()),
            ("alpha", self.alpha.to_string()),
            ("delta", self.delta.to_string()),
            ("beta", self.beta.to_string()),
            ("lambda", self.lambda.to_string()),
            ("gamma", self.gamma.to_string()),
            ("xi", self.xi.to_string()),
            ("omega", self.omega.to_string()),
            ("dim", self.dim.to_string()),
            ("atoms_per_class", self.atoms_per_class.to_string()),
            ("k", opt(self.k)),
            ("t", t),
            ("outer_iters", self.outer_iters.to_string()),
            ("inner_iters", self.inner_iters.to_string()),
            ("max_alm_iters", self.max_alm_iters.to_string()),
            ("seed", self.seed.to_string()),
            ("eigen_selection", self.eigen_selection.to_string()),
            ("dict_rule", self.dict_rule.to_string()),
            ("fixed_projection", self.fixed_projection.to_string()),
            ("outer_tol", self.outer_tol.to_string()),
        ]
    }

    pub fn alm_params(&self) -> AlmParams {
        AlmParams {
            max_iters: self.max_alm_iters,
            rule: self.dict_rule,
            ..AlmParams::default()
        }
    }
}

/// The individual terms of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown<T> {
    pub reconstruction: T,
    pub l1: T,
    pub fisher: T,
    pub nuclear: T,
    pub graph: T,
    pub total: T,
}

/// Discriminative reconstruction error summed over classes.
pub fn reconstruction_error<T: Real>(
    projected: &DMatrix<T>,
    dict: &StructuredDictionary<T>,
    codes: &CodingMatrix<T>,
) -> T {
    let mut total = T::zero();
    for i in 0..codes.num_classes() {
        let r = codes.column_partition().range(i);
        let y = projected.columns(r.start, r.len());
        total += (y - dict.atoms() * codes.class_codes(i)).norm_squared();
        total += (y - dict.sub(i) * codes.block(i, i)).norm_squared();
        for j in (0..codes.num_classes()).filter(|&j| j != i) {
            total += (dict.sub(j) * codes.block(i, j)).norm_squared();
        }
    }
    total
}

/// Full training objective at the current state.
pub fn objective<T: Real>(state: &ModelState<T>) -> Result<ObjectiveBreakdown<T>> {
    let hp = state.params();
    let reconstruction = reconstruction_error(state.projected(), state.dictionary(), state.codes());
    let l1 = l1_norm(state.codes().values());
    let fisher = fisher_term(state.codes(), hp.eta);
    let mut nuclear = T::zero();
    for i in 0..state.num_classes() {
        nuclear += nuclear_norm(&state.dictionary().sub(i).clone_owned())?;
    }
    let graph = projection_graph_cost(
        state.projection().as_matrix(),
        state.samples(),
        state.graph(),
    )?;
    let total = reconstruction
        + hp.lambda1 * l1
        + hp.lambda2 * fisher
        + hp.alpha * nuclear
        + hp.delta * graph;
    Ok(ObjectiveBreakdown {
        reconstruction,
        l1,
        fisher,
        nuclear,
        graph,
        total,
    })
}

/// Learned projection and dictionary plus everything needed to classify.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T: Real> {
    pub projection: ProjectionMatrix<T>,
    pub dictionary: StructuredDictionary<T>,
    /// Mean code of each class's training samples, length `n`.
    pub class_means: Vec<DVector<T>>,
    /// Original label of each class index.
    pub class_names: Vec<i64>,
    pub params: Hyperparameters<T>,
    /// Objective at initialization followed by one value per outer iteration.
    pub objective_trace: Vec<T>,
    /// Final training codes (class-grouped columns), kept so the training
    /// objective can be recomputed from a saved model.
    pub training_codes: Option<CodingMatrix<T>>,
}

impl<T: Real> TrainedModel<T> {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn input_dim(&self) -> usize {
        self.projection.input_dim()
    }

    /// Rebuilds the training state from the training set this model was fit
    /// on (needs [`Self::training_codes`]).
    pub fn restore_state(&self, train: &LabeledDataset<T>) -> Result<ModelState<T>> {
        let codes = self
            .training_codes
            .clone()
            .ok_or_else(|| Error::Input("model was saved without training codes".into()))?;
        if train.class_names() != self.class_names.as_slice() {
            return Err(Error::Input(
                "training classes differ from the model's".into(),
            ));
        }
        let (grouped, columns, _) = train.grouped_by_class();
        let graph = build_graph(&grouped, self.params.k, self.params.t)?;
        ModelState::new(
            grouped.samples().clone(),
            columns,
            self.projection.clone(),
            self.dictionary.clone(),
            codes,
            graph,
            self.params.clone(),
        )
    }
}

/// Extra diagnostics collected during [`fit`].
#[derive(Debug, Clone, Default)]
pub struct FitReport<T> {
    /// ALM residual traces, indexed `[outer iteration][class]`.
    pub alm_traces: Vec<Vec<Vec<AlmTraceRow<T>>>>,
    /// Number of sub-dictionary solves that hit the iteration cap.
    pub alm_unconverged: usize,
    pub outer_iterations: usize,
}

pub fn fit<T: Real>(ds: &LabeledDataset<T>, hp: &Hyperparameters<T>) -> Result<TrainedModel<T>> {
    fit_with_report(ds, hp).map(|(m, _)| m)
}

/// Initial dictionary: per class, `atoms_per_class` projected training samples
/// drawn without replacement (recycled with `1e-3` jitter when the class is
/// smaller), unit-normalized.
pub fn initial_dictionary<T: Real>(
    projected: &DMatrix<T>,
    columns: &Partition,
    atoms_per_class: usize,
    rng: &mut ChaCha8Rng,
) -> StructuredDictionary<T> {
    let k = columns.len();
    let d = projected.nrows();
    let blocks = Partition::uniform(k, atoms_per_class);
    let mut atoms = DMatrix::zeros(d, k * atoms_per_class);
    for (i, range) in columns.ranges().iter().enumerate() {
        let ni = range.len();
        let picks: Vec<usize> = if ni >= atoms_per_class {
            sample_indices(rng, ni, atoms_per_class).into_vec()
        } else {
            (0..atoms_per_class).map(|a| a % ni).collect()
        };
        for (a, &p) in picks.iter().enumerate() {
            let mut col = projected.column(range.start + p).clone_owned();
            if a >= ni {
                for v in col.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += T::of(1e-3 * z);
                }
            }
            let n = col.norm();
            if n > T::default_epsilon() {
                col /= n;
            } else {
                col.fill(T::zero());
                col[(i * atoms_per_class + a) % d] = T::one();
            }
            atoms.set_column(i * atoms_per_class + a, &col);
        }
    }
    StructuredDictionary::new(atoms, blocks).expect("layout matches")
}

/// Initial state: PCA projection, sampled dictionary, ridge codes. The input
/// is regrouped by class first.
pub fn initial_state<T: Real>(
    ds: &LabeledDataset<T>,
    hp: &Hyperparameters<T>,
) -> Result<ModelState<T>> {
    hp.validate(ds.dim())?;
    if let Some(c) = ds.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::Input(format!(
            "class {} has no training samples",
            ds.class_names()[c]
        )));
    }
    let (grouped, columns, _) = ds.grouped_by_class();
    let x = grouped.samples().clone();
    let graph = build_graph(&grouped, hp.k, hp.t)?;
    let projection = pca_init(&x, hp.dim)?;
    let projected = projection.project(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let dictionary = initial_dictionary(&projected, &columns, hp.atoms_per_class, &mut rng);
    let a0 = ridge_codes(&dictionary, &projected, T::of(0.01))?;
    let codes = CodingMatrix::new(a0, columns.clone(), dictionary.blocks().clone())?;
    ModelState::new(x, columns, projection, dictionary, codes, graph, hp.clone())
}

/// One damped projection step: eigenvector target of the trace subproblem,
/// rotated onto the current basis, blended and re-orthonormalized.
pub fn update_projection<T: Real>(
    state: &mut ModelState<T>,
    doubled: &DMatrix<T>,
    graph_term: &DMatrix<T>,
) -> Result<()> {
    let hp = state.params().clone();
    let stacked = assemble_stacked_system(state.dictionary(), state.codes())?;
    let target = projection_target(
        state.projection(),
        doubled,
        &stacked,
        graph_term,
        hp.delta,
        hp.eigen_selection,
    )?;
    let aligned = align_basis(&target, state.projection().as_matrix())?;
    let next = blend_projection(state.projection(), &aligned, hp.gamma)?;
    state.set_projection(next)
}

pub fn fit_with_report<T: Real>(
    ds: &LabeledDataset<T>,
    hp: &Hyperparameters<T>,
) -> Result<(TrainedModel<T>, FitReport<T>)> {
    let mut state = initial_state(ds, hp)?;
    let doubled = doubled_samples(state.samples(), state.columns());
    let graph_term = graph_scatter(state.samples(), state.graph());
    let alm = hp.alm_params();
    let mut trace = vec![objective(&state)?.total];
    let mut report = FitReport::default();

    for outer in 1..=hp.outer_iters {
        update_all_codes(&mut state, hp.inner_iters)
            .map_err(|e| e.in_phase(Phase::Codes, outer))?;
        let outcomes =
            sweep_dictionary(&mut state, &alm).map_err(|e| e.in_phase(Phase::Dictionary, outer))?;
        report.alm_unconverged += outcomes.iter().filter(|o| !o.converged).count();
        report
            .alm_traces
            .push(outcomes.into_iter().map(|o| o.trace).collect());
        if !hp.fixed_projection {
            update_projection(&mut state, &doubled, &graph_term)
                .map_err(|e| e.in_phase(Phase::Projection, outer))?;
        }
        let value = objective(&state)
            .map_err(|e| e.in_phase(Phase::Projection, outer))?
            .total;
        if !value.finite() {
            return Err(Error::numeric(
                Phase::Codes,
                outer,
                "objective is not finite",
            ));
        }
        let prev = *trace.last().expect("nonempty");
        trace.push(value);
        report.outer_iterations = outer;
        log::debug!("outer iteration {outer}: objective {value:e}");
        if (prev - value).abs() <= hp.outer_tol * prev.abs() {
            break;
        }
    }

    let codes = state.codes().clone();
    let model = TrainedModel {
        projection: state.projection().clone(),
        dictionary: state.dictionary().clone(),
        class_means: codes.class_means(),
        class_names: ds.class_names().to_vec(),
        params: hp.clone(),
        objective_trace: trace,
        training_codes: Some(codes),
    };
    Ok((model, report))
}
