//! Joint projection and dictionary learning for robust classification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod coder;
pub mod data;
pub mod dict_update;
pub mod dictionary;
pub mod error;
pub mod fisher;
pub mod graph;
pub mod harness;
pub mod partition;
pub mod persist;
pub mod proj_update;
pub mod prox;
pub mod scalar;
pub mod state;
pub mod trainer;

pub use classifier::{evaluate, predict, Encoder, Evaluation};
pub use data::{make_synthetic, CorruptionKind, CorruptionSpec, DataFormat, LabeledDataset};
pub use dict_update::{AlmParams, DictUpdateRule};
pub use dictionary::StructuredDictionary;
pub use error::{Error, Phase, Result};
pub use fisher::CodingMatrix;
pub use graph::{Bandwidth, SupervisedGraph};
pub use partition::Partition;
pub use persist::{load_model, save_model};
pub use proj_update::{EigenSelection, ProjectionMatrix};
pub use scalar::Real;
pub use state::ModelState;
pub use trainer::{fit, fit_with_report, Hyperparameters, TrainedModel};

pub type Dataset64 = LabeledDataset<f64>;
pub type Dataset32 = LabeledDataset<f32>;
pub type Model64 = TrainedModel<f64>;
pub type Model32 = TrainedModel<f32>;
pub type Hyperparameters64 = Hyperparameters<f64>;
pub type Hyperparameters32 = Hyperparameters<f32>;
