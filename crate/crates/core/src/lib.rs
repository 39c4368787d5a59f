//! Neural Fine-Gray: competing-risks survival analysis with monotonic neural
//! networks that model cumulative incidence functions directly.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod reclassification;
pub mod trainer;
pub mod verification;

pub use autodiff::{Backend, Dual, DualBackend, Gradient, Tape, Var};
pub use data::{SurvivalDataset, SyntheticSpec};
pub use error::{NfgError, Result};
pub use model::{Architecture, CifEvaluation, NfgModel, Variant};
pub use objectives::{LossBreakdown, Objective, SurvivalBatch};
