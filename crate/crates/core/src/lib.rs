//! Objective-perturbation differentially private ERM, and prediction of the
//! trained model's utility at other privacy budgets from a single run.
//!
//! A model trained at a measuring budget is differentiated implicitly
//! through its stationarity condition; the resulting utility slope gives an
//! affine predictor of utility in epsilon, which [`chooser`] inverts to pick a
//! budget for a target utility.

pub mod chooser;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod perturbation;
pub mod sensitivity;
pub mod trainer;

pub use chooser::{choose_epsilon, plan, Plan};
pub use error::{Error, Result};
pub use model::{
    validate_dataset, BoundMode, Dataset, Example, ExtrapolationLine, LossKind, LossSpec, NoiseDraw,
    PrivacyBudget, PrivateModel, SensitivityReport, SolverMode,
};
pub use sensitivity::{extrapolate, measure, SolveOptions};
pub use trainer::{train, utility, TrainConfig};
