//! Differentially private supervised domain adaptation.
//!
//! A learner holds a labeled public sample and a labeled private sample and
//! fits a linear predictor together with per-sample weights, reweighting the
//! public data toward the private distribution. Only the private sample is
//! protected: the discrepancy release uses the Laplace mechanism and the
//! optimizers perturb the private gradient blocks with Gaussian noise.

pub mod baselines;
pub mod cnvx_adap;
pub mod config;
pub mod convex_objective;
pub mod data_io;
pub mod dataset;
pub mod discrepancy;
pub mod error;
pub mod harness;
pub mod loss;
pub mod mechanisms;
pub mod ncnvx_adap;
pub mod nonconvex_objective;
pub mod point;
pub mod rng;

pub use baselines::{fit_baseline, BaselineKind, BaselineResult};
pub use cnvx_adap::{
    default_t_convex, fit_convex, run_cnvx_adap, AdaptationResult, ConvexRunConfig, FitOutcome, IterationRule,
    StepSizes,
};
pub use config::{PrivacyBudget, RegularizerConfig};
pub use convex_objective::ConvexObjective;
pub use dataset::AdaptDataset;
pub use discrepancy::{discrepancy_dca, discrepancy_grid, DcaOptions, DiscrepancyEstimate, DiscrepancySolver};
pub use error::{AdaptError, Result};
pub use loss::{Loss, LossConstants, LossKind, LossModel};
pub use mechanisms::NoiseSchedule;
pub use ncnvx_adap::{default_t_nonconvex, fit_nonconvex, run_ncnvx_adap, NonConvexRunConfig};
pub use nonconvex_objective::NonConvexObjective;
pub use point::{BlockGradient, FeasiblePoint, FeasibleSet};
