//! Batched stochastic linear bandits that tolerate probabilistic reward corruption
//! and keep client rewards locally differentially private.
//!
//! The crate is organised bottom-up:
//!
//! * [`design`]: approximate G-optimal designs and per-round coresets,
//! * [`robust`]: spectral-filtering robust mean estimation and robust least squares,
//! * [`privacy`]: Laplace mechanisms for the per-reward (M1) and aggregated (M2) client models,
//! * [`env`]: the simulated environment and corruption adversary,
//! * [`policy`]: the batched arm-elimination learner,
//! * [`harness`]: seeded sweeps, persistence and summaries behind the CLI.

pub mod design;
pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod policy;
pub mod privacy;
pub mod rng;
pub mod robust;
mod serde_util;

pub use nalgebra;

pub use design::{
    build_coreset, compute_design, compute_design_with, weighted_norm_sq, ActionSet, ClientModel,
    Coreset, Design, DesignOptions,
};
pub use env::{
    AdversaryConfig, BanditEnv, BanditInstance, Environment, NoiseKind, Observation, Report, Strategy,
};
pub use error::{Error, Result};
pub use policy::{
    run_elimination, run_policy, run_vanilla_elimination, Estimator, PolicyConfig, RegretTrace, Schedule,
    ThresholdConfig,
};
pub use privacy::{privatize_m1, privatize_m2, sample_laplace, PrivacyParams};
pub use robust::{filter, robust_least_squares, vanilla_least_squares, LambdaRule, RobustEstimate, RobustOptions};
