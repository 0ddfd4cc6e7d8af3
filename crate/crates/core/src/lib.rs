//! Firm-level production simulation and closed-form elasticity recovery.
//!
//! The crate covers the full loop for log-linear (Cobb-Douglas) production
//! with heterogeneous, latent-index-driven elasticities:
//!
//! * [`technology`] — coefficient functions of the latent index and grid
//!   validation of the structural requirements;
//! * [`simulator`] — synthetic cross-sections of profit-maximizing firms,
//!   with the closed-form flexible-input choice and a brute-force
//!   optimization oracle;
//! * [`smoother`] — multivariate local-linear regression, bandwidth
//!   selection, and product-kernel density estimation;
//! * [`identification`] — the per-firm recovery pipeline: cost-ratio
//!   control variable, ex-ante cost shares, net-output derivatives, and
//!   additive productivity, for the baseline model and three variants;
//! * [`harness`] — CSV ingestion, Monte Carlo experiments, and report
//!   emission;
//! * [`config`] — the flat key-value configuration format used by the CLI.
//!
//! Numerical code is generic over the [`Scalar`] floating-point type;
//! the `*64` aliases fix the recommended `f64` working precision.

pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod identification;
mod linalg;
pub mod scalar;
pub mod simulator;
pub mod smoother;
pub mod technology;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use dataset::{Dataset, FirmRecord, HiddenTruth, PriceVector};
pub use identification::{ElasticityEstimates, EstimatorConfig, FirmEstimate};
pub use simulator::SimulationConfig;
pub use technology::{
    Coefficient, CoefficientVector, ModelVariant, Omega, OmegaSupport, TechnologySpec,
};

/// Default working precision for the main types.
pub type Technology64 = technology::TechnologySpec<f64>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type SimulationConfig64 = simulator::SimulationConfig<f64>;
pub type EstimatorConfig64 = identification::EstimatorConfig<f64>;
pub type ExperimentConfig64 = harness::ExperimentConfig<f64>;
