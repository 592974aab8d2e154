//! Event-based particle filtering for remote state estimation.
//!
//! A sensor only transmits a measurement when it leaves a trigger set `H_k`;
//! silence is itself a measurement (`y_k ∈ H_k`). This crate provides:
//!
//! - [`gaussian`]: conditioning, products, box integrals and mixtures of Gaussians.
//! - [`model`]: additive-Gaussian state-space models, including the classic
//!   multimodal benchmark and a linear-Gaussian test system.
//! - [`trigger`]: send-on-delta and innovation-based trigger sets.
//! - [`likelihood`]: analytic, Gaussian-mixture and Monte Carlo evaluators of
//!   the switching event/no-event likelihood.
//! - [`filter`]: bootstrap and approximate fully adapted auxiliary particle filters.
//! - [`horizon`]: trigger-probability bookkeeping and the choice of how many
//!   trigger bounds to precompute at each event.
//! - [`sim`]: the closed-loop sensor/observer simulation.
//! - [`oracle`]: brute-force references (naive Monte Carlo, quadrature,
//!   exhaustive scans, Kalman filter) used to check the above.
//! - [`experiment`]: configuration parsing and batch sweeps behind the CLI.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod filter;
pub mod gaussian;
pub mod horizon;
pub mod likelihood;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod trigger;

pub use error::{Error, Result};
pub use filter::{FilterKind, ParticleSet};
pub use gaussian::{BoxSet, Gaussian, GaussianMixture, JointGaussian};
pub use likelihood::{LikelihoodEvaluator, LikelihoodKind};
pub use model::{BenchmarkSystem, LinearGaussian, StateSpaceModel};
pub use trigger::{HybridMeasurement, TriggerKind, TriggerRule};
