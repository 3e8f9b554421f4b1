//! Simulation and drift inference for Volterra Ornstein-Uhlenbeck processes
//!
//! ```text
//! X_t = x₀ + ∫₀ᵗ K(t−s)(b + βX_s) ds + ∫₀ᵗ K(t−s) σ dB_s,
//! ```
//!
//! with completely monotone kernels K that may blow up at the origin. The
//! crate provides the kernel calculus (resolvents of the first and second
//! kind, stationary moments), several path samplers, drift estimators for
//! (b, β) from discrete observations, and reproducible experiment drivers.

pub mod acceptance;
pub mod drift_estimators;
pub mod error;
pub mod experiment_harness;
pub mod kernel_bank;
pub mod path_simulator;
pub mod report_store;
pub(crate) mod quad;
pub mod rng;
pub mod stats;
pub mod volterra_calculus;

pub use error::{Result, VouError};
