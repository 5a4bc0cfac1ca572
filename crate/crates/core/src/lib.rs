//! Critical-threshold toolkit for 1D pressureless damped Euler-Poisson
//! systems with a spatially varying background, with and without nonlocal
//! alignment forcing.
//!
//! The crate is organized around the analysis pipeline:
//!
//! * [`scenario`] — problem instances: periodic profiles on the torus,
//!   alignment kernels, quadrature, and validity checks.
//! * [`thresholds`] — the root functions and the analytic sub/supercritical
//!   classifiers.
//! * [`phase`] — phase-plane objects for the transformed linear systems:
//!   closed-form solutions, separatrices, invariant regions, blow-up time
//!   bounds, direction fields.
//! * [`charode`] — characteristic-path ODE right-hand sides, the RK4
//!   integrator with blow-up detection, and the comparison-lemma harnesses.
//! * [`simulate`] — Lagrangian ensemble runs, a priori bound monitoring, and
//!   bisection sweeps that bracket the empirical critical threshold.
//! * [`verify`] — the self-verification suites.

pub mod charode;
pub mod error;
pub mod phase;
pub mod scenario;
pub mod simulate;
pub mod thresholds;
pub mod verify;

pub use error::{Error, Result};
pub use scenario::{Kernel, PeriodicProfile, ProfileFamily, Scenario};
pub use thresholds::{RootPair, ThresholdVerdict, Verdict};

/// Toolkit version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
