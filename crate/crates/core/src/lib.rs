//! Simulation toolkit for one-dimensional CEV-like SDEs
//!
//! ```text
//! dX_t = b(X_t) dt + sigma |X_t|^alpha dW_t,   1/2 <= alpha < 1
//! ```
//!
//! The crate provides the symmetrized (SMS) and projected (PMS) Milstein
//! schemes, the symmetrized Euler scheme (SES) and the drift-implicit
//! square-root scheme (AIS) for the CIR case, a counter-based Brownian path
//! generator with exact coarsening, strong-error ladders with log-log
//! regression, one-step diagnostics, and a multilevel Monte Carlo
//! zero-coupon-bond experiment checked against the closed-form CIR price.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`). The `*64`
//! aliases below fix the scalar to `f64`, which is what the CLI uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiments;
pub mod mlmc;
pub mod model;
pub mod paths;
pub mod real;
pub mod rng;
pub mod schemes;
pub mod stats;

pub use real::Real;

pub type CevModel64 = model::CevModel<f64>;
pub type DriftSpec64 = model::DriftSpec<f64>;
pub type DerivedConstants64 = model::DerivedConstants<f64>;
pub type GridSpec64 = paths::GridSpec<f64>;
pub type BrownianGrid64 = paths::BrownianGrid<f64>;
pub type SchemePath64 = schemes::SchemePath<f64>;
pub type StrongErrorReport64 = experiments::StrongErrorReport<f64>;
pub type DiagnosticsReport64 = experiments::DiagnosticsReport<f64>;
pub type ZcbModel64 = mlmc::ZcbModel<f64>;
pub type MlmcResult64 = mlmc::MlmcResult<f64>;

pub type CevModel32 = model::CevModel<f32>;
pub type BrownianGrid32 = paths::BrownianGrid<f32>;
