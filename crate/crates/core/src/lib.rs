//! Pseudo-spectral solver and verification harness for the compressible
//! Navier-Stokes-Korteweg system with density-dependent viscosity on the
//! periodic unit torus.
//!
//! The crate is organized bottom-up:
//!
//! - [`fields`]: grids, fields and Fourier calculus.
//! - [`model`]: parameters, states and constitutive terms.
//! - [`solver`]: right-hand sides and RK4 time integration.
//! - [`functionals`]: energies, dissipation and relative entropy.
//! - [`oracles`]: closed-form solutions and manufactured sources.
//! - [`experiments`]: stability, Mach-number and convergence studies.
//! - [`io`]: configuration, CSV and snapshot formats.

pub mod error;
pub mod experiments;
pub mod fields;
pub mod functionals;
pub mod io;
pub mod model;
pub mod oracles;
pub mod solver;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use fields::{GridSpec, ScalarField, TensorField, VectorField};
pub use functionals::{DiagnosticsRecord, ReferenceState};
pub use model::{AugmentedState, FluidParams, ModelKind, PrimitiveState};
pub use solver::{StepControl, Trajectory};
