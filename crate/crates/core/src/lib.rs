//! Pseudo-spectral solver for the generalized Maxwell–Chern–Simons vortex
//! equation on a flat square torus.
//!
//! The unknown `u` lives on a periodic grid; the vortex sources are absorbed
//! into a fixed singular background `σ` so that `e^{σ+u}` vanishes exactly at
//! the prescribed points. The crate provides the spectral operator calculus,
//! the energy functional and its gradient, an explicit subsolution, and the
//! solvers that produce a constrained local minimum and a mountain-pass
//! critical point.

pub mod error;
pub mod functional;
pub mod grid;
pub mod io;
pub mod model;
pub mod operators;
pub mod singular;
pub mod solvers;
pub mod subsolution;
pub mod system;

pub use error::{Result, VortexError};
pub use functional::{EnergyBreakdown, Problem};
pub use grid::{Field, Grid, Norms, Spectrum};
pub use model::{AssumptionClass, AssumptionReport, Nonlinearity, VortexModel};
pub use singular::{SingularBackground, Vortex, VortexSet};
pub use subsolution::SubsolutionResult;
pub use solvers::{SolveKind, SolveOptions, SolveOutcome};
