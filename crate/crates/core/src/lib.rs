//! Numerical laboratory for faster-than-light signaling in two-particle
//! nonlinear Schroedinger equations of Doebner-Goldin type.
//!
//! Two runs share one initial state; one of them switches on a potential that
//! acts on particle 2 only. Any difference in the position distribution of
//! particle 1 is a signal. The [`signaling`] module extracts the leading
//! Taylor order of that difference and compares it with closed-form
//! predictions from [`oracle`], which only use t = 0 data.

pub mod error;
pub mod evolution;
pub mod grid;
pub mod hydro;
pub mod observables;
pub mod oracle;
pub mod signaling;
pub mod state;
pub mod validate;

pub use error::{Error, Result};
pub use grid::{ComplexField, DiffBackend, Field, Grid, RealField, VectorField};
pub use hydro::{Classification, DGCoefficients, Functional};
pub use observables::{TaylorFit, TimeSeries};
pub use oracle::{EssPrediction, OracleReport};
pub use state::{DensitySpec, InitialState, PhaseSpec};
