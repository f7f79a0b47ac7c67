//! Pseudospectral laboratory for advection-diffusion on the torus: linear
//! propagators and dissipation times, Keller-Segel and ignition
//! reaction-diffusion with drift, and effective diffusivity of periodic flows.

pub mod advection;
pub mod diffusivity;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod integrator;
pub mod keller_segel;
pub mod math;
pub mod nonlinear;
pub mod profile;
pub mod reaction;
pub mod snapshot;

pub use advection::{
    bound_6_3, dissipation_time, evolve, l1_to_linf_norm, propagator_norm_l2, DissipationEstimate,
    DissipationSearch,
};
pub use error::{Error, Result};
pub use field::{DivergenceCertificate, SpectralField, VectorFieldOnGrid};
pub use flow::{FlowFamily, FlowSpec, VelocityField};
pub use grid::Grid;
pub use integrator::SolverConfig;
pub use nonlinear::{Diagnostics, NonlinearHypotheses, NonlinearTerm, RunOptions, Trajectory};
pub use snapshot::Snapshot;

/// Crate version recorded in experiment artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
