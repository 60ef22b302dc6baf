//! Finite-volume simulator and estimate auditor for a chemotaxis
//! Navier-Stokes system with porous-medium diffusion and tensor-valued
//! (rotational) sensitivity.
//!
//! The solver advances the regularized coupled system for the cell density,
//! the consumed chemical signal, and the incompressible fluid velocity on a
//! MAC-staggered box grid, and the diagnostics stack measures every
//! functional and dissipation budget whose boundedness underpins the global
//! existence theory, turning the a-priori estimates into runtime checks.

pub mod config;
pub mod convection;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod grid;
pub mod model;
pub mod ops;
pub mod regularization;
pub mod spectral;
pub mod stepper;
pub mod stokes;

pub use diagnostics::{audit_bounds, energy, AuditReport, FunctionalSeries};
pub use error::{Error, Result};
pub use grid::{face_to_center, Grid, ScalarField, VectorField};
pub use model::{
    eval_sensitivity, theorem_exponents, validate_params, ExponentTable, InitialData,
    ModelParams, PotentialSpec, SensitivityFamily, SensitivitySpec, ValidationReport,
};
pub use regularization::{chemotactic_flux, d_eps, f_eps, rho_eps, CutoffField};
pub use stepper::{RunOptions, RunOutcome, State, StepReport, Stepper};
pub use stokes::{PoissonSolver, StokesSolver, StokesState};
