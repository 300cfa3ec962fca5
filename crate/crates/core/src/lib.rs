//! Decoupling-field solver for fully coupled forward-backward SDEs with jumps.
//!
//! The forward state `X` is an `n`-dimensional jump diffusion whose coefficients
//! depend on the backward triple `(Y, Z, Z̃)`. The coupling is removed through the
//! decoupling field `θ(t, x)` with `Y_t = θ(t, X_t)`, which solves a nonlocal
//! quasilinear parabolic PIDE. The crate
//!
//! * assembles and marches that PIDE with an IMEX finite-difference scheme ([`solver`]),
//! * simulates the decoupled forward jump SDE ([`paths`]),
//! * rebuilds `(Y, Z, Z̃)` along paths and checks the backward equation and the
//!   jump Itô identity ([`pipeline`]),
//! * ships a catalog of benchmark problems and the CLI plumbing ([`catalog`], [`io`]).
//!
//! Every numerical type is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision case.

pub mod catalog;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nonlocal;
pub mod paths;
pub mod pipeline;
pub mod problem;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use nonlocal::{
    assemble_coefficients, eval_nonlocal, eval_nonlocal_reversed, integrate_over_nu, Grid,
    GridFunction, NonlocalField, PdeCoefficients,
};
pub use paths::{
    sample_poisson_measure, simulate_ensemble, simulate_forward, steps_for, JumpEvent, JumpPath,
    RngStream, Segment,
};
pub use pipeline::{
    bsde_residual, estimate_class_s_norm, ito_residual, link_processes, path_residual, run_ensemble,
    AnalyticTestFunction, ClassSAccumulator, Ensemble, FieldComponent, LinkedProcesses, ResidualReport,
    SegmentLink, TestFunction,
};
pub use problem::{
    check_ellipticity, check_growth, total_mass, AssumptionEntry, AtomTable, AssumptionReport,
    GrowthEnvelopes, GrowthSample, LevyMeasure, ProblemSpec, ProblemSpecBuilder,
};
pub use scalar::Scalar;
pub use solver::{
    check_max_principle, gradient_matrix, solve_final_value, spatial_gradient, step_imex,
    BoundaryMode, Cutoff, Diagnostics, LinearSolver, MaxPrincipleConstants, MaxPrincipleOutcome,
    SolutionField, SolverConfig, TimeOrientation,
};

pub type Matrix64 = Matrix<f64>;
pub type LevyMeasure64 = LevyMeasure<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type Grid64 = Grid<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolutionField64 = SolutionField<f64>;
pub type Diagnostics64 = Diagnostics<f64>;
pub type JumpPath64 = JumpPath<f64>;
pub type LinkedProcesses64<'a> = LinkedProcesses<'a, f64>;
pub type ResidualReport64 = ResidualReport<f64>;

pub type Matrix32 = Matrix<f32>;
pub type ProblemSpec32 = ProblemSpec<f32>;
pub type SolutionField32 = SolutionField<f32>;
