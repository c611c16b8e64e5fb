//! Low-rank solver for the unsteady incompressible Navier-Stokes equations
//! with a stochastic viscosity field.
//!
//! The discrete problem couples three directions: time (backward Euler on a
//! uniform grid), a polynomial-chaos expansion in the random variables of a
//! Karhunen-Loeve viscosity model, and a Q2-Q1 Taylor-Hood discretization in
//! space. All time steps are stacked into a single space-time-stochastic
//! system whose blocks are sums of triple Kronecker products. The nonlinear
//! system is linearized by Picard iteration and each linear solve runs a
//! flexible GMRES method whose iterates are kept in three-mode tensor-train
//! form, compressed after every operation.
//!
//! Module map:
//!
//! - [`tt`] - three-mode tensor trains: construction, rounding, arithmetic
//! - [`kron`] - Kronecker-sum operators and their action on tensor trains
//! - [`gpc`] - Legendre polynomial chaos basis and triple-product matrices
//! - [`kl`] - Karhunen-Loeve expansion of the viscosity field
//! - [`fem`] - meshes, Taylor-Hood matrices, boundary data
//! - [`solver`] - Picard iteration, low-rank GMRES, block preconditioners
//! - [`problem`] - assembly of the full discrete problem
//! - [`dense`] - dense reference solvers used as verification oracles
//! - [`experiment`] - benchmark runner, oracle harness, parameter sweeps
//!
//! The `ttflow` binary exposes `run`, `oracle` and `sweep` subcommands; the
//! `examples/` directory has one runnable example per capability.

pub mod config;
pub mod dense;
pub mod experiment;
pub mod fem;
pub mod gpc;
pub mod io;
pub mod kl;
pub mod kron;
pub mod oracle;
pub mod linalg;
pub mod problem;
pub mod solver;
pub mod tt;

pub use config::ExperimentConfig;
pub use kron::{Factor, KronSumOperator, KronTerm};
pub use solver::{PicardConfig, PicardReport, PrecKind};
pub use tt::{FullTensor3, TensorTrain3};
