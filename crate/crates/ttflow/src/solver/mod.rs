//! All-at-once Picard iteration with a low-rank flexible GMRES inner solver
//! and mean-based block-triangular preconditioners.

mod gmres;
mod picard;
mod precond;

pub use gmres::{lr_gmres, LowRankVector, LrGmresOptions, LrGmresOutcome};
pub use picard::{picard_solve, PicardReport, PicardStep};
pub use precond::MeanPreconditioner;

use crate::tt::TensorTrain3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error(transparent)]
    Kron(#[from] crate::kron::KronError),
    #[error(transparent)]
    Tt(#[from] crate::tt::TtError),
}

/// Schur-complement approximation used in the block preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecKind {
    Pcd,
    Lsc,
}

/// Stopping and truncation tolerances of the nonlinear solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardConfig {
    /// Nonlinear stopping tolerance relative to the right-hand side.
    pub tol_picard: f64,
    /// Linear (outer GMRES) stopping tolerance, relative to each step's
    /// residual right-hand side.
    pub tol_gmres: f64,
    /// Truncation tolerance inside the linear solver.
    pub eps_gmres: f64,
    /// Truncation tolerance for the accumulated solution iterates.
    pub eps_soln: f64,
    /// Truncation tolerance for the velocity used to build the convection
    /// operator.
    pub eps_conv: f64,
    /// Stopping tolerance of the inner velocity-block solve.
    pub tol_f0c: f64,
    pub maxit_picard: usize,
    pub maxit_gmres: usize,
    pub maxit_inner: usize,
    pub preconditioner: PrecKind,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol_picard: 1e-5,
            tol_gmres: 1e-1,
            eps_gmres: 1e-3,
            eps_soln: 1e-7,
            eps_conv: 1e-3,
            tol_f0c: 1e-1,
            maxit_picard: 20,
            maxit_gmres: 100,
            maxit_inner: 100,
            preconditioner: PrecKind::Lsc,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let in_unit = |v: f64, name: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(SolverError::InvalidConfig(format!(
                    "{name} = {v} must lie in (0, 1)"
                )))
            }
        };
        in_unit(self.tol_picard, "tol_picard")?;
        in_unit(self.tol_gmres, "tol_gmres")?;
        in_unit(self.eps_gmres, "eps_gmres")?;
        in_unit(self.eps_soln, "eps_soln")?;
        in_unit(self.eps_conv, "eps_conv")?;
        in_unit(self.tol_f0c, "tol_f0c")?;
        if self.eps_gmres >= self.tol_gmres {
            return Err(SolverError::InvalidConfig(format!(
                "eps_gmres = {} must be smaller than tol_gmres = {}",
                self.eps_gmres, self.tol_gmres
            )));
        }
        Ok(())
    }
}

/// Stacked velocity-pressure iterate. Truncation acts on the two tensor
/// trains separately; inner products and norms add blockwise.
#[derive(Debug, Clone)]
pub struct TtPair {
    pub u: TensorTrain3,
    pub p: TensorTrain3,
}

impl TtPair {
    pub fn new(u: TensorTrain3, p: TensorTrain3) -> Self {
        Self { u, p }
    }

    pub fn zeros(dims_u: (usize, usize, usize), dims_p: (usize, usize, usize)) -> Self {
        Self {
            u: TensorTrain3::zeros(dims_u.0, dims_u.1, dims_u.2),
            p: TensorTrain3::zeros(dims_p.0, dims_p.1, dims_p.2),
        }
    }
}

impl LowRankVector for TensorTrain3 {
    fn axpy(&self, s: f64, other: &Self) -> Self {
        self.add(&other.scale(s)).expect("mode sizes agree")
    }

    fn scale(&self, s: f64) -> Self {
        TensorTrain3::scale(self, s)
    }

    fn dot(&self, other: &Self) -> f64 {
        TensorTrain3::dot(self, other).expect("mode sizes agree")
    }

    fn norm(&self) -> f64 {
        TensorTrain3::norm(self)
    }

    fn truncate(&self, eps: f64) -> Self {
        self.round(eps)
    }

    fn max_rank(&self) -> usize {
        let (k1, k2) = self.ranks();
        k1.max(k2)
    }
}

impl LowRankVector for TtPair {
    fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            u: self.u.axpy(s, &other.u),
            p: self.p.axpy(s, &other.p),
        }
    }

    fn scale(&self, s: f64) -> Self {
        Self {
            u: self.u.scale(s),
            p: self.p.scale(s),
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        LowRankVector::dot(&self.u, &other.u) + LowRankVector::dot(&self.p, &other.p)
    }

    fn norm(&self) -> f64 {
        LowRankVector::dot(self, self).max(0.0).sqrt()
    }

    fn truncate(&self, eps: f64) -> Self {
        Self {
            u: self.u.round(eps),
            p: self.p.round(eps),
        }
    }

    fn max_rank(&self) -> usize {
        LowRankVector::max_rank(&self.u).max(LowRankVector::max_rank(&self.p))
    }
}
