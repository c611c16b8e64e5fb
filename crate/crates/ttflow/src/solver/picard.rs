//! Inexact Picard iteration on the all-at-once system.
//!
//! The initial iterate solves the Stokes limit (no convection). Every
//! nonlinear step then solves the correction equation
//! `L(u~) [du; dp] = r` with the low-rank GMRES method, where the
//! convection block is built from a strongly truncated copy `u~` of the
//! current velocity, the linear solve stops at a loose relative tolerance,
//! and the updated solution is recompressed. The nonlinear residual is
//! always recomputed from the original (not convection-truncated) iterate
//! and never taken from the linear solver's recurrence.

use super::gmres::{lr_gmres, LowRankVector, LrGmresOptions};
use super::precond::MeanPreconditioner;
use super::{PicardConfig, SolverError, TtPair};
use crate::problem::DiscreteProblem;
use crate::tt::TensorTrain3;
use std::time::Instant;

/// Per-step record: residual before the step's solve is not stored; the
/// `residual` field is the nonlinear residual after the update.
#[derive(Debug, Clone)]
pub struct PicardStep {
    pub step: usize,
    pub residual: f64,
    pub gmres_iterations: usize,
    pub inner_iterations: usize,
    pub correction_ranks_u: (usize, usize),
    pub correction_ranks_p: (usize, usize),
    pub solution_ranks_u: (usize, usize),
    pub solution_ranks_p: (usize, usize),
    pub convection_ranks: (usize, usize),
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub steps: Vec<PicardStep>,
    pub converged: bool,
    pub rhs_norm: f64,
    pub final_residual: f64,
    pub total_gmres_iterations: usize,
    pub total_inner_iterations: usize,
    pub solve_seconds: f64,
}

impl PicardReport {
    /// Number of nonlinear correction steps (the Stokes initialization is
    /// step 0 and not counted).
    pub fn picard_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.step > 0).count()
    }
}

/// Budget factor for the absolute recompression used while accumulating
/// nonlinear residuals: small enough to resolve residuals at the stopping
/// tolerance, coarse enough to keep ranks near solution level.
const RESIDUAL_BUDGET: f64 = 0.05;

/// The residual needs only enough absolute accuracy to be meaningful
/// relative to its own size and to certify the stopping test: a fraction
/// of the previous residual, floored at the stopping threshold.
fn residual_budget(tol_picard: f64, f_norm: f64, prev_residual: f64) -> f64 {
    RESIDUAL_BUDGET * (tol_picard * f_norm).max(0.1 * prev_residual)
}

pub fn picard_solve(
    problem: &DiscreteProblem,
    cfg: &PicardConfig,
) -> Result<(TensorTrain3, TensorTrain3, PicardReport), SolverError> {
    cfg.validate()?;
    let started = Instant::now();
    let f = &problem.rhs;
    let f_norm = f.norm();
    let dims_u = problem.dims_u();
    let dims_p = problem.dims_p();

    if f_norm == 0.0 {
        // Degenerate problem: zero data means the zero solution.
        let report = PicardReport {
            steps: Vec::new(),
            converged: true,
            rhs_norm: 0.0,
            final_residual: 0.0,
            total_gmres_iterations: 0,
            total_inner_iterations: 0,
            solve_seconds: started.elapsed().as_secs_f64(),
        };
        return Ok((
            TensorTrain3::zeros(dims_u.0, dims_u.1, dims_u.2),
            TensorTrain3::zeros(dims_p.0, dims_p.1, dims_p.2),
            report,
        ));
    }

    let gmres_opts = LrGmresOptions {
        tol: cfg.tol_gmres,
        eps: cfg.eps_gmres,
        maxit: cfg.maxit_gmres,
    };

    let mut steps = Vec::new();
    let mut total_gmres = 0;
    let mut total_inner = 0;

    // Stokes initialization: convection switched off entirely.
    let step_started = Instant::now();
    let conv0 = problem.conv_none();
    let stokes_op = problem.linear_ff.clone();
    let prec0 = MeanPreconditioner::build(problem, &conv0, cfg)?;
    let (z0, out0) = lr_gmres(
        |x: &TtPair| problem.apply_saddle(&stokes_op, x, cfg.eps_gmres).expect("dims"),
        f,
        |v| prec0.apply(v),
        &gmres_opts,
    );
    total_gmres += out0.iterations;
    total_inner += prec0.inner_iterations();
    let mut u = z0.u.round(cfg.eps_soln);
    let mut p = z0.p.round(cfg.eps_soln);

    // Nonlinear residual of the Stokes iterate, with the convection built
    // from the full, untruncated velocity.
    let u_full = problem.full_velocity(&u);
    let conv_res = problem
        .convection_from_full(&u_full, u.ranks(), false)
        .map_err(problem_err)?;
    let mut delta_abs = residual_budget(cfg.tol_picard, f_norm, f_norm);
    let mut r = problem
        .residual(&u, &p, &conv_res, delta_abs, cfg.eps_gmres)
        .map_err(problem_err)?;
    let mut r_norm = r.norm();
    steps.push(PicardStep {
        step: 0,
        residual: r_norm,
        gmres_iterations: out0.iterations,
        inner_iterations: prec0.inner_iterations(),
        correction_ranks_u: z0.u.ranks(),
        correction_ranks_p: z0.p.ranks(),
        solution_ranks_u: u.ranks(),
        solution_ranks_p: p.ranks(),
        convection_ranks: (1, 1),
        seconds: step_started.elapsed().as_secs_f64(),
    });

    let mut i = 0;
    while r_norm > cfg.tol_picard * f_norm && i < cfg.maxit_picard {
        i += 1;
        let step_started = Instant::now();

        // System operator and preconditioner from the truncated velocity.
        let conv = problem
            .convection_package(&u, cfg.eps_conv, true)
            .map_err(problem_err)?;
        let f_op = problem.linear_ff.concat(&conv.ff)?;
        let prec = MeanPreconditioner::build(problem, &conv, cfg)?;
        let (delta, out) = lr_gmres(
            |x: &TtPair| problem.apply_saddle(&f_op, x, cfg.eps_gmres).expect("dims"),
            &r,
            |v| prec.apply(v),
            &gmres_opts,
        );
        total_gmres += out.iterations;
        total_inner += prec.inner_iterations();

        u = u.add(&delta.u)?.round(cfg.eps_soln);
        p = p.add(&delta.p)?.round(cfg.eps_soln);

        let u_full = problem.full_velocity(&u);
        let conv_res = problem
            .convection_from_full(&u_full, u.ranks(), false)
            .map_err(problem_err)?;
        delta_abs = residual_budget(cfg.tol_picard, f_norm, r_norm);
        r = problem
            .residual(&u, &p, &conv_res, delta_abs, cfg.eps_gmres)
            .map_err(problem_err)?;
        r_norm = r.norm();

        steps.push(PicardStep {
            step: i,
            residual: r_norm,
            gmres_iterations: out.iterations,
            inner_iterations: prec.inner_iterations(),
            correction_ranks_u: delta.u.ranks(),
            correction_ranks_p: delta.p.ranks(),
            solution_ranks_u: u.ranks(),
            solution_ranks_p: p.ranks(),
            convection_ranks: conv.ranks,
            seconds: step_started.elapsed().as_secs_f64(),
        });
    }

    let report = PicardReport {
        converged: r_norm <= cfg.tol_picard * f_norm,
        rhs_norm: f_norm,
        final_residual: r_norm,
        total_gmres_iterations: total_gmres,
        total_inner_iterations: total_inner,
        solve_seconds: started.elapsed().as_secs_f64(),
        steps,
    };
    Ok((u, p, report))
}

fn problem_err(e: crate::problem::ProblemError) -> SolverError {
    match e {
        crate::problem::ProblemError::Kron(k) => SolverError::Kron(k),
        other => SolverError::InvalidConfig(other.to_string()),
    }
}
