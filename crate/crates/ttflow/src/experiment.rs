//! Benchmark driver: single runs, the dense verification harness and
//! parameter sweeps, all emitting machine-readable CSV artifacts.

use crate::config::ExperimentConfig;
use crate::io::{write_matrix_market, write_tt3, CsvWriter};
use crate::oracle;
use crate::problem::DiscreteProblem;
use crate::solver::{picard_solve, PicardReport};
use crate::tt::TensorTrain3;
use ndarray::Array1;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Problem(#[from] crate::problem::ProblemError),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver did not converge (final residual {final_residual:.3e}, {steps} steps)")]
    NotConverged { final_residual: f64, steps: usize },
}

/// Moments of the stochastic solution at the final time plus storage
/// accounting for the low-rank representation.
#[derive(Debug, Clone)]
pub struct SolutionStatistics {
    pub mean_velocity: Array1<f64>,
    pub variance_velocity: Array1<f64>,
    pub mean_pressure: Array1<f64>,
    pub variance_pressure: Array1<f64>,
    pub ranks_u: (usize, usize),
    pub ranks_p: (usize, usize),
    pub storage_ratio_u: f64,
    pub storage_ratio_p: f64,
}

/// Ratio of tensor-train storage to dense storage for given mode sizes and
/// ranks: `(n1 k1 + k1 n2 k2 + k2 n3) / (n1 n2 n3)`.
pub fn storage_ratio(dims: (usize, usize, usize), ranks: (usize, usize)) -> f64 {
    let (n1, n2, n3) = dims;
    let (k1, k2) = ranks;
    (n1 * k1 + k1 * n2 * k2 + k2 * n3) as f64 / (n1 * n2 * n3) as f64
}

pub fn statistics(
    problem: &DiscreteProblem,
    u: &TensorTrain3,
    p: &TensorTrain3,
) -> SolutionStatistics {
    let n_xi = problem.gpc.n_xi();
    let k_final = problem.n_t - 1;

    // Mean: the first stochastic coefficient, with boundary data added for
    // the velocity. Variance: sum of squares of the remaining coefficients
    // (the basis is orthonormal); the boundary is deterministic.
    let u_full = problem.full_velocity(u);
    let mean_velocity = DiscreteProblem::slice_field(&u_full, k_final, 0);
    let mut variance_velocity = Array1::zeros(mean_velocity.len());
    for s in 1..n_xi {
        let f = DiscreteProblem::slice_field(&u_full, k_final, s);
        variance_velocity += &f.mapv(|v| v * v);
    }
    let mean_pressure = DiscreteProblem::slice_field(p, k_final, 0);
    let mut variance_pressure = Array1::zeros(mean_pressure.len());
    for s in 1..n_xi {
        let f = DiscreteProblem::slice_field(p, k_final, s);
        variance_pressure += &f.mapv(|v| v * v);
    }
    SolutionStatistics {
        mean_velocity,
        variance_velocity,
        mean_pressure,
        variance_pressure,
        ranks_u: u.ranks(),
        ranks_p: p.ranks(),
        storage_ratio_u: storage_ratio(u.mode_sizes(), u.ranks()),
        storage_ratio_p: storage_ratio(p.mode_sizes(), p.ranks()),
    }
}

pub struct RunArtifacts {
    pub report: PicardReport,
    pub stats: SolutionStatistics,
    pub setup_seconds: f64,
    pub u: TensorTrain3,
    pub p: TensorTrain3,
}

/// Builds the problem, runs the Picard solver and writes `report.csv`,
/// `ranks.csv`, `stats.csv`, the nodal moment fields and the `.tt3`
/// solution dumps into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts, ExperimentError> {
    cfg.validate()?;
    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir)?;

    let setup_started = Instant::now();
    let problem = DiscreteProblem::build(cfg.problem_params())?;
    let setup_seconds = setup_started.elapsed().as_secs_f64();

    println!(
        "n_t={}, n_xi={}, n_u={}, n_p={}, total={}",
        problem.n_t,
        problem.gpc.n_xi(),
        problem.spaces.n_u(),
        problem.spaces.n_p(),
        problem.total_dof()
    );

    let picard = cfg.picard_config();
    let (u, p, report) = picard_solve(&problem, &picard)?;
    for s in &report.steps {
        println!(
            "step {:2}  residual {:.6e}  gmres {:3}  ranks u ({}, {})  p ({}, {})  [{:.2}s]",
            s.step,
            s.residual,
            s.gmres_iterations,
            s.solution_ranks_u.0,
            s.solution_ranks_u.1,
            s.solution_ranks_p.0,
            s.solution_ranks_p.1,
            s.seconds
        );
    }

    let stats = statistics(&problem, &u, &p);
    write_report_csv(&out_dir.join("report.csv"), &report)?;
    write_ranks_csv(&out_dir.join("ranks.csv"), &report)?;
    write_stats_csv(
        &out_dir.join("stats.csv"),
        &problem,
        &report,
        &stats,
        setup_seconds,
    )?;
    write_fields_csv(out_dir, &problem, &stats)?;
    write_tt3(&out_dir.join("u.tt3"), &u)?;
    write_tt3(&out_dir.join("p.tt3"), &p)?;
    if cfg.output.dump_matrices {
        dump_matrices(out_dir, &problem)?;
    }

    if !report.converged {
        return Err(ExperimentError::NotConverged {
            final_residual: report.final_residual,
            steps: report.picard_steps(),
        });
    }
    Ok(RunArtifacts {
        report,
        stats,
        setup_seconds,
        u,
        p,
    })
}

#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub dense_vs_sequential: f64,
    pub lowrank_vs_dense: f64,
    pub lowrank_vs_sequential: f64,
    pub total_dof: usize,
}

/// Runs the dense all-at-once solve, sequential time stepping and a tight
/// low-rank solve on the same (small) problem and reports the pairwise
/// relative gaps.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<OracleComparison, ExperimentError> {
    cfg.validate()?;
    let problem = DiscreteProblem::build(cfg.problem_params())?;
    let dense = oracle::dense_all_at_once(&problem, 1e-12, 80)?;
    let seq = oracle::sequential_time_stepping(&problem, 1e-12, 80)?;

    let mut tight = cfg.picard_config();
    tight.tol_picard = 1e-8;
    tight.tol_gmres = 1e-8;
    tight.eps_gmres = 1e-10;
    tight.eps_soln = 1e-10;
    tight.eps_conv = 1e-10;
    tight.tol_f0c = 1e-2;
    tight.maxit_picard = 60;
    tight.maxit_gmres = 300;
    tight.maxit_inner = 300;
    let (u, p, report) = picard_solve(&problem, &tight)?;
    if !report.converged {
        return Err(ExperimentError::NotConverged {
            final_residual: report.final_residual,
            steps: report.picard_steps(),
        });
    }
    let low = oracle::lowrank_as_dense(&u, &p);

    let cmp = OracleComparison {
        dense_vs_sequential: oracle::relative_gap(&dense, &seq),
        lowrank_vs_dense: oracle::relative_gap(&low, &dense),
        lowrank_vs_sequential: oracle::relative_gap(&low, &seq),
        total_dof: problem.total_dof(),
    };

    std::fs::create_dir_all(&cfg.output.dir)?;
    let mut csv = CsvWriter::create(
        &cfg.output.dir.join("oracle.csv"),
        &[
            "total_dof",
            "dense_vs_sequential",
            "lowrank_vs_dense",
            "lowrank_vs_sequential",
        ],
    )?;
    csv.row(&[
        cmp.total_dof.to_string(),
        format!("{:.6e}", cmp.dense_vs_sequential),
        format!("{:.6e}", cmp.lowrank_vs_dense),
        format!("{:.6e}", cmp.lowrank_vs_sequential),
    ])?;
    csv.finish()?;
    Ok(cmp)
}

/// Parameter swept over by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Sigma,
    Nu0,
    H,
    Tau,
    TolGmres,
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigma" => Ok(Self::Sigma),
            "nu0" => Ok(Self::Nu0),
            "h" => Ok(Self::H),
            "tau" => Ok(Self::Tau),
            "tol_gmres" | "tol-gmres" => Ok(Self::TolGmres),
            other => Err(format!(
                "unknown sweep parameter '{other}' (expected sigma, nu0, h, tau or tol_gmres)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub converged: bool,
    pub picard_steps: usize,
    pub total_gmres: usize,
    pub ranks_u: (usize, usize),
    pub ranks_p: (usize, usize),
    pub solve_seconds: f64,
    pub error: Option<String>,
}

/// Applies one sweep value to a configuration. The truncation tolerance of
/// the linear solver follows the stopping tolerance at the standard ratio.
pub fn apply_sweep_value(cfg: &mut ExperimentConfig, param: SweepParam, value: f64) {
    match param {
        SweepParam::Sigma => cfg.problem.sigma = value,
        SweepParam::Nu0 => cfg.problem.nu0 = value,
        SweepParam::H => cfg.problem.h = value,
        SweepParam::Tau => cfg.problem.tau = value,
        SweepParam::TolGmres => {
            cfg.solver.tol_gmres = value;
            cfg.solver.eps_gmres = 1e-2 * value;
        }
    }
}

/// Runs the benchmark once per parameter value. Individual failures are
/// recorded and the sweep continues.
pub fn sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>, ExperimentError> {
    std::fs::create_dir_all(&base.output.dir)?;
    let mut rows = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.output.dir = base.output.dir.join(format!("sweep_{i}"));
        apply_sweep_value(&mut cfg, param, value);
        let row = match run_experiment(&cfg) {
            Ok(art) => SweepRow {
                value,
                converged: art.report.converged,
                picard_steps: art.report.picard_steps(),
                total_gmres: art.report.total_gmres_iterations,
                ranks_u: art.stats.ranks_u,
                ranks_p: art.stats.ranks_p,
                solve_seconds: art.report.solve_seconds,
                error: None,
            },
            Err(e) => SweepRow {
                value,
                converged: false,
                picard_steps: 0,
                total_gmres: 0,
                ranks_u: (0, 0),
                ranks_p: (0, 0),
                solve_seconds: 0.0,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let mut csv = CsvWriter::create(
        &base.output.dir.join("sweep.csv"),
        &[
            "value",
            "converged",
            "picard_steps",
            "total_gmres",
            "u_k1",
            "u_k2",
            "p_k1",
            "p_k2",
            "solve_seconds",
            "error",
        ],
    )?;
    for r in &rows {
        csv.row(&[
            format!("{:e}", r.value),
            r.converged.to_string(),
            r.picard_steps.to_string(),
            r.total_gmres.to_string(),
            r.ranks_u.0.to_string(),
            r.ranks_u.1.to_string(),
            r.ranks_p.0.to_string(),
            r.ranks_p.1.to_string(),
            format!("{:.3}", r.solve_seconds),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    csv.finish()?;
    Ok(rows)
}

fn write_report_csv(path: &Path, report: &PicardReport) -> std::io::Result<()> {
    let mut csv = CsvWriter::create(
        path,
        &[
            "step",
            "residual",
            "gmres_iterations",
            "inner_iterations",
            "du_k1",
            "du_k2",
            "dp_k1",
            "dp_k2",
            "u_k1",
            "u_k2",
            "p_k1",
            "p_k2",
            "conv_k1",
            "conv_k2",
            "seconds",
        ],
    )?;
    for s in &report.steps {
        csv.row(&[
            s.step.to_string(),
            format!("{:.9e}", s.residual),
            s.gmres_iterations.to_string(),
            s.inner_iterations.to_string(),
            s.correction_ranks_u.0.to_string(),
            s.correction_ranks_u.1.to_string(),
            s.correction_ranks_p.0.to_string(),
            s.correction_ranks_p.1.to_string(),
            s.solution_ranks_u.0.to_string(),
            s.solution_ranks_u.1.to_string(),
            s.solution_ranks_p.0.to_string(),
            s.solution_ranks_p.1.to_string(),
            s.convection_ranks.0.to_string(),
            s.convection_ranks.1.to_string(),
            format!("{:.3}", s.seconds),
        ])?;
    }
    csv.finish()
}

fn write_ranks_csv(path: &Path, report: &PicardReport) -> std::io::Result<()> {
    let mut csv = CsvWriter::create(
        path,
        &[
            "step", "u_k1", "u_k2", "p_k1", "p_k2", "du_k1", "du_k2", "dp_k1", "dp_k2",
            "conv_k1", "conv_k2",
        ],
    )?;
    for s in &report.steps {
        csv.row(&[
            s.step.to_string(),
            s.solution_ranks_u.0.to_string(),
            s.solution_ranks_u.1.to_string(),
            s.solution_ranks_p.0.to_string(),
            s.solution_ranks_p.1.to_string(),
            s.correction_ranks_u.0.to_string(),
            s.correction_ranks_u.1.to_string(),
            s.correction_ranks_p.0.to_string(),
            s.correction_ranks_p.1.to_string(),
            s.convection_ranks.0.to_string(),
            s.convection_ranks.1.to_string(),
        ])?;
    }
    csv.finish()
}

fn write_stats_csv(
    path: &Path,
    problem: &DiscreteProblem,
    report: &PicardReport,
    stats: &SolutionStatistics,
    setup_seconds: f64,
) -> std::io::Result<()> {
    let mut csv = CsvWriter::create(
        path,
        &[
            "converged",
            "picard_steps",
            "total_gmres",
            "total_inner",
            "final_residual",
            "rhs_norm",
            "setup_seconds",
            "solve_seconds",
            "u_k1",
            "u_k2",
            "p_k1",
            "p_k2",
            "storage_ratio_u",
            "storage_ratio_p",
            "n_t",
            "n_xi",
            "n_u",
            "n_p",
            "total_dof",
        ],
    )?;
    csv.row(&[
        report.converged.to_string(),
        report.picard_steps().to_string(),
        report.total_gmres_iterations.to_string(),
        report.total_inner_iterations.to_string(),
        format!("{:.9e}", report.final_residual),
        format!("{:.9e}", report.rhs_norm),
        format!("{setup_seconds:.3}"),
        format!("{:.3}", report.solve_seconds),
        stats.ranks_u.0.to_string(),
        stats.ranks_u.1.to_string(),
        stats.ranks_p.0.to_string(),
        stats.ranks_p.1.to_string(),
        format!("{:.6e}", stats.storage_ratio_u),
        format!("{:.6e}", stats.storage_ratio_p),
        problem.n_t.to_string(),
        problem.gpc.n_xi().to_string(),
        problem.spaces.n_u().to_string(),
        problem.spaces.n_p().to_string(),
        problem.total_dof().to_string(),
    ])?;
    csv.finish()
}

fn write_fields_csv(
    dir: &Path,
    problem: &DiscreteProblem,
    stats: &SolutionStatistics,
) -> std::io::Result<()> {
    let mesh = &problem.spaces.mesh;
    let n_q2 = mesh.n_q2();
    let mut csv = CsvWriter::create(
        &dir.join("velocity_stats.csv"),
        &["node", "x", "y", "mean_ux", "mean_uy", "variance"],
    )?;
    for node in 0..n_q2 {
        let p = mesh.q2_points[node];
        let var = stats.variance_velocity[node] + stats.variance_velocity[node + n_q2];
        csv.row(&[
            node.to_string(),
            format!("{:.6}", p[0]),
            format!("{:.6}", p[1]),
            format!("{:.9e}", stats.mean_velocity[node]),
            format!("{:.9e}", stats.mean_velocity[node + n_q2]),
            format!("{var:.9e}"),
        ])?;
    }
    csv.finish()?;
    let mut csv = CsvWriter::create(
        &dir.join("pressure_stats.csv"),
        &["node", "x", "y", "mean_p", "variance"],
    )?;
    for node in 0..mesh.n_q1() {
        let p = mesh.q1_points[node];
        csv.row(&[
            node.to_string(),
            format!("{:.6}", p[0]),
            format!("{:.6}", p[1]),
            format!("{:.9e}", stats.mean_pressure[node]),
            format!("{:.9e}", stats.variance_pressure[node]),
        ])?;
    }
    csv.finish()
}

fn dump_matrices(dir: &Path, problem: &DiscreteProblem) -> std::io::Result<()> {
    let mm = dir.join("matrices");
    std::fs::create_dir_all(&mm)?;
    for (l, g) in problem.tp.g.iter().enumerate() {
        write_matrix_market(&mm.join(format!("g{l}.mtx")), g)?;
    }
    for (l, h) in problem.tp.h.iter().enumerate() {
        write_matrix_market(&mm.join(format!("h{l}.mtx")), h)?;
    }
    for (l, pair) in problem.kl.eigenpairs.iter().enumerate() {
        crate::io::write_vector_market(&mm.join(format!("kl_mode_{l}.mtx")), &pair.mode)?;
    }
    write_matrix_market(&mm.join("mass_v.mtx"), &problem.spaces.mass_v_ff)?;
    write_matrix_market(&mm.join("b.mtx"), &problem.spaces.b_f)?;
    write_matrix_market(&mm.join("pressure_poisson.mtx"), &problem.spaces.bmb)?;
    Ok(())
}
