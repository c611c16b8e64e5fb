//! Command-line benchmark runner. The heavy lifting lives in the library;
//! this binary only parses flags, merges them into a configuration and
//! reports results.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use ttflow::config::ExperimentConfig;
use ttflow::experiment::{self, ExperimentError, SweepParam};

#[derive(Parser)]
#[command(name = "ttflow", about = "Low-rank all-at-once solver for unsteady stochastic flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOverrides {
    /// TOML configuration file; defaults target the step benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    nu0: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Preconditioner kind: pcd or lsc.
    #[arg(long)]
    prec: Option<String>,
    #[arg(long = "tol-gmres")]
    tol_gmres: Option<f64>,
    /// Output directory for CSV and solution artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Export assembled matrices and eigenpairs as MatrixMarket files.
    #[arg(long)]
    dump_matrices: bool,
    /// Domain kind: step or channel.
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write its report artifacts.
    Run(CommonOverrides),
    /// Cross-check dense all-at-once, sequential and low-rank solves on a
    /// small instance.
    Oracle(CommonOverrides),
    /// Run the benchmark over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: CommonOverrides,
        /// Parameter to vary: sigma, nu0, h, tau or tol_gmres.
        #[arg(long)]
        param: String,
        /// Comma-separated list of values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn merge(cfg: &mut ExperimentConfig, ov: &CommonOverrides) -> anyhow::Result<()> {
    if let Some(v) = ov.sigma {
        cfg.problem.sigma = v;
    }
    if let Some(v) = ov.nu0 {
        cfg.problem.nu0 = v;
    }
    if let Some(v) = ov.h {
        cfg.problem.h = v;
    }
    if let Some(v) = ov.tau {
        cfg.problem.tau = v;
    }
    if let Some(p) = &ov.prec {
        cfg.solver.preconditioner = match p.as_str() {
            "pcd" => ttflow::PrecKind::Pcd,
            "lsc" => ttflow::PrecKind::Lsc,
            other => anyhow::bail!("unknown preconditioner '{other}' (expected pcd or lsc)"),
        };
    }
    if let Some(v) = ov.tol_gmres {
        cfg.solver.tol_gmres = v;
        cfg.solver.eps_gmres = 1e-2 * v;
    }
    if let Some(dir) = &ov.out {
        cfg.output.dir = dir.clone();
    }
    if ov.dump_matrices {
        cfg.output.dump_matrices = true;
    }
    if let Some(d) = &ov.domain {
        cfg.problem.domain = match d.as_str() {
            "step" => ttflow::fem::DomainKind::Step,
            "channel" => ttflow::fem::DomainKind::Channel,
            other => anyhow::bail!("unknown domain '{other}' (expected step or channel)"),
        };
    }
    Ok(())
}

fn load_config(ov: &CommonOverrides) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &ov.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    merge(&mut cfg, ov)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Exit codes: 0 success, 2 solver nonconvergence, 3 invalid configuration.
fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            classify_exit(&e)
        }
    };
    std::process::exit(code);
}

fn classify_exit(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<ExperimentError>() {
            return match err {
                ExperimentError::NotConverged { .. } => 2,
                ExperimentError::Config(_) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<ttflow::config::ConfigError>().is_some() {
            return 3;
        }
    }
    1
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(ov) => {
            let cfg = load_config(&ov)?;
            let art = experiment::run_experiment(&cfg)?;
            println!(
                "converged in {} Picard steps, {} GMRES iterations, {:.2}s solve ({:.2}s setup)",
                art.report.picard_steps(),
                art.report.total_gmres_iterations,
                art.report.solve_seconds,
                art.setup_seconds
            );
            println!(
                "final ranks: u ({}, {}), p ({}, {}); storage ratio u {:.3}%",
                art.stats.ranks_u.0,
                art.stats.ranks_u.1,
                art.stats.ranks_p.0,
                art.stats.ranks_p.1,
                100.0 * art.stats.storage_ratio_u
            );
            println!("artifacts written to {}", cfg.output.dir.display());
            Ok(())
        }
        Command::Oracle(ov) => {
            let cfg = load_config(&ov)?;
            let cmp = experiment::run_oracle(&cfg)?;
            println!("total dof: {}", cmp.total_dof);
            println!(
                "dense all-at-once vs sequential: {:.3e}",
                cmp.dense_vs_sequential
            );
            println!(
                "low-rank vs dense all-at-once:  {:.3e}",
                cmp.lowrank_vs_dense
            );
            println!(
                "low-rank vs sequential:         {:.3e}",
                cmp.lowrank_vs_sequential
            );
            Ok(())
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = load_config(&common)?;
            let param: SweepParam = param.parse().map_err(anyhow::Error::msg)?;
            if values.is_empty() {
                anyhow::bail!("sweep requires at least one value");
            }
            let rows = experiment::sweep(&cfg, param, &values)?;
            println!("value,converged,picard_steps,total_gmres,u_k1,u_k2,seconds");
            for r in &rows {
                println!(
                    "{:e},{},{},{},{},{},{:.2}",
                    r.value,
                    r.converged,
                    r.picard_steps,
                    r.total_gmres,
                    r.ranks_u.0,
                    r.ranks_u.1,
                    r.solve_seconds
                );
            }
            if rows.iter().any(|r| !r.converged) {
                anyhow::bail!("at least one sweep run failed");
            }
            Ok(())
        }
    }
}
