//! Experiment configuration.
//!
//! Configurations are TOML files with three sections; every key can also be
//! overridden from the command line. The defaults reproduce the symmetric
//! step benchmark at `h = 2^-2`, `tau = 2^-6` with the standard tolerance
//! set.
//!
//! ```toml
//! [problem]
//! nu0 = 0.02        # mean viscosity
//! sigma = 0.01      # relative standard deviation
//! b = 4.0           # correlation length
//! m = 3             # random variables
//! d_psi = 3         # total polynomial degree
//! t_f = 1.0
//! tau = 0.015625
//! h = 0.25
//! domain = "step"   # or "channel"
//!
//! [solver]
//! preconditioner = "lsc"   # or "pcd"
//! tol_picard = 1e-5
//! tol_gmres = 1e-1
//! eps_gmres = 1e-3
//! eps_soln = 1e-7
//! eps_conv = 1e-3
//! tol_f0c = 1e-1
//! maxit_picard = 20
//! maxit_gmres = 100
//! maxit_inner = 100
//!
//! [output]
//! dir = "out"
//! ```

use crate::fem::DomainKind;
use crate::problem::ProblemParams;
use crate::solver::{PicardConfig, PrecKind};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSection {
    pub nu0: f64,
    pub sigma: f64,
    pub b: f64,
    pub m: usize,
    pub d_psi: usize,
    pub t_f: f64,
    pub tau: f64,
    pub h: f64,
    pub domain: DomainKind,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            nu0: 1.0 / 50.0,
            sigma: 0.01,
            b: 4.0,
            m: 3,
            d_psi: 3,
            t_f: 1.0,
            tau: 0.015625,
            h: 0.25,
            domain: DomainKind::Step,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub preconditioner: PrecKind,
    pub tol_picard: f64,
    pub tol_gmres: f64,
    pub eps_gmres: f64,
    pub eps_soln: f64,
    pub eps_conv: f64,
    pub tol_f0c: f64,
    pub maxit_picard: usize,
    pub maxit_gmres: usize,
    pub maxit_inner: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = PicardConfig::default();
        Self {
            preconditioner: d.preconditioner,
            tol_picard: d.tol_picard,
            tol_gmres: d.tol_gmres,
            eps_gmres: d.eps_gmres,
            eps_soln: d.eps_soln,
            eps_conv: d.eps_conv,
            tol_f0c: d.tol_f0c,
            maxit_picard: d.maxit_picard,
            maxit_gmres: d.maxit_gmres,
            maxit_inner: d.maxit_inner,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Export operator sparsity patterns, eigenpairs and triple products
    /// as MatrixMarket files.
    pub dump_matrices: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump_matrices: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.nu0 <= 0.0 {
            return Err(ConfigError::Invalid("nu0 must be positive".into()));
        }
        if p.sigma < 0.0 {
            return Err(ConfigError::Invalid("sigma must be nonnegative".into()));
        }
        if p.b <= 0.0 {
            return Err(ConfigError::Invalid(
                "correlation length b must be positive".into(),
            ));
        }
        if p.tau <= 0.0 || p.t_f <= 0.0 {
            return Err(ConfigError::Invalid(
                "tau and t_f must be positive".into(),
            ));
        }
        let steps = p.t_f / p.tau;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "tau = {} does not divide t_f = {}",
                p.tau, p.t_f
            )));
        }
        if p.sigma > 0.0 && p.m == 0 {
            return Err(ConfigError::Invalid(
                "sigma > 0 requires at least one random variable (m >= 1)".into(),
            ));
        }
        let picard = self.picard_config();
        picard
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn problem_params(&self) -> ProblemParams {
        let p = &self.problem;
        ProblemParams {
            domain: p.domain,
            h: p.h,
            nu0: p.nu0,
            sigma: p.sigma,
            corr_len: p.b,
            m: p.m,
            d_psi: p.d_psi,
            t_f: p.t_f,
            tau: p.tau,
        }
    }

    pub fn picard_config(&self) -> PicardConfig {
        let s = &self.solver;
        PicardConfig {
            tol_picard: s.tol_picard,
            tol_gmres: s.tol_gmres,
            eps_gmres: s.eps_gmres,
            eps_soln: s.eps_soln,
            eps_conv: s.eps_conv,
            tol_f0c: s.tol_f0c,
            maxit_picard: s.maxit_picard,
            maxit_gmres: s.maxit_gmres,
            maxit_inner: s.maxit_inner,
            preconditioner: s.preconditioner,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_benchmark() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.problem.nu0, 1.0 / 50.0);
        assert_eq!(cfg.problem.sigma, 0.01);
        assert_eq!(cfg.problem.b, 4.0);
        assert_eq!(cfg.problem.m, 3);
        assert_eq!(cfg.problem.d_psi, 3);
        assert_eq!(cfg.problem.t_f, 1.0);
        assert_eq!(cfg.problem.tau, 2f64.powi(-6));
        assert_eq!(cfg.problem.h, 2f64.powi(-2));
        assert_eq!(cfg.problem.domain, DomainKind::Step);
        assert_eq!(cfg.solver.tol_picard, 1e-5);
        assert_eq!(cfg.solver.tol_gmres, 1e-1);
        assert_eq!(cfg.solver.eps_gmres, 1e-3);
        assert_eq!(cfg.solver.eps_soln, 1e-7);
        assert_eq!(cfg.solver.eps_conv, 1e-3);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let text = r#"
            [problem]
            sigma = 0.1
            h = 0.5

            [solver]
            preconditioner = "pcd"
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.problem.sigma, 0.1);
        assert_eq!(cfg.problem.h, 0.5);
        assert_eq!(cfg.solver.preconditioner, PrecKind::Pcd);
        // untouched keys fall back to defaults
        assert_eq!(cfg.problem.m, 3);
        let rendered = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&rendered).unwrap();
        assert_eq!(back.problem.sigma, 0.1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.problem.tau = 0.3; // does not divide t_f
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.solver.eps_gmres = 0.5; // not below tol_gmres
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.problem.m = 0; // sigma > 0 needs randomness
        assert!(cfg.validate().is_err());
    }
}
