//! Dense reference solvers for small instances.
//!
//! Two independent solution routes for the same discrete problem:
//!
//! 1. the full space-time-stochastic system assembled as one dense matrix,
//!    with the convection blocks rebuilt per Picard sweep from the
//!    per-time-step formula `sum_l H_l (x) N(u_{h,l}^k)`;
//! 2. classical sequential time stepping, one nonlinear solve per step.
//!
//! Neither route touches the tensor-train machinery, so agreement between
//! these and the low-rank solver validates the all-at-once stacking and
//! the compressed iteration at once.

use crate::dense::kron2;
use crate::linalg::{sp_mul_vec, sp_to_dense, DenseLu};
use crate::problem::DiscreteProblem;
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dense oracle limited to {cap} unknowns, problem has {size}")]
    TooLarge { cap: usize, size: usize },
    #[error("oracle Picard did not converge within {0} sweeps")]
    NoConvergence(usize),
}

pub const DENSE_ORACLE_CAP: usize = 100_000;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Velocity coefficients stacked over (time, stochastic, space).
    pub u: Array1<f64>,
    /// Pressure coefficients stacked the same way.
    pub p: Array1<f64>,
}

pub fn relative_gap(a: &OracleSolution, b: &OracleSolution) -> f64 {
    let du = (&a.u - &b.u).mapv(|v| v * v).sum();
    let dp = (&a.p - &b.p).mapv(|v| v * v).sum();
    let na = a.u.mapv(|v| v * v).sum() + a.p.mapv(|v| v * v).sum();
    let nb = b.u.mapv(|v| v * v).sum() + b.p.mapv(|v| v * v).sum();
    ((du + dp) / na.max(nb).max(1e-300)).sqrt()
}

fn check_size(problem: &DiscreteProblem) -> Result<(), OracleError> {
    let size = problem.total_dof();
    if size > DENSE_ORACLE_CAP {
        return Err(OracleError::TooLarge {
            cap: DENSE_ORACLE_CAP,
            size,
        });
    }
    Ok(())
}

/// Dense matrices of the triple-product family, expanded once.
struct DenseGpc {
    g: Vec<Array2<f64>>,
    h: Vec<Array2<f64>>,
}

fn dense_gpc(problem: &DiscreteProblem) -> DenseGpc {
    DenseGpc {
        g: problem.tp.g.iter().map(|m| sp_to_dense(m)).collect(),
        h: problem.tp.h.iter().map(|m| sp_to_dense(m)).collect(),
    }
}

/// Per-step right-hand side from the boundary lifting, stacked over the
/// stochastic mode: `-tau^-1 M_fc (g_k - g_{k-1})` on the mean component
/// and `-(G_l e_1) (x) (A_l_fc g_k)` for every viscosity term.
fn step_rhs_u(problem: &DiscreteProblem, gp: &DenseGpc, k: usize) -> Array1<f64> {
    let spaces = &problem.spaces;
    let n_u = spaces.n_u();
    let n_xi = problem.gpc.n_xi();
    let tau = problem.params.tau;
    let gk = problem.boundary_values_at(k);
    let gkm1 = if k == 0 {
        Array1::zeros(gk.len())
    } else {
        problem.boundary_values_at(k - 1)
    };
    let mut out = Array1::zeros(n_xi * n_u);
    let dmass = sp_mul_vec(&spaces.mass_v_fc, (&gk - &gkm1).view());
    out.slice_mut(ndarray::s![..n_u])
        .assign(&(&dmass * (-1.0 / tau)));
    for (l, stiff_fc) in spaces.stiff_v_fc.iter().enumerate() {
        if l >= gp.g.len() {
            break;
        }
        let spatial = sp_mul_vec(stiff_fc, gk.view());
        for s in 0..n_xi {
            let weight = gp.g[l][[s, 0]];
            if weight != 0.0 {
                let mut block = out.slice_mut(ndarray::s![s * n_u..(s + 1) * n_u]);
                block.scaled_add(-weight, &spatial);
            }
        }
    }
    out
}

fn step_rhs_p(problem: &DiscreteProblem, k: usize) -> Array1<f64> {
    let spaces = &problem.spaces;
    let n_p = spaces.n_p();
    let n_xi = problem.gpc.n_xi();
    let gk = problem.boundary_values_at(k);
    let mut out = Array1::zeros(n_xi * n_p);
    out.slice_mut(ndarray::s![..n_p])
        .assign(&(-&sp_mul_vec(&spaces.b_c, gk.view())));
    out
}

/// Convection matrices of one time step from its stochastic velocity
/// coefficients: the free-free operator block and the free rows of the
/// boundary coupling, `sum_l H_l (x) N(w_l)` and its lifting action.
fn step_convection(
    problem: &DiscreteProblem,
    gp: &DenseGpc,
    u_step: &[f64],
    k: usize,
) -> (Array2<f64>, Array1<f64>) {
    let spaces = &problem.spaces;
    let n_u = spaces.n_u();
    let n_xi = problem.gpc.n_xi();
    let gk = problem.boundary_values_at(k);
    let mut block = Array2::zeros((n_xi * n_u, n_xi * n_u));
    let mut lift = Array1::zeros(n_xi * n_u);
    for l in 0..n_xi {
        let coeff = &u_step[l * n_u..(l + 1) * n_u];
        let mut w_full = spaces.expand_free(Array1::from_vec(coeff.to_vec()).view());
        if l == 0 {
            w_full += &spaces.expand_cons(gk.view());
        }
        let (n_ff, n_fc) = spaces.convection_pair(w_full.view());
        let dense_ff = sp_to_dense(&n_ff);
        block += &kron2(gp.h[l].view(), dense_ff.view());
        let fc_g = sp_mul_vec(&n_fc, gk.view());
        for s in 0..n_xi {
            let weight = gp.h[l][[s, 0]];
            if weight != 0.0 {
                let mut b = lift.slice_mut(ndarray::s![s * n_u..(s + 1) * n_u]);
                b.scaled_add(weight, &fc_g);
            }
        }
    }
    (block, lift)
}

/// Solves the full all-at-once system with dense Picard sweeps.
pub fn dense_all_at_once(
    problem: &DiscreteProblem,
    tol: f64,
    maxit: usize,
) -> Result<OracleSolution, OracleError> {
    check_size(problem)?;
    let gp = dense_gpc(problem);
    let n_t = problem.n_t;
    let n_xi = problem.gpc.n_xi();
    let n_u = problem.spaces.n_u();
    let n_p = problem.spaces.n_p();
    let nu_tot = n_t * n_xi * n_u;
    let np_tot = n_t * n_xi * n_p;
    let n = nu_tot + np_tot;

    // Constant blocks.
    let lin = problem.linear_ff.to_dense();
    let b = problem.op_b.to_dense();
    let bt = problem.op_bt.to_dense();
    let mut rhs_fixed = Array1::zeros(n);
    for k in 0..n_t {
        rhs_fixed
            .slice_mut(ndarray::s![k * n_xi * n_u..(k + 1) * n_xi * n_u])
            .assign(&step_rhs_u(problem, &gp, k));
        rhs_fixed
            .slice_mut(ndarray::s![
                nu_tot + k * n_xi * n_p..nu_tot + (k + 1) * n_xi * n_p
            ])
            .assign(&step_rhs_p(problem, k));
    }

    let mut x = Array1::zeros(n);
    for sweep in 0..maxit {
        let mut a = Array2::zeros((n, n));
        a.slice_mut(ndarray::s![..nu_tot, ..nu_tot]).assign(&lin);
        a.slice_mut(ndarray::s![..nu_tot, nu_tot..]).assign(&bt);
        a.slice_mut(ndarray::s![nu_tot.., ..nu_tot]).assign(&b);
        let mut rhs = rhs_fixed.clone();
        for k in 0..n_t {
            let u_step = x
                .slice(ndarray::s![k * n_xi * n_u..(k + 1) * n_xi * n_u])
                .to_vec();
            let (conv, lift) = step_convection(problem, &gp, &u_step, k);
            let mut blk = a.slice_mut(ndarray::s![
                k * n_xi * n_u..(k + 1) * n_xi * n_u,
                k * n_xi * n_u..(k + 1) * n_xi * n_u
            ]);
            blk += &conv;
            let mut r = rhs.slice_mut(ndarray::s![k * n_xi * n_u..(k + 1) * n_xi * n_u]);
            r -= &lift;
        }
        let x_new = DenseLu::new(a.view()).solve(rhs.view());
        let change = (&x_new - &x).mapv(|v| v * v).sum().sqrt();
        let scale = x_new.mapv(|v| v * v).sum().sqrt().max(1e-300);
        x = x_new;
        if change <= tol * scale {
            return Ok(split_solution(x, nu_tot));
        }
        if sweep + 1 == maxit {
            return Err(OracleError::NoConvergence(maxit));
        }
    }
    Err(OracleError::NoConvergence(maxit))
}

/// Classical backward-Euler time stepping with a dense nonlinear solve at
/// each step.
pub fn sequential_time_stepping(
    problem: &DiscreteProblem,
    tol: f64,
    maxit: usize,
) -> Result<OracleSolution, OracleError> {
    check_size(problem)?;
    let gp = dense_gpc(problem);
    let n_t = problem.n_t;
    let n_xi = problem.gpc.n_xi();
    let n_u = problem.spaces.n_u();
    let n_p = problem.spaces.n_p();
    let tau = problem.params.tau;
    let spaces = &problem.spaces;

    // Per-step constant blocks: tau^-1 I (x) M + sum_l G_l (x) A_l and the
    // divergence coupling.
    let mass_ff = sp_to_dense(&spaces.mass_v_ff);
    let mut lin_step = Array2::zeros((n_xi * n_u, n_xi * n_u));
    for s in 0..n_xi {
        let mut blk = lin_step.slice_mut(ndarray::s![s * n_u..(s + 1) * n_u, s * n_u..(s + 1) * n_u]);
        blk.assign(&(&mass_ff / tau));
    }
    for (l, stiff) in spaces.stiff_v_ff.iter().enumerate() {
        if l >= gp.g.len() {
            break;
        }
        lin_step += &kron2(gp.g[l].view(), sp_to_dense(stiff).view());
    }
    let b_step = {
        let bd = sp_to_dense(&spaces.b_f);
        let eye = Array2::eye(n_xi);
        kron2(eye.view(), bd.view())
    };
    let n_step = n_xi * (n_u + n_p);

    let mut u_prev = Array1::zeros(n_xi * n_u);
    let mut g_prev = Array1::zeros(spaces.n_c());
    let mut u_out = Array1::zeros(n_t * n_xi * n_u);
    let mut p_out = Array1::zeros(n_t * n_xi * n_p);

    for k in 0..n_t {
        let gk = problem.boundary_values_at(k);
        // fixed right-hand side of this step
        let mut rhs_fixed = Array1::zeros(n_step);
        {
            let mut ru = rhs_fixed.slice_mut(ndarray::s![..n_xi * n_u]);
            // mass coupling to previous step and boundary difference
            let mut mean = sp_mul_vec(&spaces.mass_v_fc, (&gk - &g_prev).view());
            mean.mapv_inplace(|v| -v / tau);
            ru.slice_mut(ndarray::s![..n_u]).assign(&mean);
            for (l, stiff_fc) in spaces.stiff_v_fc.iter().enumerate() {
                if l >= gp.g.len() {
                    break;
                }
                let spatial = sp_mul_vec(stiff_fc, gk.view());
                for s in 0..n_xi {
                    let w = gp.g[l][[s, 0]];
                    if w != 0.0 {
                        let mut blk = ru.slice_mut(ndarray::s![s * n_u..(s + 1) * n_u]);
                        blk.scaled_add(-w, &spatial);
                    }
                }
            }
            // previous velocity
            for s in 0..n_xi {
                let prev = u_prev.slice(ndarray::s![s * n_u..(s + 1) * n_u]).to_owned();
                let m_prev = {
                    let mut acc = Array1::zeros(n_u);
                    for (i, j, v) in crate::linalg::sp_iter(&spaces.mass_v_ff) {
                        acc[i] += v * prev[j];
                    }
                    acc
                };
                let mut blk = ru.slice_mut(ndarray::s![s * n_u..(s + 1) * n_u]);
                blk.scaled_add(1.0 / tau, &m_prev);
            }
        }
        {
            let mut rp = rhs_fixed.slice_mut(ndarray::s![n_xi * n_u..]);
            rp.slice_mut(ndarray::s![..n_p])
                .assign(&(-&sp_mul_vec(&spaces.b_c, gk.view())));
        }

        // nonlinear solve for this step, warm-started from the previous one
        let mut y = Array1::zeros(n_step);
        y.slice_mut(ndarray::s![..n_xi * n_u]).assign(&u_prev);
        let mut converged = false;
        for _ in 0..maxit {
            let u_step = y.slice(ndarray::s![..n_xi * n_u]).to_vec();
            let (conv, lift) = step_convection(problem, &gp, &u_step, k);
            let mut a = Array2::zeros((n_step, n_step));
            a.slice_mut(ndarray::s![..n_xi * n_u, ..n_xi * n_u])
                .assign(&(&lin_step + &conv));
            a.slice_mut(ndarray::s![..n_xi * n_u, n_xi * n_u..])
                .assign(&b_step.t());
            a.slice_mut(ndarray::s![n_xi * n_u.., ..n_xi * n_u])
                .assign(&b_step);
            let mut rhs = rhs_fixed.clone();
            {
                let mut ru = rhs.slice_mut(ndarray::s![..n_xi * n_u]);
                ru -= &lift;
            }
            let y_new = DenseLu::new(a.view()).solve(rhs.view());
            let change = (&y_new - &y).mapv(|v| v * v).sum().sqrt();
            let scale = y_new.mapv(|v| v * v).sum().sqrt().max(1e-300);
            y = y_new;
            if change <= tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(OracleError::NoConvergence(maxit));
        }
        u_prev = y.slice(ndarray::s![..n_xi * n_u]).to_owned();
        g_prev = gk;
        u_out
            .slice_mut(ndarray::s![k * n_xi * n_u..(k + 1) * n_xi * n_u])
            .assign(&u_prev);
        p_out
            .slice_mut(ndarray::s![k * n_xi * n_p..(k + 1) * n_xi * n_p])
            .assign(&y.slice(ndarray::s![n_xi * n_u..]));
    }
    Ok(OracleSolution { u: u_out, p: p_out })
}

fn split_solution(x: Array1<f64>, nu_tot: usize) -> OracleSolution {
    OracleSolution {
        u: x.slice(ndarray::s![..nu_tot]).to_owned(),
        p: x.slice(ndarray::s![nu_tot..]).to_owned(),
    }
}

/// Converts a low-rank solution pair to stacked dense vectors.
pub fn lowrank_as_dense(
    u: &crate::tt::TensorTrain3,
    p: &crate::tt::TensorTrain3,
) -> OracleSolution {
    OracleSolution {
        u: u.to_full().expect("oracle-sized tensor").to_vec(),
        p: p.to_full().expect("oracle-sized tensor").to_vec(),
    }
}

/// Right-preconditioned dense GMRES on the all-at-once saddle matrix with
/// the exact block-triangular preconditioner (exact Schur complement and
/// exact velocity-block solve). Returns the iteration count and residual.
pub fn ideal_preconditioner_outcome(
    problem: &DiscreteProblem,
    seed: u64,
) -> Result<crate::dense::DenseGmresOutcome, OracleError> {
    check_size(problem)?;
    use rand::Rng;
    use rand::SeedableRng;
    let gp = dense_gpc(problem);
    let n_t = problem.n_t;
    let n_xi = problem.gpc.n_xi();
    let n_u = problem.spaces.n_u();
    let nu_tot = n_t * n_xi * n_u;
    let np_tot = n_t * n_xi * problem.spaces.n_p();

    // Frozen convection from the ramped boundary flow field.
    let mut fc = problem.linear_ff.to_dense();
    for k in 0..n_t {
        let u_step = vec![0.0; n_xi * n_u];
        let (conv, _) = step_convection(problem, &gp, &u_step, k);
        let mut blk = fc.slice_mut(ndarray::s![
            k * n_xi * n_u..(k + 1) * n_xi * n_u,
            k * n_xi * n_u..(k + 1) * n_xi * n_u
        ]);
        blk += &conv;
    }
    let b = problem.op_b.to_dense();
    let prec = crate::dense::IdealBlockTriangular::new(fc.view(), b.view());

    let mut a = Array2::zeros((nu_tot + np_tot, nu_tot + np_tot));
    a.slice_mut(ndarray::s![..nu_tot, ..nu_tot]).assign(&fc);
    a.slice_mut(ndarray::s![..nu_tot, nu_tot..])
        .assign(&problem.op_bt.to_dense());
    a.slice_mut(ndarray::s![nu_tot.., ..nu_tot]).assign(&b);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rhs = Array1::from_shape_fn(nu_tot + np_tot, |_| rng.gen_range(-1.0..1.0_f64));
    let (_, out) = crate::dense::gmres_dense(
        |v| a.dot(&v.to_owned()),
        rhs.view(),
        1e-10,
        10,
        |v| prec.apply(v),
    );
    Ok(out)
}
