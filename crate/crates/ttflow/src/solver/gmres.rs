//! Flexible GMRES with rank truncation.
//!
//! The iterates live in a low-rank format and every stored quantity is
//! recompressed with a fixed tolerance: the initial residual, the operator
//! products, the normalized Arnoldi vectors, the assembled iterate and the
//! recomputed residual. Because of the recompression the Arnoldi vectors
//! are only approximately orthogonal, so the residual is always evaluated
//! freshly from the operator rather than from the Hessenberg recurrence,
//! and the attainable accuracy is limited by the truncation tolerance.
//! The preconditioner may change between iterations (it can itself be an
//! inner iterative solve), hence the flexible variant: the preconditioned
//! directions are stored and the solution is assembled from them.

use ndarray::{Array1, Array2};

/// Minimal vector interface for truncated Krylov iterations.
pub trait LowRankVector: Clone {
    /// `self + s * other`.
    fn axpy(&self, s: f64, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    fn dot(&self, other: &Self) -> f64;
    fn norm(&self) -> f64;
    fn truncate(&self, eps: f64) -> Self;
    fn max_rank(&self) -> usize;
}

#[derive(Debug, Clone)]
pub struct LrGmresOptions {
    /// Relative stopping tolerance on the (recomputed) residual.
    pub tol: f64,
    /// Truncation tolerance applied to every stored quantity.
    pub eps: f64,
    pub maxit: usize,
}

#[derive(Debug, Clone)]
pub struct LrGmresOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
    pub breakdown: bool,
}

/// Intermediate iterate assembly recompresses once ranks pass this bound.
const ASSEMBLY_RANK_BUDGET: usize = 512;

/// Solves `L z = b` with truncated flexible GMRES, starting from zero.
pub fn lr_gmres<V, A, P>(apply: A, b: &V, prec: P, opts: &LrGmresOptions) -> (V, LrGmresOutcome)
where
    V: LowRankVector,
    A: Fn(&V) -> V,
    P: Fn(&V) -> V,
{
    let b_norm = b.norm();
    let zero = b.scale(0.0);
    if b_norm == 0.0 {
        return (
            zero,
            LrGmresOutcome {
                iterations: 0,
                rel_residual: 0.0,
                converged: true,
                history: vec![0.0],
                breakdown: false,
            },
        );
    }

    // z0 = 0, so the initial residual is b itself.
    let s0 = b.truncate(opts.eps);
    let beta = s0.norm();
    let mut basis = vec![s0.scale(1.0 / beta)];
    let mut directions: Vec<V> = Vec::new();
    let mut hcols: Vec<Vec<f64>> = Vec::new();
    let mut z = zero.clone();
    let mut s_norm = beta;
    let mut history = vec![beta / b_norm];
    let mut k = 0;
    let mut breakdown = false;

    while s_norm > opts.tol * b_norm && k < opts.maxit {
        k += 1;
        let zdir = prec(&basis[k - 1]);
        let mut x = apply(&zdir).truncate(opts.eps);
        directions.push(zdir);
        let x_norm = x.norm();
        let mut col = Vec::with_capacity(k + 1);
        for v in basis.iter() {
            let h = x.dot(v);
            x = x.axpy(-h, v);
            col.push(h);
        }
        let h_next = x.norm();
        col.push(h_next);
        hcols.push(col);

        let y = solve_hessenberg_lstsq(&hcols, beta);
        z = assemble_iterate(&directions, &y, opts.eps);
        let s = b.axpy(-1.0, &apply(&z)).truncate(opts.eps);
        s_norm = s.norm();
        history.push(s_norm / b_norm);

        if h_next <= 1e-14 * x_norm.max(b_norm * 1e-300) {
            // The new direction lies in the span of the previous ones: the
            // iterate is already optimal in the truncated subspace.
            breakdown = true;
            break;
        }
        basis.push(x.scale(1.0 / h_next).truncate(opts.eps));
    }

    let converged = s_norm <= opts.tol * b_norm;
    (
        z,
        LrGmresOutcome {
            iterations: k,
            rel_residual: s_norm / b_norm,
            converged,
            history,
            breakdown,
        },
    )
}

fn solve_hessenberg_lstsq(hcols: &[Vec<f64>], beta: f64) -> Vec<f64> {
    let k = hcols.len();
    let rows = k + 1;
    let h = Array2::from_shape_fn((rows, k), |(i, j)| {
        if i < hcols[j].len() {
            hcols[j][i]
        } else {
            0.0
        }
    });
    let mut rhs = Array1::zeros(rows);
    rhs[0] = beta;
    let qr = crate::linalg::to_faer(h.view()).qr();
    use faer::linalg::solvers::SolveLstsq;
    let sol = qr.solve_lstsq(&faer::Mat::from_fn(rows, 1, |i, _| rhs[i]));
    (0..k).map(|i| sol[(i, 0)]).collect()
}

fn assemble_iterate<V: LowRankVector>(directions: &[V], y: &[f64], eps: f64) -> V {
    let mut acc: Option<V> = None;
    for (d, &yi) in directions.iter().zip(y) {
        acc = Some(match acc {
            None => d.scale(yi),
            Some(a) => {
                let next = a.axpy(yi, d);
                if next.max_rank() > ASSEMBLY_RANK_BUDGET {
                    next.truncate(0.3 * eps)
                } else {
                    next
                }
            }
        });
    }
    acc.expect("at least one direction").truncate(eps)
}
