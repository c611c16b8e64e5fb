//! Mean-based block-triangular preconditioning.
//!
//! The preconditioner solves, approximately,
//!
//! ```text
//! [ F0 + C   B^T ] [u]   [v_u]
//! [ 0       -S   ] [p] = [v_p]
//! ```
//!
//! where `F0 + C` is the mean velocity operator (mean viscosity, mean
//! convecting field) and `S` is approximated either by the pressure
//! convection-diffusion form `(B M*^-1 B^T)^-1 (F_p0 + C_p) M_p*^-1` or by
//! the least-squares commutator form
//! `(B M*^-1 B^T)^-1 (B M*^-1 (F0 + C) M*^-1 B^T) (B M*^-1 B^T)^-1`.
//! The `F0 + C` solve itself is an inner truncated GMRES, preconditioned
//! with `(I - C)^-1 (x) I (x) (tau^-1 M + A_0 + N(w_avg))^-1`: the time
//! factor is the lower-triangular inverse of the backward-Euler coupling
//! (a cumulative sum along time slices) and the spatial factor is one
//! sparse factorization of the time-averaged mean operator. A loose inner
//! tolerance is enough for the outer iteration.

use super::gmres::{lr_gmres, LowRankVector, LrGmresOptions};
use super::{PicardConfig, PrecKind, SolverError, TtPair};
use crate::kron::{build_c, KronSumOperator, KronTerm};
use crate::linalg::{sp_scale, SparseCholesky, SparseLu};
use crate::problem::{ConvOps, DiscreteProblem};
use crate::tt::TensorTrain3;
use ndarray::{Array1, Array2};
use std::cell::Cell;

pub struct MeanPreconditioner {
    kind: PrecKind,
    eps: f64,
    inner_tol: f64,
    inner_maxit: usize,
    f0c: KronSumOperator,
    fp0cp: Option<KronSumOperator>,
    op_b: KronSumOperator,
    op_bt: KronSumOperator,
    poisson: SparseCholesky,
    spatial_lu: SparseLu,
    n_free: usize,
    diag_mv_inv: Array1<f64>,
    diag_mp_inv: Array1<f64>,
    inner_iterations: Cell<usize>,
}

impl MeanPreconditioner {
    pub fn build(
        problem: &DiscreteProblem,
        conv: &ConvOps,
        cfg: &PicardConfig,
    ) -> Result<Self, SolverError> {
        let spaces = &problem.spaces;
        let tau = problem.params.tau;
        let n_t = problem.n_t;
        let n_xi = problem.gpc.n_xi();

        let mean_ff = conv
            .mean_ff
            .as_ref()
            .expect("preconditioner needs mean convection");
        let mean_p = conv.mean_p.as_ref().expect("pressure mean convection");
        let w_avg = conv.w_avg.as_ref().expect("time-averaged velocity");

        // F0 + C: tau^-1 M + A_0 + N_mean + C on the velocity space.
        let ident_t = crate::linalg::sp_identity(n_t);
        let ident_xi = crate::linalg::sp_identity(n_xi);
        let mut terms = vec![
            KronTerm::new(
                crate::kron::Factor::sparse(sp_scale(&ident_t, 1.0 / tau)),
                crate::kron::Factor::sparse(ident_xi.clone()),
                crate::kron::Factor::Sparse(spaces.mass_v_ff.clone()),
            ),
            KronTerm::new(
                crate::kron::Factor::sparse(ident_t.clone()),
                crate::kron::Factor::sparse(ident_xi.clone()),
                crate::kron::Factor::Sparse(spaces.stiff_v_ff[0].clone()),
            ),
        ];
        terms.extend(mean_ff.terms().iter().cloned());
        let f0c = KronSumOperator::new(terms, problem.dims_u(), problem.dims_u())?
            .concat(&build_c(tau, n_t, n_xi, &spaces.mass_v_ff)?)?;

        // F_p0 + C_p on the pressure space (PCD only).
        let fp0cp = if cfg.preconditioner == PrecKind::Pcd {
            let mut terms = vec![
                KronTerm::new(
                    crate::kron::Factor::sparse(sp_scale(&ident_t, 1.0 / tau)),
                    crate::kron::Factor::sparse(ident_xi.clone()),
                    crate::kron::Factor::Sparse(spaces.m_p.clone()),
                ),
                KronTerm::new(
                    crate::kron::Factor::sparse(ident_t.clone()),
                    crate::kron::Factor::sparse(ident_xi.clone()),
                    crate::kron::Factor::Sparse(spaces.a_p0.clone()),
                ),
            ];
            terms.extend(mean_p.terms().iter().cloned());
            Some(
                KronSumOperator::new(terms, problem.dims_p(), problem.dims_p())?
                    .concat(&build_c(tau, n_t, n_xi, &spaces.m_p)?)?,
            )
        } else {
            None
        };

        let poisson = SparseCholesky::new(&spaces.bmb)
            .map_err(|e| SolverError::Factorization(format!("pressure Poisson: {e}")))?;

        // Spatial factor of the inner preconditioner:
        // tau^-1 M + A_0 + N(w_avg) on the free scalar block.
        let n_avg = spaces.convection_scalar_ff(w_avg.view());
        let spatial = crate::problem::scaled_sum(&[
            (&spaces.mass_s_ff, 1.0 / tau),
            (&spaces.stiff0_s_ff, 1.0),
            (&n_avg, 1.0),
        ]);
        let spatial_lu = SparseLu::new(&spatial)
            .map_err(|e| SolverError::Factorization(format!("mean velocity block: {e}")))?;

        Ok(Self {
            kind: cfg.preconditioner,
            eps: cfg.eps_gmres,
            inner_tol: cfg.tol_f0c,
            inner_maxit: cfg.maxit_inner,
            f0c,
            fp0cp,
            op_b: problem.op_b.clone(),
            op_bt: problem.op_bt.clone(),
            poisson,
            spatial_lu,
            n_free: spaces.mesh.n_free_scalar(),
            diag_mv_inv: spaces.diag_mass_v_inv.clone(),
            diag_mp_inv: spaces.diag_mass_p_inv.clone(),
            inner_iterations: Cell::new(0),
        })
    }

    /// Total inner GMRES iterations accumulated over all applications.
    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations.get()
    }

    /// Applies the block-triangular preconditioner to a stacked residual.
    pub fn apply(&self, v: &TtPair) -> TtPair {
        let p_hat = self.schur_solve(&v.p).scale(-1.0);
        let btp = self.op_bt.apply(&p_hat).expect("dims");
        let rhs_u = v.u.axpy(-1.0, &btp).truncate(self.eps);
        let u_hat = self.solve_f0c(&rhs_u);
        TtPair::new(u_hat, p_hat)
    }

    fn schur_solve(&self, vp: &TensorTrain3) -> TensorTrain3 {
        match self.kind {
            PrecKind::Pcd => {
                let w = spatial_diag(vp, &self.diag_mp_inv);
                let w = self
                    .fp0cp
                    .as_ref()
                    .expect("pcd operator")
                    .apply_rounded(&w, self.eps)
                    .expect("dims");
                self.poisson_solve(&w)
            }
            PrecKind::Lsc => {
                let w = self.poisson_solve(vp);
                let w = self.op_bt.apply(&w).expect("dims");
                let w = spatial_diag(&w, &self.diag_mv_inv);
                let w = self.f0c.apply_rounded(&w, self.eps).expect("dims");
                let w = spatial_diag(&w, &self.diag_mv_inv);
                let w = self.op_b.apply(&w).expect("dims");
                self.poisson_solve(&w)
            }
        }
    }

    fn poisson_solve(&self, v: &TensorTrain3) -> TensorTrain3 {
        spatial_solve(v, |rhs| self.poisson.solve_mat(rhs.view()))
    }

    /// Inner solve of `(F0 + C) v = y` by truncated GMRES with the
    /// factor-wise exact preconditioner.
    pub fn solve_f0c(&self, y: &TensorTrain3) -> TensorTrain3 {
        let opts = LrGmresOptions {
            tol: self.inner_tol,
            eps: self.eps,
            maxit: self.inner_maxit,
        };
        let (z, out) = lr_gmres(
            |x: &TensorTrain3| self.f0c.apply_rounded(x, self.eps).expect("dims"),
            y,
            |r| self.mean_factor_inverse(r),
            &opts,
        );
        self.inner_iterations
            .set(self.inner_iterations.get() + out.iterations);
        z
    }

    /// `(I - C)^-1 (x) I (x) (tau^-1 M + A_0 + N(w_avg))^-1`: cumulative
    /// sums along the time mode and one sparse solve per spatial column,
    /// both exact and rank-preserving.
    fn mean_factor_inverse(&self, v: &TensorTrain3) -> TensorTrain3 {
        let cum = time_cumsum(v);
        spatial_solve(&cum, |rhs| {
            // block-diagonal solve for the two velocity components
            let n = self.n_free;
            let mut out = Array2::zeros(rhs.dim());
            out.slice_mut(ndarray::s![..n, ..])
                .assign(&self.spatial_lu.solve_mat(rhs.slice(ndarray::s![..n, ..])));
            out.slice_mut(ndarray::s![n.., ..])
                .assign(&self.spatial_lu.solve_mat(rhs.slice(ndarray::s![n.., ..])));
            out
        })
    }
}

/// Applies a spatial solve columnwise to the third core.
fn spatial_solve<F>(v: &TensorTrain3, solve: F) -> TensorTrain3
where
    F: Fn(ndarray::ArrayView2<'_, f64>) -> Array2<f64>,
{
    let rhs = v.core3().t().to_owned(); // n3 x k2
    let sol = solve(rhs.view());
    TensorTrain3::from_cores(v.core1().clone(), v.core2().clone(), sol.t().to_owned())
        .expect("core dims unchanged")
}

/// Scales the spatial mode by a diagonal matrix.
fn spatial_diag(v: &TensorTrain3, d: &Array1<f64>) -> TensorTrain3 {
    let mut core3 = v.core3().clone();
    for mut row in core3.rows_mut() {
        for (x, &s) in row.iter_mut().zip(d.iter()) {
            *x *= s;
        }
    }
    TensorTrain3::from_cores(v.core1().clone(), v.core2().clone(), core3).expect("dims")
}

/// Applies the inverse of `I - C` (unit lower bidiagonal) along the time
/// mode: running sums over the time index.
fn time_cumsum(v: &TensorTrain3) -> TensorTrain3 {
    let mut core1 = v.core1().clone();
    for j in 0..core1.ncols() {
        let mut acc = 0.0;
        for i in 0..core1.nrows() {
            acc += core1[[i, j]];
            core1[[i, j]] = acc;
        }
    }
    TensorTrain3::from_cores(core1, v.core2().clone(), v.core3().clone()).expect("dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn cumsum_inverts_backward_difference() {
        // (I - C) followed by cumulative sums is the identity on the time
        // mode.
        let core1 = Array2::from_shape_fn((5, 2), |(i, j)| (i + 2 * j) as f64 + 0.5);
        let v = TensorTrain3::from_cores(
            core1.clone(),
            Array3::ones((2, 3, 1)),
            Array2::ones((1, 4)),
        )
        .unwrap();
        // apply I - C to the first core by hand
        let mut diff = core1.clone();
        for j in 0..2 {
            for i in (1..5).rev() {
                diff[[i, j]] -= diff[[i - 1, j]];
            }
        }
        let w = TensorTrain3::from_cores(diff, Array3::ones((2, 3, 1)), Array2::ones((1, 4)))
            .unwrap();
        let back = time_cumsum(&w);
        let err = (back.core1() - &core1)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn spatial_diag_scales_entries() {
        let v = TensorTrain3::rank_one(
            ndarray::array![1.0, 2.0].view(),
            ndarray::array![1.0].view(),
            ndarray::array![3.0, 4.0].view(),
        );
        let d = ndarray::array![2.0, 0.5];
        let w = spatial_diag(&v, &d);
        assert_eq!(w.entry(0, 0, 0), 6.0);
        assert_eq!(w.entry(0, 0, 1), 2.0);
    }
}
