//! Assembly of the full discrete problem: mesh, stochastic basis, viscosity
//! expansion, Kronecker operators, boundary lifting and right-hand side.
//!
//! The unknown velocity lives on the free dofs only. Dirichlet data enters
//! twice: the linear coupling columns produce a fixed right-hand side, and
//! the convection operator is always built from the full velocity field
//! (free part scattered to all nodes plus the boundary values), so the
//! transport of boundary data is part of the nonlinear residual.

use crate::fem::{build_mesh, DomainKind, MeshError, SpatialDiscretization};
use crate::gpc::{triple_products, GpcBasis, TripleProducts};
use crate::kl::{kl_eigenpairs, KlError, KlViscosity};
use crate::kron::{
    build_c, build_f, build_spatial, convection_terms, mean_convection_terms, Factor, KronError,
    KronSumOperator,
};
use crate::linalg::SpMat;
use crate::solver::TtPair;
use crate::tt::{sum_round_abs, TensorTrain3};
use ndarray::Array1;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Tt(#[from] crate::tt::TtError),
    #[error(transparent)]
    Kl(#[from] KlError),
    #[error(transparent)]
    Kron(#[from] KronError),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Physical and discretization parameters of one flow problem.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    pub domain: DomainKind,
    pub h: f64,
    pub nu0: f64,
    pub sigma: f64,
    pub corr_len: f64,
    pub m: usize,
    pub d_psi: usize,
    pub t_f: f64,
    pub tau: f64,
}

impl ProblemParams {
    pub fn n_t(&self) -> usize {
        (self.t_f / self.tau).round() as usize
    }
}

/// Everything the solvers need, assembled once per configuration.
pub struct DiscreteProblem {
    pub params: ProblemParams,
    pub gpc: GpcBasis,
    pub tp: TripleProducts,
    pub spaces: SpatialDiscretization,
    pub kl: KlViscosity,
    pub n_t: usize,
    /// Velocity block `tau^-1 M + sum_l G_l (x) A_l + C`, free columns.
    pub linear_ff: KronSumOperator,
    /// The same operator's Dirichlet coupling columns.
    pub linear_fc: KronSumOperator,
    pub op_b: KronSumOperator,
    pub op_bt: KronSumOperator,
    pub op_bc: KronSumOperator,
    scatter_f: KronSumOperator,
    /// Boundary values as a rank-one train over constrained dofs, and the
    /// same values scattered into the full nodal vector.
    pub g_tt: TensorTrain3,
    pub g_full: TensorTrain3,
    pub rhs: TtPair,
}

/// Convection operators built from one velocity iterate.
pub struct ConvOps {
    /// Free-to-free convection block.
    pub ff: KronSumOperator,
    /// Action of the convection operator on the Dirichlet columns.
    pub fc: KronSumOperator,
    /// Mean-field convection block used by the preconditioner.
    pub mean_ff: Option<KronSumOperator>,
    /// Pressure-space mean convection block.
    pub mean_p: Option<KronSumOperator>,
    /// Time-averaged mean velocity field, full nodal vector.
    pub w_avg: Option<Array1<f64>>,
    /// Ranks of the truncated velocity the operator was built from.
    pub ranks: (usize, usize),
}

impl DiscreteProblem {
    pub fn build(params: ProblemParams) -> Result<Self, ProblemError> {
        if params.tau <= 0.0 || params.t_f <= 0.0 {
            return Err(ProblemError::InvalidParam(
                "time horizon and step must be positive".into(),
            ));
        }
        let steps = params.t_f / params.tau;
        if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
            return Err(ProblemError::InvalidParam(format!(
                "tau = {} does not divide t_f = {}",
                params.tau, params.t_f
            )));
        }
        if params.nu0 <= 0.0 {
            return Err(ProblemError::InvalidParam("nu0 must be positive".into()));
        }
        let n_t = params.n_t();

        let mesh = build_mesh(params.domain, params.h)?;
        let gpc = GpcBasis::new(params.m, params.d_psi);
        let tp = triple_products(&gpc);
        let n_xi = gpc.n_xi();

        // KL eigenproblem on the pressure grid.
        let eigenpairs = if params.m > 0 && params.sigma != 0.0 {
            let m_p = crate::fem::assemble::pressure_mass(&mesh);
            kl_eigenpairs(&mesh.q1_points, &m_p, params.corr_len, params.m)?
        } else {
            Vec::new()
        };
        let kl = KlViscosity {
            nu0: params.nu0,
            sigma: params.sigma,
            corr_len: params.corr_len,
            eigenpairs,
        };
        let fields = kl.coefficient_fields(mesh.n_q1())?;
        let spaces = SpatialDiscretization::new(mesh, &fields);

        let n_fields = fields.len();
        let g_mats: Vec<Arc<SpMat>> = tp.g[..n_fields].to_vec();

        let conv_zero_ff = KronSumOperator::zero(
            (n_t, n_xi, spaces.n_u()),
            (n_t, n_xi, spaces.n_u()),
        );
        let linear_ff = build_f(
            params.tau,
            n_t,
            &spaces.mass_v_ff,
            &g_mats,
            &spaces.stiff_v_ff[..n_fields].to_vec(),
            &conv_zero_ff,
        )?
        .concat(&build_c(params.tau, n_t, n_xi, &spaces.mass_v_ff)?)?;

        let conv_zero_fc = KronSumOperator::zero(
            (n_t, n_xi, spaces.n_u()),
            (n_t, n_xi, spaces.n_c()),
        );
        let linear_fc = build_f(
            params.tau,
            n_t,
            &spaces.mass_v_fc,
            &g_mats,
            &spaces.stiff_v_fc[..n_fields].to_vec(),
            &conv_zero_fc,
        )?
        .concat(&build_c(params.tau, n_t, n_xi, &spaces.mass_v_fc)?)?;

        let op_b = build_spatial(n_t, n_xi, &spaces.b_f);
        let op_bt = build_spatial(n_t, n_xi, &spaces.bt_f);
        let op_bc = build_spatial(n_t, n_xi, &spaces.b_c);
        let scatter_f = build_spatial(n_t, n_xi, &spaces.scatter_free);
        let scatter_c = build_spatial(n_t, n_xi, &spaces.scatter_cons);

        let ramp = Array1::from_shape_fn(n_t, |k| {
            crate::fem::inflow_ramp((k + 1) as f64 * params.tau)
        });
        let mut e1 = Array1::zeros(n_xi);
        e1[0] = 1.0;
        let g_tt = TensorTrain3::rank_one(ramp.view(), e1.view(), spaces.lifting.view());
        let g_full = scatter_c.apply(&g_tt)?;

        let f_u = linear_fc.apply(&g_tt)?.scale(-1.0).round(1e-14);
        let f_p = op_bc.apply(&g_tt)?.scale(-1.0).round(1e-14);
        let rhs = TtPair::new(f_u, f_p);

        Ok(Self {
            params,
            gpc,
            tp,
            spaces,
            kl,
            n_t,
            linear_ff,
            linear_fc,
            op_b,
            op_bt,
            op_bc,
            scatter_f,
            g_tt,
            g_full,
            rhs,
        })
    }

    pub fn dims_u(&self) -> (usize, usize, usize) {
        (self.n_t, self.gpc.n_xi(), self.spaces.n_u())
    }

    pub fn dims_p(&self) -> (usize, usize, usize) {
        (self.n_t, self.gpc.n_xi(), self.spaces.n_p())
    }

    pub fn dims_c(&self) -> (usize, usize, usize) {
        (self.n_t, self.gpc.n_xi(), self.spaces.n_c())
    }

    pub fn total_dof(&self) -> usize {
        self.n_t * self.gpc.n_xi() * (self.spaces.n_u() + self.spaces.n_p())
    }

    /// Velocity value of the Dirichlet data at time step `k` (0-based).
    pub fn boundary_values_at(&self, k: usize) -> Array1<f64> {
        &self.spaces.lifting * crate::fem::inflow_ramp((k + 1) as f64 * self.params.tau)
    }

    /// Full nodal velocity train: free part scattered plus boundary data.
    pub fn full_velocity(&self, u_free: &TensorTrain3) -> TensorTrain3 {
        self.scatter_f
            .apply(u_free)
            .expect("dims")
            .add(&self.g_full)
            .expect("dims")
    }

    /// Empty convection (the Stokes limit).
    pub fn conv_none(&self) -> ConvOps {
        ConvOps {
            ff: KronSumOperator::zero(self.dims_u(), self.dims_u()),
            fc: KronSumOperator::zero(self.dims_u(), self.dims_c()),
            mean_ff: Some(KronSumOperator::zero(self.dims_u(), self.dims_u())),
            mean_p: Some(KronSumOperator::zero(self.dims_p(), self.dims_p())),
            w_avg: Some(Array1::zeros(self.spaces.n_full())),
            ranks: (1, 1),
        }
    }

    /// Builds the convection operators from a free velocity iterate,
    /// truncated with `eps_conv`. With `with_mean` the mean-field blocks
    /// for the preconditioner are produced from the same spatial factors.
    pub fn convection_package(
        &self,
        u_free: &TensorTrain3,
        eps_conv: f64,
        with_mean: bool,
    ) -> Result<ConvOps, ProblemError> {
        let trunc = u_free.round(eps_conv);
        let ranks = trunc.ranks();
        let u_full = self.full_velocity(&trunc);
        self.convection_from_full(&u_full, ranks, with_mean)
    }

    /// Convection operators from an explicit full-velocity train (used for
    /// the nonlinear residual, where the iterate is not truncated).
    pub fn convection_from_full(
        &self,
        u_full: &TensorTrain3,
        ranks: (usize, usize),
        with_mean: bool,
    ) -> Result<ConvOps, ProblemError> {
        let (_, k2) = u_full.ranks();
        let mut ff_factors = Vec::with_capacity(k2);
        let mut fc_factors = Vec::with_capacity(k2);
        let mut p_factors = Vec::with_capacity(k2);
        for a2 in 0..k2 {
            let row = u_full.core3().row(a2);
            let (n_ff, n_fc) = self.spaces.convection_pair(row);
            ff_factors.push(Factor::sparse(n_ff));
            fc_factors.push(Factor::sparse(n_fc));
            if with_mean {
                p_factors.push(Factor::sparse(self.spaces.convection_pressure(row)));
            }
        }
        let ff = KronSumOperator::new(
            convection_terms(u_full, &self.tp.h, &ff_factors),
            self.dims_u(),
            self.dims_u(),
        )?;
        let fc = KronSumOperator::new(
            convection_terms(u_full, &self.tp.h, &fc_factors),
            self.dims_u(),
            self.dims_c(),
        )?;
        let (mean_ff, mean_p, w_avg) = if with_mean {
            let n_xi = self.gpc.n_xi();
            let mean_ff = KronSumOperator::new(
                mean_convection_terms(u_full, n_xi, &ff_factors),
                self.dims_u(),
                self.dims_u(),
            )?;
            let mean_p = KronSumOperator::new(
                mean_convection_terms(u_full, n_xi, &p_factors),
                self.dims_p(),
                self.dims_p(),
            )?;
            (Some(mean_ff), Some(mean_p), Some(self.mean_time_average(u_full)))
        } else {
            (None, None, None)
        };
        Ok(ConvOps {
            ff,
            fc,
            mean_ff,
            mean_p,
            w_avg,
            ranks,
        })
    }

    /// Average over the time steps of the mean stochastic component of a
    /// full velocity train.
    fn mean_time_average(&self, u_full: &TensorTrain3) -> Array1<f64> {
        let (k1, k2) = u_full.ranks();
        let n_t = self.n_t as f64;
        let mut out = Array1::zeros(self.spaces.n_full());
        for a1 in 0..k1 {
            let tavg: f64 = u_full.core1().column(a1).sum() / n_t;
            for a2 in 0..k2 {
                let w = tavg * u_full.core2()[[a1, 0, a2]];
                if w != 0.0 {
                    out.scaled_add(w, &u_full.core3().row(a2));
                }
            }
        }
        out
    }

    /// One application of the saddle operator with the given convection
    /// block. The velocity block is recompressed at `eps`; the outer solver
    /// truncates the stacked result again.
    pub fn apply_saddle(
        &self,
        f_op: &KronSumOperator,
        x: &TtPair,
        eps: f64,
    ) -> Result<TtPair, ProblemError> {
        let fu = f_op.apply_rounded(&x.u, eps)?;
        let btp = self.op_bt.apply(&x.p)?;
        let u = fu.add(&btp)?;
        let p = self.op_b.apply(&x.u)?;
        Ok(TtPair::new(u, p))
    }

    /// Nonlinear residual `f - L(u)[u; p]`, evaluated with the given
    /// convection package (built from the untruncated iterate). The sums
    /// are accumulated with the absolute budget `delta_abs` and the result
    /// is recompressed at `eps_out`.
    pub fn residual(
        &self,
        u: &TensorTrain3,
        p: &TensorTrain3,
        conv: &ConvOps,
        delta_abs: f64,
        eps_out: f64,
    ) -> Result<TtPair, ProblemError> {
        let lin = self.linear_ff.apply_round_abs(u, delta_abs)?;
        let conv_u = conv.ff.apply_round_abs(u, delta_abs)?;
        let conv_g = conv.fc.apply_round_abs(&self.g_tt, delta_abs)?;
        let btp = self.op_bt.apply(p)?;
        let ru = sum_round_abs(
            &[
                self.rhs.u.clone(),
                lin.scale(-1.0),
                conv_u.scale(-1.0),
                conv_g.scale(-1.0),
                btp.scale(-1.0),
            ],
            delta_abs,
        )?
        .round(eps_out);
        let bu = self.op_b.apply(u)?;
        let rp = sum_round_abs(&[self.rhs.p.clone(), bu.scale(-1.0)], delta_abs)?.round(eps_out);
        Ok(TtPair::new(ru, rp))
    }

    /// Norm of the discrete divergence of the physical velocity field
    /// (free part plus boundary data).
    pub fn divergence_norm(&self, u: &TensorTrain3) -> f64 {
        let bu = self.op_b.apply(u).expect("dims");
        let bg = self.op_bc.apply(&self.g_tt).expect("dims");
        bu.add(&bg).expect("dims").norm()
    }

    /// Spatial slice `w(k, s, .)` of a train as a nodal vector.
    pub fn slice_field(u: &TensorTrain3, k: usize, s: usize) -> Array1<f64> {
        let (_, _, n3) = u.mode_sizes();
        let (k1, k2) = u.ranks();
        let mut coeff = Array1::zeros(k2);
        for a1 in 0..k1 {
            let c1 = u.core1()[[k, a1]];
            if c1 == 0.0 {
                continue;
            }
            for a2 in 0..k2 {
                coeff[a2] += c1 * u.core2()[[a1, s, a2]];
            }
        }
        let mut out = Array1::zeros(n3);
        for a2 in 0..k2 {
            if coeff[a2] != 0.0 {
                out.scaled_add(coeff[a2], &u.core3().row(a2));
            }
        }
        out
    }
}

/// Sum of scaled sparse matrices, used when forming preconditioner blocks.
pub fn scaled_sum(mats: &[(&SpMat, f64)]) -> SpMat {
    let mut acc: Option<SpMat> = None;
    for (m, s) in mats {
        let scaled = crate::linalg::sp_scale(m, *s);
        acc = Some(match acc {
            None => scaled,
            Some(a) => crate::linalg::sp_add(&a, &scaled),
        });
    }
    acc.expect("nonempty sum")
}
