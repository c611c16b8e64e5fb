//! Kronecker-sum operators.
//!
//! Every block of the all-at-once system is a sum of triple Kronecker
//! products `sum_t X1_t (x) X2_t (x) X3_t`, with a time factor, a stochastic
//! factor and a spatial factor. The sum is never materialized: applying a
//! term to a tensor train multiplies each factor into the matching core, and
//! the per-term results are concatenated, so `T` terms multiply the ranks
//! by `T` before any recompression.

use crate::linalg::{sp_mul_dense, SpMat};
use crate::tt::{TensorTrain3, TtError};
use ndarray::{Array2, Array3, ArrayView2, Axis};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KronError {
    #[error("operator column sizes {expected:?} do not match tensor modes {got:?}")]
    DimMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("term {index} has inconsistent factor shapes")]
    BadTerm { index: usize },
    #[error(transparent)]
    Tt(#[from] TtError),
}

/// One factor of a Kronecker term. Time and spatial factors are sparse;
/// the stochastic factors of the convection operator are dense mixtures of
/// the triple-product matrices and stay dense by construction.
#[derive(Debug, Clone)]
pub enum Factor {
    Sparse(Arc<SpMat>),
    Dense(Arc<Array2<f64>>),
}

impl Factor {
    pub fn sparse(m: SpMat) -> Self {
        Factor::Sparse(Arc::new(m))
    }

    pub fn dense(m: Array2<f64>) -> Self {
        Factor::Dense(Arc::new(m))
    }

    pub fn nrows(&self) -> usize {
        match self {
            Factor::Sparse(m) => m.nrows(),
            Factor::Dense(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Factor::Sparse(m) => m.ncols(),
            Factor::Dense(m) => m.ncols(),
        }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            Factor::Sparse(m) => sp_mul_dense(m, x),
            Factor::Dense(m) => m.dot(&x),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Factor::Sparse(m) => crate::linalg::sp_to_dense(m),
            Factor::Dense(m) => m.as_ref().clone(),
        }
    }
}

/// A single triple Kronecker product `time (x) stoch (x) space`.
#[derive(Debug, Clone)]
pub struct KronTerm {
    pub time: Factor,
    pub stoch: Factor,
    pub space: Factor,
}

impl KronTerm {
    pub fn new(time: Factor, stoch: Factor, space: Factor) -> Self {
        Self { time, stoch, space }
    }

    fn row_dims(&self) -> (usize, usize, usize) {
        (self.time.nrows(), self.stoch.nrows(), self.space.nrows())
    }

    fn col_dims(&self) -> (usize, usize, usize) {
        (self.time.ncols(), self.stoch.ncols(), self.space.ncols())
    }
}

/// Ordered sum of Kronecker terms with consistent row and column mode sizes.
/// An empty term list is the zero operator.
#[derive(Debug, Clone)]
pub struct KronSumOperator {
    terms: Vec<KronTerm>,
    row_dims: (usize, usize, usize),
    col_dims: (usize, usize, usize),
}

/// Rank budget for chunked application: terms are grouped so that the
/// intermediate concatenated ranks stay near this size before recompression.
const CHUNK_RANK_BUDGET: usize = 384;

impl KronSumOperator {
    pub fn new(
        terms: Vec<KronTerm>,
        row_dims: (usize, usize, usize),
        col_dims: (usize, usize, usize),
    ) -> Result<Self, KronError> {
        for (index, t) in terms.iter().enumerate() {
            if t.row_dims() != row_dims || t.col_dims() != col_dims {
                return Err(KronError::BadTerm { index });
            }
        }
        Ok(Self {
            terms,
            row_dims,
            col_dims,
        })
    }

    pub fn identity(dims: (usize, usize, usize)) -> Self {
        let term = KronTerm::new(
            Factor::sparse(crate::linalg::sp_identity(dims.0)),
            Factor::sparse(crate::linalg::sp_identity(dims.1)),
            Factor::sparse(crate::linalg::sp_identity(dims.2)),
        );
        Self {
            terms: vec![term],
            row_dims: dims,
            col_dims: dims,
        }
    }

    pub fn zero(row_dims: (usize, usize, usize), col_dims: (usize, usize, usize)) -> Self {
        Self {
            terms: Vec::new(),
            row_dims,
            col_dims,
        }
    }

    pub fn terms(&self) -> &[KronTerm] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn row_dims(&self) -> (usize, usize, usize) {
        self.row_dims
    }

    pub fn col_dims(&self) -> (usize, usize, usize) {
        self.col_dims
    }

    /// Concatenation of two operators acting on the same spaces; applying
    /// the result is applying the sum.
    pub fn concat(&self, other: &Self) -> Result<Self, KronError> {
        if self.row_dims != other.row_dims || self.col_dims != other.col_dims {
            return Err(KronError::DimMismatch {
                expected: self.col_dims,
                got: other.col_dims,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            terms,
            row_dims: self.row_dims,
            col_dims: self.col_dims,
        })
    }

    fn check_input(&self, z: &TensorTrain3) -> Result<(), KronError> {
        if z.mode_sizes() != self.col_dims {
            return Err(KronError::DimMismatch {
                expected: self.col_dims,
                got: z.mode_sizes(),
            });
        }
        Ok(())
    }

    fn apply_term(&self, term: &KronTerm, z: &TensorTrain3) -> TensorTrain3 {
        let (k1, _, k2) = z.core2().dim();
        let core1 = term.time.apply(z.core1().view());
        let n2_out = term.stoch.nrows();
        let mut core2 = Array3::zeros((k1, n2_out, k2));
        for a1 in 0..k1 {
            let slice = z.core2().index_axis(Axis(0), a1); // n2 x k2
            core2
                .index_axis_mut(Axis(0), a1)
                .assign(&term.stoch.apply(slice));
        }
        let c3t = z.core3().t().to_owned(); // n3 x k2
        let core3 = term.space.apply(c3t.view()).t().to_owned(); // k2 x n3_out
        TensorTrain3::from_cores(core1, core2, core3).expect("term application")
    }

    /// Exact application. Output ranks are `(T k1, T k2)` for `T` terms.
    pub fn apply(&self, z: &TensorTrain3) -> Result<TensorTrain3, KronError> {
        self.check_input(z)?;
        if self.terms.is_empty() {
            return Ok(TensorTrain3::zeros(
                self.row_dims.0,
                self.row_dims.1,
                self.row_dims.2,
            ));
        }
        let mut acc: Option<TensorTrain3> = None;
        for term in &self.terms {
            let part = self.apply_term(term, z);
            acc = Some(match acc {
                None => part,
                Some(a) => a.add(&part)?,
            });
        }
        Ok(acc.unwrap())
    }

    fn chunk_count(&self, z: &TensorTrain3) -> usize {
        let (k1, k2) = z.ranks();
        let per_chunk = (CHUNK_RANK_BUDGET / k1.max(k2).max(1)).max(1);
        self.terms.len().div_ceil(per_chunk).max(1)
    }

    fn apply_chunked<R>(&self, z: &TensorTrain3, round: R) -> Result<TensorTrain3, KronError>
    where
        R: Fn(&TensorTrain3) -> TensorTrain3,
    {
        if self.terms.is_empty() {
            return Ok(TensorTrain3::zeros(
                self.row_dims.0,
                self.row_dims.1,
                self.row_dims.2,
            ));
        }
        let chunks = self.chunk_count(z);
        let per_chunk = self.terms.len().div_ceil(chunks);
        let mut acc: Option<TensorTrain3> = None;
        for group in self.terms.chunks(per_chunk) {
            let mut part: Option<TensorTrain3> = None;
            for term in group {
                let t = self.apply_term(term, z);
                part = Some(match part {
                    None => t,
                    Some(p) => p.add(&t)?,
                });
            }
            let part = part.unwrap();
            acc = Some(match acc {
                None => round(&part),
                Some(a) => round(&a.add(&part)?),
            });
        }
        Ok(acc.unwrap())
    }

    /// Application followed by recompression at relative tolerance `eps`.
    /// Terms are processed in chunks and the running sum is recompressed
    /// after each chunk with a proportionally tighter tolerance, so the
    /// result stays within `eps` of the exact product for mild cancellation.
    pub fn apply_rounded(&self, z: &TensorTrain3, eps: f64) -> Result<TensorTrain3, KronError> {
        self.check_input(z)?;
        let chunks = self.chunk_count(z) as f64;
        let eps_fold = eps / (2.0 * chunks.sqrt());
        let out = self.apply_chunked(z, |t| t.round(eps_fold))?;
        Ok(out.round(eps / 2.0))
    }

    /// Application with an absolute recompression budget, used where the
    /// result may feed the small difference of large intermediates
    /// (nonlinear residuals). The budget is split in quadrature over chunks.
    pub fn apply_round_abs(&self, z: &TensorTrain3, delta: f64) -> Result<TensorTrain3, KronError> {
        self.check_input(z)?;
        let chunks = self.chunk_count(z) as f64;
        let per_fold = delta / chunks.sqrt();
        self.apply_chunked(z, |t| t.round_abs(per_fold))
    }

    /// Dense expansion `sum_t X1_t (x) X2_t (x) X3_t` for oracle checks.
    pub fn to_dense(&self) -> Array2<f64> {
        let (r1, r2, r3) = self.row_dims;
        let (c1, c2, c3) = self.col_dims;
        let mut out = Array2::zeros((r1 * r2 * r3, c1 * c2 * c3));
        for term in &self.terms {
            let d = crate::dense::kron3(
                term.time.to_dense().view(),
                term.stoch.to_dense().view(),
                term.space.to_dense().view(),
            );
            out += &d;
        }
        out
    }
}

/// `tau^{-1} I (x) I (x) M + sum_l I (x) G_l (x) A_l`, the linear part of
/// the velocity block, concatenated with the convection terms.
pub fn build_f(
    tau: f64,
    n_t: usize,
    mass: &Arc<SpMat>,
    g_mats: &[Arc<SpMat>],
    stiff: &[Arc<SpMat>],
    conv: &KronSumOperator,
) -> Result<KronSumOperator, KronError> {
    assert_eq!(g_mats.len(), stiff.len(), "one G_l per weighted stiffness");
    let n_xi = g_mats[0].nrows();
    let dims_row = (n_t, n_xi, mass.nrows());
    let dims_col = (n_t, n_xi, mass.ncols());
    let ident_t = Arc::new(crate::linalg::sp_identity(n_t));
    let mut terms = vec![KronTerm::new(
        Factor::sparse(crate::linalg::sp_scale(
            &crate::linalg::sp_identity(n_t),
            1.0 / tau,
        )),
        Factor::sparse(crate::linalg::sp_identity(n_xi)),
        Factor::Sparse(mass.clone()),
    )];
    for (g, a) in g_mats.iter().zip(stiff) {
        terms.push(KronTerm::new(
            Factor::Sparse(ident_t.clone()),
            Factor::Sparse(g.clone()),
            Factor::Sparse(a.clone()),
        ));
    }
    let linear = KronSumOperator::new(terms, dims_row, dims_col)?;
    linear.concat(conv)
}

/// `-tau^{-1} C (x) I (x) M` with `C` the unit subdiagonal shift. Couples
/// each time step to the previous one.
pub fn build_c(
    tau: f64,
    n_t: usize,
    n_xi: usize,
    mass: &Arc<SpMat>,
) -> Result<KronSumOperator, KronError> {
    let shift = crate::linalg::sp_scale(&crate::linalg::sp_subdiag_shift(n_t), -1.0 / tau);
    KronSumOperator::new(
        vec![KronTerm::new(
            Factor::sparse(shift),
            Factor::sparse(crate::linalg::sp_identity(n_xi)),
            Factor::Sparse(mass.clone()),
        )],
        (n_t, n_xi, mass.nrows()),
        (n_t, n_xi, mass.ncols()),
    )
}

/// `I (x) I (x) B` for a (possibly rectangular) spatial matrix.
pub fn build_spatial(n_t: usize, n_xi: usize, b: &Arc<SpMat>) -> KronSumOperator {
    KronSumOperator::new(
        vec![KronTerm::new(
            Factor::sparse(crate::linalg::sp_identity(n_t)),
            Factor::sparse(crate::linalg::sp_identity(n_xi)),
            Factor::Sparse(b.clone()),
        )],
        (n_t, n_xi, b.nrows()),
        (n_t, n_xi, b.ncols()),
    )
    .expect("single-term operator")
}

/// Kronecker structure of the convection operator built from a velocity
/// iterate in tensor-train form. For ranks `(k1, k2)` the operator has
/// `k1 k2` terms
///
/// ```text
/// diag(u1[:, a1]) (x) sum_l u2(a1, l, a2) H_l (x) N(u3[a2, :])
/// ```
///
/// The spatial convection matrices depend only on `a2`; the caller
/// assembles them once each (`spatial[a2]`) and the factors are shared
/// across terms.
pub fn convection_terms(u: &TensorTrain3, h_mats: &[Arc<SpMat>], spatial: &[Factor]) -> Vec<KronTerm> {
    let (k1, k2) = u.ranks();
    let n_xi = h_mats.len();
    assert_eq!(u.mode_sizes().1, n_xi, "one H_l per stochastic basis entry");
    assert_eq!(spatial.len(), k2, "one spatial factor per right rank index");
    let space = spatial;
    let time: Vec<Factor> = (0..k1)
        .map(|a1| {
            Factor::sparse(crate::linalg::sp_diag(
                u.core1().column(a1).to_owned().as_slice().unwrap(),
            ))
        })
        .collect();
    let mut terms = Vec::with_capacity(k1 * k2);
    for a1 in 0..k1 {
        for (a2, space_factor) in space.iter().enumerate() {
            let mut mix = Array2::zeros((n_xi, n_xi));
            for (l, h) in h_mats.iter().enumerate() {
                let w = u.core2()[[a1, l, a2]];
                if w != 0.0 {
                    for (i, j, v) in crate::linalg::sp_iter(h) {
                        mix[[i, j]] += w * v;
                    }
                }
            }
            terms.push(KronTerm::new(
                time[a1].clone(),
                Factor::dense(mix),
                space_factor.clone(),
            ));
        }
    }
    terms
}

/// Mean-field variant of [`convection_terms`]: only the first stochastic
/// component of the velocity enters and the middle factor collapses to a
/// multiple of the identity.
pub fn mean_convection_terms(u: &TensorTrain3, n_xi: usize, spatial: &[Factor]) -> Vec<KronTerm> {
    let (k1, k2) = u.ranks();
    assert_eq!(spatial.len(), k2, "one spatial factor per right rank index");
    let space = spatial;
    let mut terms = Vec::with_capacity(k1 * k2);
    for a1 in 0..k1 {
        let time = Factor::sparse(crate::linalg::sp_diag(
            u.core1().column(a1).to_owned().as_slice().unwrap(),
        ));
        for (a2, space_factor) in space.iter().enumerate() {
            let w = u.core2()[[a1, 0, a2]];
            terms.push(KronTerm::new(
                time.clone(),
                Factor::sparse(crate::linalg::sp_scale(
                    &crate::linalg::sp_identity(n_xi),
                    w,
                )),
                space_factor.clone(),
            ));
        }
    }
    terms
}
