//! Three-mode tensor trains.
//!
//! A tensor `z` with mode sizes `(n1, n2, n3)` is stored as three cores
//!
//! ```text
//! z(i1, i2, i3) = sum_{a1, a2} core1(i1, a1) core2(a1, i2, a2) core3(a2, i3)
//! ```
//!
//! with ranks `(k1, k2)`. In the flow solver the modes are time, stochastic
//! basis index and space, in that order. Vectorization is row-major: the
//! space index varies fastest, the time index slowest.
//!
//! Rounding recompresses a tensor train to smaller ranks with a controlled
//! relative Frobenius error: a left-to-right QR sweep followed by a
//! right-to-left truncated-SVD sweep, so only core-sized factorizations are
//! ever formed. Construction from a dense tensor does truncated SVDs of the
//! two unfolding matrices directly.

use crate::linalg::{qr_thin, svd_thin};
use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use thiserror::Error;

/// Entry-count cap for dense conversions. Dense tensors are only used by
/// oracles and small verification problems.
pub const DENSE_CAP: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TtError {
    #[error("mode size mismatch: {0:?} vs {1:?}")]
    ModeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("dense tensor with {entries} entries exceeds cap {cap}")]
    DenseCap { entries: usize, cap: usize },
    #[error("inconsistent core dimensions: {0}")]
    BadCores(String),
}

/// Dense three-mode tensor, used by verification oracles only.
#[derive(Debug, Clone, PartialEq)]
pub struct FullTensor3(Array3<f64>);

impl FullTensor3 {
    pub fn new(data: Array3<f64>) -> Result<Self, TtError> {
        let entries = data.len();
        if entries > DENSE_CAP {
            return Err(TtError::DenseCap {
                entries,
                cap: DENSE_CAP,
            });
        }
        Ok(Self(data))
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.0
    }

    pub fn into_data(self) -> Array3<f64> {
        self.0
    }

    pub fn mode_sizes(&self) -> (usize, usize, usize) {
        let d = self.0.dim();
        (d.0, d.1, d.2)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Row-major flattening: `i3` fastest, `i1` slowest.
    pub fn to_vec(&self) -> Array1<f64> {
        Array1::from_iter(self.0.iter().cloned())
    }
}

/// Three-mode tensor train with cores `n1 x k1`, `k1 x n2 x k2`, `k2 x n3`.
#[derive(Debug, Clone)]
pub struct TensorTrain3 {
    core1: Array2<f64>,
    core2: Array3<f64>,
    core3: Array2<f64>,
}

impl TensorTrain3 {
    pub fn from_cores(
        core1: Array2<f64>,
        core2: Array3<f64>,
        core3: Array2<f64>,
    ) -> Result<Self, TtError> {
        let (n1, k1) = core1.dim();
        let (k1b, n2, k2) = core2.dim();
        let (k2b, n3) = core3.dim();
        if k1 != k1b || k2 != k2b {
            return Err(TtError::BadCores(format!(
                "rank chain {k1}-{k1b} / {k2}-{k2b}"
            )));
        }
        if n1 == 0 || n2 == 0 || n3 == 0 || k1 == 0 || k2 == 0 {
            return Err(TtError::BadCores("empty mode or rank".into()));
        }
        // Core contractions reshape views in place, which requires
        // contiguous row-major storage.
        let core1 = if core1.is_standard_layout() {
            core1
        } else {
            core1.as_standard_layout().to_owned()
        };
        let core2 = if core2.is_standard_layout() {
            core2
        } else {
            core2.as_standard_layout().to_owned()
        };
        let core3 = if core3.is_standard_layout() {
            core3
        } else {
            core3.as_standard_layout().to_owned()
        };
        Ok(Self {
            core1,
            core2,
            core3,
        })
    }

    /// Canonical zero tensor: ranks (1, 1), zero cores.
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            core1: Array2::zeros((n1, 1)),
            core2: Array3::zeros((1, n2, 1)),
            core3: Array2::zeros((1, n3)),
        }
    }

    /// Rank-(1,1) tensor `v1 x v2 x v3`.
    pub fn rank_one(
        v1: ArrayView1<'_, f64>,
        v2: ArrayView1<'_, f64>,
        v3: ArrayView1<'_, f64>,
    ) -> Self {
        let core1 = Array2::from_shape_fn((v1.len(), 1), |(i, _)| v1[i]);
        let core2 = Array3::from_shape_fn((1, v2.len(), 1), |(_, j, _)| v2[j]);
        let core3 = Array2::from_shape_fn((1, v3.len()), |(_, j)| v3[j]);
        Self {
            core1,
            core2,
            core3,
        }
    }

    pub fn core1(&self) -> &Array2<f64> {
        &self.core1
    }

    pub fn core2(&self) -> &Array3<f64> {
        &self.core2
    }

    pub fn core3(&self) -> &Array2<f64> {
        &self.core3
    }

    pub fn mode_sizes(&self) -> (usize, usize, usize) {
        (
            self.core1.nrows(),
            self.core2.dim().1,
            self.core3.ncols(),
        )
    }

    pub fn ranks(&self) -> (usize, usize) {
        (self.core1.ncols(), self.core3.nrows())
    }

    /// Number of stored coefficients: `n1 k1 + k1 n2 k2 + k2 n3`.
    pub fn storage(&self) -> usize {
        self.core1.len() + self.core2.len() + self.core3.len()
    }

    pub fn entry(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        let (k1, _, k2) = self.core2.dim();
        let mut acc = 0.0;
        for a1 in 0..k1 {
            let c1 = self.core1[[i1, a1]];
            if c1 == 0.0 {
                continue;
            }
            for a2 in 0..k2 {
                acc += c1 * self.core2[[a1, i2, a2]] * self.core3[[a2, i3]];
            }
        }
        acc
    }

    /// Exact contraction of the cores into a dense tensor.
    pub fn to_full(&self) -> Result<FullTensor3, TtError> {
        let (n1, n2, n3) = self.mode_sizes();
        let entries = n1 * n2 * n3;
        if entries > DENSE_CAP {
            return Err(TtError::DenseCap {
                entries,
                cap: DENSE_CAP,
            });
        }
        let (k1, _, k2) = self.core2.dim();
        // (n1 x k1) . (k1 x n2 k2) -> (n1 n2 x k2) . (k2 x n3)
        let c2 = self
            .core2
            .view()
            .into_shape_with_order((k1, n2 * k2))
            .expect("core2 reshape");
        let t12 = self.core1.dot(&c2); // n1 x (n2 k2)
        let t12 = reshape2(t12, (n1 * n2, k2));
        let full = t12.dot(&self.core3); // (n1 n2) x n3
        FullTensor3::new(reshape_2_to_3(full, (n1, n2, n3)))
    }

    /// Frobenius inner product of the represented tensors.
    pub fn dot(&self, other: &Self) -> Result<f64, TtError> {
        if self.mode_sizes() != other.mode_sizes() {
            return Err(TtError::ModeMismatch(
                self.mode_sizes(),
                other.mode_sizes(),
            ));
        }
        let w1 = self.core1.t().dot(&other.core1); // k1a x k1b
        let (_, n2, _) = self.core2.dim();
        let (k2a, k2b) = (self.core2.dim().2, other.core2.dim().2);
        let mut w2 = Array2::zeros((k2a, k2b));
        for i2 in 0..n2 {
            let a = self.core2.index_axis(Axis(1), i2); // k1a x k2a
            let b = other.core2.index_axis(Axis(1), i2); // k1b x k2b
            w2 += &a.t().dot(&w1).dot(&b);
        }
        let g3 = self.core3.dot(&other.core3.t()); // k2a x k2b
        Ok((&w2 * &g3).sum())
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).expect("same sizes").max(0.0).sqrt()
    }

    /// Exact sum; ranks add.
    pub fn add(&self, other: &Self) -> Result<Self, TtError> {
        if self.mode_sizes() != other.mode_sizes() {
            return Err(TtError::ModeMismatch(
                self.mode_sizes(),
                other.mode_sizes(),
            ));
        }
        let (n1, n2, n3) = self.mode_sizes();
        let (k1a, k2a) = self.ranks();
        let (k1b, k2b) = other.ranks();
        let mut core1 = Array2::zeros((n1, k1a + k1b));
        core1.slice_mut(ndarray::s![.., ..k1a]).assign(&self.core1);
        core1.slice_mut(ndarray::s![.., k1a..]).assign(&other.core1);
        let mut core2 = Array3::zeros((k1a + k1b, n2, k2a + k2b));
        core2
            .slice_mut(ndarray::s![..k1a, .., ..k2a])
            .assign(&self.core2);
        core2
            .slice_mut(ndarray::s![k1a.., .., k2a..])
            .assign(&other.core2);
        let mut core3 = Array2::zeros((k2a + k2b, n3));
        core3.slice_mut(ndarray::s![..k2a, ..]).assign(&self.core3);
        core3.slice_mut(ndarray::s![k2a.., ..]).assign(&other.core3);
        Ok(Self {
            core1,
            core2,
            core3,
        })
    }

    /// Scalar multiple; ranks unchanged (only the first core is scaled).
    pub fn scale(&self, s: f64) -> Self {
        Self {
            core1: &self.core1 * s,
            core2: self.core2.clone(),
            core3: self.core3.clone(),
        }
    }

    /// Recompression with relative Frobenius tolerance `eps`:
    /// `|result - self| <= eps |self|` and ranks never grow.
    pub fn round(&self, eps: f64) -> Self {
        let norm = self.norm();
        if norm == 0.0 {
            let (n1, n2, n3) = self.mode_sizes();
            return Self::zeros(n1, n2, n3);
        }
        self.round_with_budget(eps * norm)
    }

    /// Recompression with an absolute Frobenius error budget.
    pub fn round_abs(&self, delta: f64) -> Self {
        if self.norm() == 0.0 {
            let (n1, n2, n3) = self.mode_sizes();
            return Self::zeros(n1, n2, n3);
        }
        self.round_with_budget(delta)
    }

    fn round_with_budget(&self, delta_total: f64) -> Self {
        let (n1, n2, n3) = self.mode_sizes();
        let delta = delta_total / std::f64::consts::SQRT_2;

        // Left-to-right orthogonalization.
        let (q1, r1) = qr_thin(self.core1.view()); // n1 x k1', k1' x k1
        let k1p = q1.ncols();
        let (k1, _, k2) = self.core2.dim();
        let c2 = self
            .core2
            .view()
            .into_shape_with_order((k1, n2 * k2))
            .expect("core2 unfold");
        let c2 = r1.dot(&c2); // k1' x (n2 k2)
        let c2 = reshape2(c2, (k1p * n2, k2));
        let (q2, r2) = qr_thin(c2.view()); // (k1' n2) x k2', k2' x k2
        let k2p = q2.ncols();
        let c3 = r2.dot(&self.core3); // k2' x n3

        // Right-to-left truncation. The train is left-orthogonal, so each
        // SVD here sees the singular values of the corresponding global
        // unfolding.
        let (u3, s3, vt3) = svd_thin(c3.view());
        let r_2 = truncation_rank(&s3, delta);
        let core3 = vt3.slice(ndarray::s![..r_2, ..]).to_owned();
        let carry = scale_columns(u3.slice(ndarray::s![.., ..r_2]).to_owned(), &s3[..r_2]);
        let c2 = reshape2(q2, (k1p * n2, k2p)).dot(&carry); // (k1' n2) x r2
        let c2 = reshape2(c2, (k1p, n2 * r_2));
        let (u2, s2, vt2) = svd_thin(c2.view());
        let r_1 = truncation_rank(&s2, delta);
        let core2 = reshape_2_to_3(vt2.slice(ndarray::s![..r_1, ..]).to_owned(), (r_1, n2, r_2));
        let core1 = q1.dot(&scale_columns(
            u2.slice(ndarray::s![.., ..r_1]).to_owned(),
            &s2[..r_1],
        ));
        debug_assert_eq!(core1.nrows(), n1);
        debug_assert_eq!(core3.ncols(), n3);
        Self {
            core1,
            core2,
            core3,
        }
    }

    /// Builds a tensor train from a dense tensor by two truncated SVDs with
    /// per-split error budget `eps |t| / sqrt(2)`, so that the total relative
    /// error is at most `eps`.
    pub fn from_full(t: &FullTensor3, eps: f64) -> Self {
        let (n1, n2, n3) = t.mode_sizes();
        let norm = t.norm();
        if norm == 0.0 {
            return Self::zeros(n1, n2, n3);
        }
        let delta = eps * norm / std::f64::consts::SQRT_2;
        let z = t
            .data()
            .view()
            .into_shape_with_order((n1, n2 * n3))
            .expect("first unfold");
        let (u1, s1, vt1) = svd_thin(z);
        let k1 = truncation_rank(&s1, delta);
        let core1 = u1.slice(ndarray::s![.., ..k1]).to_owned();
        let rest = scale_rows(vt1.slice(ndarray::s![..k1, ..]).to_owned(), &s1[..k1]);
        let rest = reshape2(rest, (k1 * n2, n3));
        let (u2, s2, vt2) = svd_thin(rest.view());
        let k2 = truncation_rank(&s2, delta);
        let core2 = reshape_2_to_3(u2.slice(ndarray::s![.., ..k2]).to_owned(), (k1, n2, k2));
        let core3 = scale_rows(vt2.slice(ndarray::s![..k2, ..]).to_owned(), &s2[..k2]);
        Self {
            core1,
            core2,
            core3,
        }
    }
}

/// Smallest retained rank `r >= 1` such that the discarded singular-value
/// tail satisfies `sqrt(sum_{j >= r} s_j^2) <= delta`. Singular values tied
/// with the last retained one are kept, which makes the cut deterministic
/// across SVD backends. A floor of `1e-14 * s[0]` absorbs roundoff in the
/// factorization, so `delta = 0` still removes numerically zero values.
fn truncation_rank(s: &[f64], delta: f64) -> usize {
    let n = s.len();
    if n == 0 {
        return 1;
    }
    let delta = delta.max(1e-14 * s[0]);
    let budget = delta * delta;
    let mut tail = 0.0;
    let mut r = n;
    while r > 1 {
        let next = tail + s[r - 1] * s[r - 1];
        if next > budget {
            break;
        }
        tail = next;
        r -= 1;
    }
    while r < n && s[r] == s[r - 1] {
        r += 1;
    }
    r
}

fn scale_columns(mut a: Array2<f64>, s: &[f64]) -> Array2<f64> {
    for (j, &sj) in s.iter().enumerate() {
        a.column_mut(j).mapv_inplace(|v| v * sj);
    }
    a
}

fn scale_rows(mut a: Array2<f64>, s: &[f64]) -> Array2<f64> {
    for (i, &si) in s.iter().enumerate() {
        a.row_mut(i).mapv_inplace(|v| v * si);
    }
    a
}

// Row-major reshapes that tolerate non-standard layouts (single-row or
// single-column products sometimes come back with unusual strides).
fn reshape2(a: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if a.is_standard_layout() {
        a.into_shape_with_order(shape).expect("reshape2")
    } else {
        Array2::from_shape_vec(shape, a.iter().cloned().collect()).expect("reshape2 copy")
    }
}

fn reshape_2_to_3(a: Array2<f64>, shape: (usize, usize, usize)) -> Array3<f64> {
    if a.is_standard_layout() {
        a.into_shape_with_order(shape).expect("reshape 2->3")
    } else {
        Array3::from_shape_vec(shape, a.iter().cloned().collect()).expect("reshape 2->3 copy")
    }
}

/// Folds a list of tensor trains into their sum, recompressing after each
/// addition with an absolute error budget. The budget is split evenly in
/// quadrature across the folds, so the total extra error stays below
/// `delta_abs`.
pub fn sum_round_abs(parts: &[TensorTrain3], delta_abs: f64) -> Result<TensorTrain3, TtError> {
    assert!(!parts.is_empty(), "empty tensor sum");
    let folds = (parts.len().saturating_sub(1)).max(1) as f64;
    let per_fold = delta_abs / folds.sqrt();
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc = acc.add(p)?.round_abs(per_fold);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_full(rng: &mut ChaCha8Rng, n: (usize, usize, usize)) -> FullTensor3 {
        FullTensor3::new(Array3::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0))).unwrap()
    }

    fn random_tt(rng: &mut ChaCha8Rng, n: (usize, usize, usize), k: (usize, usize)) -> TensorTrain3 {
        TensorTrain3::from_cores(
            Array2::from_shape_fn((n.0, k.0), |_| rng.gen_range(-1.0..1.0)),
            Array3::from_shape_fn((k.0, n.1, k.1), |_| rng.gen_range(-1.0..1.0)),
            Array2::from_shape_fn((k.1, n.2), |_| rng.gen_range(-1.0..1.0)),
        )
        .unwrap()
    }

    fn dense_err(a: &TensorTrain3, b: &TensorTrain3) -> f64 {
        let fa = a.to_full().unwrap();
        let fb = b.to_full().unwrap();
        (fa.data() - fb.data()).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn rank_one_outer_product_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0_f64));
        let b = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0_f64));
        let c = Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0_f64));
        let full = FullTensor3::new(Array3::from_shape_fn((4, 3, 5), |(i, j, k)| {
            a[i] * b[j] * c[k]
        }))
        .unwrap();
        let tt = TensorTrain3::from_full(&full, 0.0);
        assert_eq!(tt.ranks(), (1, 1));
        let rec = tt.to_full().unwrap();
        let err = (rec.data() - full.data())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-12 * full.norm());
    }

    #[test]
    fn from_full_zero_eps_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let full = random_full(&mut rng, (4, 3, 5));
        let tt = TensorTrain3::from_full(&full, 0.0);
        let (k1, k2) = tt.ranks();
        assert!(k1 <= 4 && k2 <= 5);
        let rec = tt.to_full().unwrap();
        let err = (rec.data() - full.data())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-12 * full.norm(), "roundtrip err {err}");
    }

    #[test]
    fn from_full_lossy_respects_tolerance_and_compresses() {
        // Generic input with a decaying spectrum, like actual solver
        // iterates: a sum of rank-one terms with geometric weights plus a
        // small random perturbation.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut data = Array3::<f64>::zeros((6, 5, 4));
        for r in 0..4 {
            let a = Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0_f64));
            let b = Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0_f64));
            let c = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0_f64));
            let w = 0.3f64.powi(r);
            for ((i, j, k), v) in data.indexed_iter_mut() {
                *v += w * a[i] * b[j] * c[k];
            }
        }
        for v in data.iter_mut() {
            *v += 1e-4 * rng.gen_range(-1.0..1.0_f64);
        }
        let full = FullTensor3::new(data).unwrap();
        let tt = TensorTrain3::from_full(&full, 0.1);
        let exact = TensorTrain3::from_full(&full, 0.0);
        let rec = tt.to_full().unwrap();
        let err = (rec.data() - full.data())
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(err <= 0.1 * full.norm());
        let (k1, k2) = tt.ranks();
        let (e1, e2) = exact.ranks();
        assert!(k1 < e1 && k2 < e2, "ranks {k1},{k2} vs exact {e1},{e2}");
    }

    #[test]
    fn to_full_ones_and_zeros() {
        let ones = TensorTrain3::from_cores(
            Array2::ones((2, 1)),
            Array3::ones((1, 2, 1)),
            Array2::ones((1, 2)),
        )
        .unwrap();
        let full = ones.to_full().unwrap();
        assert!(full.data().iter().all(|&v| v == 1.0));

        let z = TensorTrain3::zeros(2, 2, 2);
        assert!(z.to_full().unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn round_lossless_and_zero_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = random_tt(&mut rng, (5, 4, 6), (3, 3));
        let r = z.round(0.0);
        assert!(r.ranks().0 <= 3 && r.ranks().1 <= 3);
        assert!(dense_err(&z, &r) <= 1e-12 * z.norm());

        // Pad ranks with zero blocks; rounding must recover the true ranks.
        let padded = z.add(&TensorTrain3::zeros(5, 4, 6).scale(0.0)).unwrap();
        let padded = padded.add(&z.scale(0.0)).unwrap();
        assert!(padded.ranks().0 > 3);
        let back = padded.round(1e-14);
        assert!(back.ranks().0 <= 3 && back.ranks().1 <= 3);
        assert!(dense_err(&back, &z) <= 1e-12 * z.norm());
    }

    #[test]
    fn round_lossy_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = random_tt(&mut rng, (6, 5, 7), (8, 8));
        let r = z.round(0.3);
        assert!(dense_err(&z, &r) <= 0.3 * z.norm());
        assert!(r.ranks().0 <= 8 && r.ranks().1 <= 8);
    }

    #[test]
    fn round_zero_tensor_canonical() {
        let z = TensorTrain3::zeros(3, 3, 3);
        let padded = z.add(&z).unwrap();
        let r = padded.round(0.0);
        assert_eq!(r.ranks(), (1, 1));
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn add_and_scale_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_tt(&mut rng, (4, 3, 5), (2, 3));
        let b = random_tt(&mut rng, (4, 3, 5), (3, 2));
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.ranks(), (5, 5));
        let fa = a.to_full().unwrap();
        let fb = b.to_full().unwrap();
        let fs = sum.to_full().unwrap();
        let err = (fs.data() - &(fa.data() + fb.data()))
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-12 * fs.norm().max(1.0));

        // a + (-a) rounds to zero
        let cancel = a.add(&a.scale(-1.0)).unwrap().round(1e-12);
        assert!(cancel.norm() <= 1e-12 * a.norm());

        // a + a = 2a elementwise
        let twice = a.add(&a).unwrap();
        let f2 = twice.to_full().unwrap();
        let err2 = (f2.data() - &(fa.data() * 2.0))
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(err2 <= 1e-12 * f2.norm());

        // scaling oracle
        let s = a.scale(-2.5);
        let fsm = s.to_full().unwrap();
        let err3 = (fsm.data() - &(fa.data() * -2.5))
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(err3 <= 1e-12 * fsm.norm());
        assert_eq!(s.ranks(), a.ranks());
        assert!(a.scale(0.0).norm() == 0.0);
        assert!(dense_err(&a.scale(1.0), &a) == 0.0);
    }

    #[test]
    fn dot_matches_dense_and_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_tt(&mut rng, (4, 3, 5), (2, 4));
        let b = random_tt(&mut rng, (4, 3, 5), (3, 2));
        let dense: f64 = (a.to_full().unwrap().data() * b.to_full().unwrap().data()).sum();
        let d = a.dot(&b).unwrap();
        assert!((d - dense).abs() <= 1e-12 * dense.abs().max(1.0));
        let n = a.norm();
        let dense_n = a.to_full().unwrap().norm();
        assert!((n - dense_n).abs() <= 1e-12 * dense_n);

        // disjoint support in mode 1 -> orthogonal
        let e0 = TensorTrain3::rank_one(
            array![1.0, 0.0].view(),
            array![1.0, 2.0].view(),
            array![3.0, 4.0].view(),
        );
        let e1 = TensorTrain3::rank_one(
            array![0.0, 1.0].view(),
            array![5.0, 6.0].view(),
            array![7.0, 8.0].view(),
        );
        assert_eq!(e0.dot(&e1).unwrap(), 0.0);
    }

    #[test]
    fn mode_mismatch_is_an_error() {
        let a = TensorTrain3::zeros(2, 2, 2);
        let b = TensorTrain3::zeros(2, 3, 2);
        assert!(matches!(a.add(&b), Err(TtError::ModeMismatch(_, _))));
        assert!(a.dot(&b).is_err());
    }

    #[test]
    fn dense_cap_enforced() {
        let t = TensorTrain3::zeros(300, 300, 300);
        assert!(matches!(t.to_full(), Err(TtError::DenseCap { .. })));
    }

    #[test]
    fn storage_count() {
        let t = TensorTrain3::from_cores(
            Array2::zeros((6, 2)),
            Array3::zeros((2, 5, 3)),
            Array2::zeros((3, 7)),
        )
        .unwrap();
        assert_eq!(t.storage(), 6 * 2 + 2 * 5 * 3 + 3 * 7);
    }

    #[test]
    fn sum_round_abs_matches_plain_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let parts: Vec<_> = (0..6).map(|_| random_tt(&mut rng, (4, 3, 5), (2, 2))).collect();
        let mut exact = parts[0].clone();
        for p in &parts[1..] {
            exact = exact.add(p).unwrap();
        }
        let summed = sum_round_abs(&parts, 1e-3).unwrap();
        assert!(dense_err(&summed, &exact) <= 1e-3 + 1e-12);
    }
}
