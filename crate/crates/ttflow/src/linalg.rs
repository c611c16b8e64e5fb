//! Small bridge layer between `ndarray` (tensor storage) and `faer`
//! (factorizations and sparse matrices).

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Sparse matrix type used for all operator factors.
pub type SpMat = SparseColMat<usize, f64>;

pub fn to_faer(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_ndarray(a: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Thin SVD: returns `(u, sigma, vt)` with `u: m x k`, `vt: k x n`,
/// `k = min(m, n)`, singular values in nonincreasing order.
pub fn svd_thin(a: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let svd = to_faer(a).thin_svd().expect("svd failed to converge");
    let k = a.nrows().min(a.ncols());
    let u = to_ndarray(svd.U());
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let v = svd.V();
    let vt = Array2::from_shape_fn((k, a.ncols()), |(i, j)| v[(j, i)]);
    (u, s, vt)
}

/// Thin QR: returns `(q, r)` with `q: m x k`, `r: k x n`, `k = min(m, n)`.
pub fn qr_thin(a: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
    let qr = to_faer(a).qr();
    let q = to_ndarray(qr.compute_thin_Q().as_ref());
    let r = to_ndarray(qr.thin_R());
    (q, r)
}

/// Eigendecomposition of a symmetric matrix. Returns `(values, vectors)`
/// with eigenvalues in nondecreasing order, eigenvectors as columns.
pub fn sym_eigen(a: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let evd = to_faer(a)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("eigendecomposition failed");
    let n = a.nrows();
    let vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    let vecs = to_ndarray(evd.U());
    (vals, vecs)
}

/// Dense LU solver handle for repeated right-hand sides.
pub struct DenseLu {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

impl DenseLu {
    pub fn new(a: ArrayView2<'_, f64>) -> Self {
        Self {
            lu: faer::linalg::solvers::PartialPivLu::new(to_faer(a).as_ref()),
        }
    }

    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        Array1::from_shape_fn(b.len(), |i| x[(i, 0)])
    }

    pub fn solve_mat(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let x = self.lu.solve(&to_faer(b));
        to_ndarray(x.as_ref())
    }
}

/// Dense Cholesky solver handle (symmetric positive definite input).
pub struct DenseCholesky {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl DenseCholesky {
    pub fn new(a: ArrayView2<'_, f64>) -> Option<Self> {
        faer::linalg::solvers::Llt::new(to_faer(a).as_ref(), faer::Side::Lower)
            .ok()
            .map(|llt| Self { llt })
    }

    pub fn solve_mat(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        to_ndarray(self.llt.solve(&to_faer(b)).as_ref())
    }
}

/// Sparse LU solver handle.
pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &SpMat) -> Result<Self, String> {
        let lu = a.sp_lu().map_err(|e| format!("sparse lu: {e:?}"))?;
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn solve_mat(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(b.nrows(), self.n);
        to_ndarray(self.lu.solve(&to_faer(b)).as_ref())
    }
}

/// Sparse Cholesky solver handle (SPD input).
pub struct SparseCholesky {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn new(a: &SpMat) -> Result<Self, String> {
        let llt = a
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| format!("sparse cholesky: {e:?}"))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn solve_mat(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(b.nrows(), self.n);
        to_ndarray(self.llt.solve(&to_faer(b)).as_ref())
    }
}

/// Builds a sparse matrix from triplets; duplicate entries are summed.
pub fn sp_from_triplets(nrows: usize, ncols: usize, trips: &[(usize, usize, f64)]) -> SpMat {
    let t: Vec<Triplet<usize, usize, f64>> = trips
        .iter()
        .filter(|(_, _, v)| *v != 0.0)
        .map(|&(i, j, v)| Triplet::new(i, j, v))
        .collect();
    SparseColMat::try_new_from_triplets(nrows, ncols, &t).expect("invalid triplets")
}

pub fn sp_identity(n: usize) -> SpMat {
    let trips: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
    sp_from_triplets(n, n, &trips)
}

pub fn sp_diag(d: &[f64]) -> SpMat {
    let trips: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
    sp_from_triplets(d.len(), d.len(), &trips)
}

/// Unit subdiagonal shift matrix: `(C x)_k = x_{k-1}`, first row zero.
pub fn sp_subdiag_shift(n: usize) -> SpMat {
    let trips: Vec<_> = (1..n).map(|i| (i, i - 1, 1.0)).collect();
    sp_from_triplets(n, n, &trips)
}

pub fn sp_iter(a: &SpMat) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    (0..a.ncols()).flat_map(move |j| {
        a.row_idx_of_col(j)
            .zip(a.val_of_col(j).iter())
            .map(move |(i, &v)| (i, j, v))
    })
}

pub fn sp_scale(a: &SpMat, s: f64) -> SpMat {
    let trips: Vec<_> = sp_iter(a).map(|(i, j, v)| (i, j, s * v)).collect();
    sp_from_triplets(a.nrows(), a.ncols(), &trips)
}

pub fn sp_add(a: &SpMat, b: &SpMat) -> SpMat {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut trips: Vec<_> = sp_iter(a).collect();
    trips.extend(sp_iter(b));
    sp_from_triplets(a.nrows(), a.ncols(), &trips)
}

pub fn sp_transpose(a: &SpMat) -> SpMat {
    let trips: Vec<_> = sp_iter(a).map(|(i, j, v)| (j, i, v)).collect();
    sp_from_triplets(a.ncols(), a.nrows(), &trips)
}

/// `(a + a^T) / 2`, exactly symmetric: each entry pair is the sum of the
/// same two halves, and floating-point addition is commutative.
pub fn sp_symmetrize(a: &SpMat) -> SpMat {
    assert_eq!(a.nrows(), a.ncols());
    let mut trips = Vec::with_capacity(2 * sp_nnz(a));
    for (i, j, v) in sp_iter(a) {
        trips.push((i, j, 0.5 * v));
        trips.push((j, i, 0.5 * v));
    }
    sp_from_triplets(a.nrows(), a.ncols(), &trips)
}

/// Extracts the submatrix with the given row and column index maps.
/// `row_map[i] = Some(r)` keeps row `i` as row `r` of the result.
pub fn sp_submatrix(
    a: &SpMat,
    row_map: &[Option<usize>],
    nrows: usize,
    col_map: &[Option<usize>],
    ncols: usize,
) -> SpMat {
    let trips: Vec<_> = sp_iter(a)
        .filter_map(|(i, j, v)| match (row_map[i], col_map[j]) {
            (Some(r), Some(c)) => Some((r, c, v)),
            _ => None,
        })
        .collect();
    sp_from_triplets(nrows, ncols, &trips)
}

/// 2x2 block-diagonal expansion `[a 0; 0 a]`, used to lift scalar-space
/// matrices to the two-component velocity space.
pub fn sp_block_diag2(a: &SpMat) -> SpMat {
    let (m, n) = (a.nrows(), a.ncols());
    let mut trips: Vec<_> = sp_iter(a).collect();
    trips.extend(sp_iter(a).map(|(i, j, v)| (i + m, j + n, v)));
    sp_from_triplets(2 * m, 2 * n, &trips)
}

/// `y = a * x` with a dense row-major right-hand side.
pub fn sp_mul_dense(a: &SpMat, x: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), x.nrows(), "sparse-dense dimension mismatch");
    let mut y = Array2::zeros((a.nrows(), x.ncols()));
    for j in 0..a.ncols() {
        let xr = x.row(j);
        for (i, &v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
            let mut yr = y.row_mut(i);
            yr.scaled_add(v, &xr);
        }
    }
    y
}

pub fn sp_mul_vec(a: &SpMat, x: ArrayView1<'_, f64>) -> Array1<f64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = Array1::zeros(a.nrows());
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (i, &v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
            y[i] += v * xj;
        }
    }
    y
}

pub fn sp_to_dense(a: &SpMat) -> Array2<f64> {
    let mut d = Array2::zeros((a.nrows(), a.ncols()));
    for (i, j, v) in sp_iter(a) {
        d[[i, j]] += v;
    }
    d
}

pub fn sp_nnz(a: &SpMat) -> usize {
    sp_iter(a).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn svd_reconstructs() {
        let a = array![[1.0, 2.0, 0.5], [0.0, 1.0, -1.0], [3.0, 0.0, 2.0], [1.0, 1.0, 1.0]];
        let (u, s, vt) = svd_thin(a.view());
        let mut rec = Array2::<f64>::zeros((4, 3));
        for k in 0..3 {
            for i in 0..4 {
                for j in 0..3 {
                    rec[[i, j]] += u[[i, k]] * s[k] * vt[[k, j]];
                }
            }
        }
        let err = (&rec - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-12, "svd reconstruction error {err}");
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn qr_orthonormal() {
        let a = array![[1.0, 2.0], [0.0, 1.0], [3.0, 0.0]];
        let (q, r) = qr_thin(a.view());
        let qtq = q.t().dot(&q);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - expect).abs() < 1e-12);
            }
        }
        let err = (&q.dot(&r) - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-12);
    }

    #[test]
    fn sparse_roundtrip_and_products() {
        let a = sp_from_triplets(3, 2, &[(0, 0, 1.0), (2, 1, 4.0), (0, 0, 1.0)]);
        assert_eq!(sp_nnz(&a), 2); // duplicates summed
        let x = array![[1.0, 0.0], [0.0, 2.0]];
        let y = sp_mul_dense(&a, x.view());
        assert_eq!(y[[0, 0]], 2.0);
        assert_eq!(y[[2, 1]], 8.0);
        let at = sp_transpose(&a);
        assert_eq!(sp_to_dense(&at)[[0, 0]], 2.0);
        assert_eq!(sp_to_dense(&at)[[1, 2]], 4.0);
    }

    #[test]
    fn submatrix_extraction() {
        let a = sp_from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0), (0, 2, 5.0)]);
        let rm = vec![Some(0), None, Some(1)];
        let cm = vec![None, Some(0), Some(1)];
        let s = sp_submatrix(&a, &rm, 2, &cm, 2);
        let d = sp_to_dense(&s);
        assert_eq!(d[[0, 1]], 5.0);
        assert_eq!(d[[1, 1]], 3.0);
        assert_eq!(d[[0, 0]], 0.0);
    }

    #[test]
    fn sparse_solvers() {
        let a = sp_from_triplets(
            2,
            2,
            &[(0, 0, 4.0), (1, 1, 3.0), (0, 1, 1.0), (1, 0, 1.0)],
        );
        let b = array![[5.0], [4.0]];
        let lu = SparseLu::new(&a).unwrap();
        let x = lu.solve_mat(b.view());
        assert!((x[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((x[[1, 0]] - 1.0).abs() < 1e-12);
        let chol = SparseCholesky::new(&a).unwrap();
        let xc = chol.solve_mat(b.view());
        assert!((xc[[0, 0]] - 1.0).abs() < 1e-12);
    }
}
