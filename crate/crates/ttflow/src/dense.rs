//! Dense reference computations.
//!
//! Everything here works on explicitly formed matrices and vectors and is
//! used to verify the low-rank path: Kronecker expansions, a plain (dense,
//! truncation-free) flexible GMRES, and an exact block-triangular
//! saddle-point preconditioner.

use crate::linalg::{to_faer, to_ndarray, DenseLu};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Dense triple Kronecker product `a (x) b (x) c`.
pub fn kron3(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, c: ArrayView2<'_, f64>) -> Array2<f64> {
    let ab = kron2(a, b);
    kron2(ab.view(), c)
}

pub fn kron2(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (ma, na) = a.dim();
    let (mb, nb) = b.dim();
    let mut out = Array2::zeros((ma * mb, na * nb));
    for i in 0..ma {
        for j in 0..na {
            let v = a[[i, j]];
            if v == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * mb..(i + 1) * mb, j * nb..(j + 1) * nb]);
            block.assign(&b);
            block.mapv_inplace(|x| x * v);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct DenseGmresOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Flexible GMRES on dense vectors, no restarts, no truncation. The
/// preconditioned directions are stored so the preconditioner may vary
/// between iterations (or be an inner iterative solve).
pub fn gmres_dense<A, P>(
    apply: A,
    b: ArrayView1<'_, f64>,
    tol: f64,
    maxit: usize,
    prec: P,
) -> (Array1<f64>, DenseGmresOutcome)
where
    A: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
    P: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
{
    let n = b.len();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return (
            Array1::zeros(n),
            DenseGmresOutcome {
                iterations: 0,
                rel_residual: 0.0,
                converged: true,
                history: vec![0.0],
            },
        );
    }
    let beta = b_norm;
    let mut v: Vec<Array1<f64>> = vec![b.to_owned() / beta];
    let mut zdirs: Vec<Array1<f64>> = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new(); // columns of the Hessenberg matrix
    let mut history = vec![1.0];
    let mut best: Option<(Array1<f64>, f64)> = None;

    for k in 0..maxit {
        let zk = prec(v[k].view());
        let mut w = apply(zk.view());
        zdirs.push(zk);
        let mut col = Vec::with_capacity(k + 2);
        for vi in v.iter() {
            let hik: f64 = w.dot(vi);
            w.scaled_add(-hik, vi);
            col.push(hik);
        }
        let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        col.push(wnorm);
        h.push(col);

        // Solve the small least-squares problem min |beta e1 - H y|.
        let rows = k + 2;
        let hm = Array2::from_shape_fn((rows, k + 1), |(i, j)| {
            if i < h[j].len() {
                h[j][i]
            } else {
                0.0
            }
        });
        let mut rhs = Array1::zeros(rows);
        rhs[0] = beta;
        let y = lstsq(hm.view(), rhs.view());
        let res = {
            let r = &hm.dot(&y) - &rhs;
            r.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        let rel = res / b_norm;
        history.push(rel);
        let x: Array1<f64> = zdirs
            .iter()
            .zip(y.iter())
            .fold(Array1::zeros(n), |mut acc, (z, &yi)| {
                acc.scaled_add(yi, z);
                acc
            });
        if best.as_ref().map(|(_, r)| rel < *r).unwrap_or(true) {
            best = Some((x, rel));
        }
        if rel <= tol || wnorm <= 1e-14 * b_norm {
            let (x, rel) = best.unwrap();
            return (
                x,
                DenseGmresOutcome {
                    iterations: k + 1,
                    rel_residual: rel,
                    converged: rel <= tol,
                    history,
                },
            );
        }
        v.push(w / wnorm);
    }
    let (x, rel) = best.unwrap();
    let converged = rel <= tol;
    (
        x,
        DenseGmresOutcome {
            iterations: maxit,
            rel_residual: rel,
            converged,
            history,
        },
    )
}

fn lstsq(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    use faer::linalg::solvers::SolveLstsq;
    let qr = to_faer(a).qr();
    let rhs = faer::Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let sol = qr.solve_lstsq(&rhs);
    Array1::from_shape_fn(a.ncols(), |i| sol[(i, 0)])
}

/// Exact block-triangular preconditioner for a dense saddle matrix
/// `[fc bt; b 0]`: exact (1,1)-solve and exact Schur complement. With this
/// preconditioner a right-preconditioned GMRES converges in two steps.
pub struct IdealBlockTriangular {
    fc_lu: DenseLu,
    schur_lu: DenseLu,
    bt: Array2<f64>,
    n_u: usize,
    n_p: usize,
}

impl IdealBlockTriangular {
    pub fn new(fc: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Self {
        let n_u = fc.nrows();
        let n_p = b.nrows();
        let fc_lu = DenseLu::new(fc);
        let bt = b.t().to_owned();
        // S = B (F + C)^{-1} B^T
        let fcinv_bt = fc_lu.solve_mat(bt.view());
        let schur = b.dot(&fcinv_bt);
        let schur_lu = DenseLu::new(schur.view());
        Self {
            fc_lu,
            schur_lu,
            bt,
            n_u,
            n_p,
        }
    }

    /// Applies `P^{-1}` for `P = [fc bt; 0 -schur]`.
    pub fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let vu = v.slice(ndarray::s![..self.n_u]);
        let vp = v.slice(ndarray::s![self.n_u..]);
        let p_hat = -self.schur_lu.solve(vp);
        let rhs = &vu.to_owned() - &self.bt.dot(&p_hat);
        let u_hat = self.fc_lu.solve(rhs.view());
        let mut out = Array1::zeros(self.n_u + self.n_p);
        out.slice_mut(ndarray::s![..self.n_u]).assign(&u_hat);
        out.slice_mut(ndarray::s![self.n_u..]).assign(&p_hat);
        out
    }
}

/// Dense LU solve of `a x = b` in one call.
pub fn solve_dense(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    DenseLu::new(a).solve(b)
}

/// Symmetric eigenvalue range check helper used by tests.
pub fn spectral_norm(a: ArrayView2<'_, f64>) -> f64 {
    let svd = to_faer(a).thin_svd().expect("svd");
    if a.nrows().min(a.ncols()) == 0 {
        return 0.0;
    }
    svd.S()[0]
}

/// Frobenius-orthonormality defect `|q^T q - I|_F`.
pub fn orthonormality_defect(q: ArrayView2<'_, f64>) -> f64 {
    let g = q.t().dot(&q);
    let n = g.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = if i == j { 1.0 } else { 0.0 };
            s += (g[[i, j]] - e).powi(2);
        }
    }
    s.sqrt()
}

pub fn dense_mat_from(m: faer::MatRef<'_, f64>) -> Array2<f64> {
    to_ndarray(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_shapes_and_values() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[0.0, 1.0], [1.0, 0.0]];
        let k = kron2(a.view(), b.view());
        assert_eq!(k.dim(), (4, 4));
        assert_eq!(k[[0, 1]], 1.0);
        assert_eq!(k[[0, 3]], 2.0);
        assert_eq!(k[[3, 0]], 3.0);
        let k3 = kron3(a.view(), b.view(), a.view());
        assert_eq!(k3.dim(), (8, 8));
    }

    #[test]
    fn gmres_solves_small_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 12;
        let mut a = Array2::from_shape_fn((n, n), |_| rng.gen_range(-0.3..0.3));
        for i in 0..n {
            a[[i, i]] += 3.0;
        }
        let xtrue = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0_f64));
        let b = a.dot(&xtrue);
        let (x, out) = gmres_dense(
            |v| a.dot(&v.to_owned()),
            b.view(),
            1e-12,
            50,
            |v| v.to_owned(),
        );
        assert!(out.converged);
        let err = (&x - &xtrue).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-9, "gmres error {err}");
    }

    #[test]
    fn ideal_preconditioner_two_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n_u = 10;
        let n_p = 4;
        let mut fc = Array2::from_shape_fn((n_u, n_u), |_| rng.gen_range(-0.2..0.2));
        for i in 0..n_u {
            fc[[i, i]] += 2.0;
        }
        let b = Array2::from_shape_fn((n_p, n_u), |_| rng.gen_range(-1.0..1.0));
        let mut a = Array2::zeros((n_u + n_p, n_u + n_p));
        a.slice_mut(ndarray::s![..n_u, ..n_u]).assign(&fc);
        a.slice_mut(ndarray::s![..n_u, n_u..]).assign(&b.t());
        a.slice_mut(ndarray::s![n_u.., ..n_u]).assign(&b);
        let prec = IdealBlockTriangular::new(fc.view(), b.view());
        let rhs = Array1::from_shape_fn(n_u + n_p, |_| rng.gen_range(-1.0..1.0_f64));
        let (_, out) = gmres_dense(
            |v| a.dot(&v.to_owned()),
            rhs.view(),
            1e-10,
            10,
            |v| prec.apply(v),
        );
        assert!(out.converged, "ideal preconditioner did not converge");
        assert!(
            out.iterations <= 2,
            "expected <= 2 iterations, got {}",
            out.iterations
        );
    }
}
