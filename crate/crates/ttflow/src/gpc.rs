//! Generalized polynomial chaos basis.
//!
//! The random variables are independent and uniform on `[-sqrt(3), sqrt(3)]`
//! (zero mean, unit variance). The basis consists of products of rescaled
//! Legendre polynomials over all multi-indices with total degree at most
//! `d_psi`, orthonormalized against the joint density. The first basis
//! function is identically one, and the basis functions of degree one are
//! the variables themselves: `psi_{1+l} = xi_l`.

use crate::linalg::{sp_from_triplets, SpMat};
use std::sync::Arc;

/// Half-width of the uniform distribution support.
pub const XI_BOUND: f64 = 1.732_050_807_568_877_2; // sqrt(3)

/// Multi-index Legendre basis.
#[derive(Debug, Clone)]
pub struct GpcBasis {
    m: usize,
    d_psi: usize,
    multi_indices: Vec<Vec<usize>>,
    /// `norms[k]` is the L2 norm of the univariate degree-k factor before
    /// normalization; computed once by quadrature.
    norms: Vec<f64>,
}

impl GpcBasis {
    /// Builds the basis for `m` random variables and total degree `d_psi`.
    /// The multi-indices are ordered by total degree, and within a degree
    /// in descending lexicographic order, so that index 0 is the constant
    /// and indices `1..=m` are the degree-one monomials in order.
    pub fn new(m: usize, d_psi: usize) -> Self {
        let mut multi_indices = Vec::new();
        let mut current = vec![0usize; m];
        gen_indices(&mut multi_indices, &mut current, 0, d_psi);
        multi_indices.sort_by(|a, b| {
            let da: usize = a.iter().sum();
            let db: usize = b.iter().sum();
            da.cmp(&db).then_with(|| b.cmp(a))
        });
        let norms = univariate_norms(d_psi);
        Self {
            m,
            d_psi,
            multi_indices,
            norms,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d_psi(&self) -> usize {
        self.d_psi
    }

    /// Basis size `(m + d_psi)! / (m! d_psi!)`.
    pub fn n_xi(&self) -> usize {
        self.multi_indices.len()
    }

    pub fn multi_indices(&self) -> &[Vec<usize>] {
        &self.multi_indices
    }

    /// Evaluates the normalized univariate factor of degree `k`.
    pub fn eval_univariate(&self, k: usize, xi: f64) -> f64 {
        legendre(k, xi / XI_BOUND) / self.norms[k]
    }

    /// Evaluates `psi_r` (0-based index) at a sample point.
    pub fn eval(&self, r: usize, xi: &[f64]) -> f64 {
        assert_eq!(xi.len(), self.m);
        self.multi_indices[r]
            .iter()
            .zip(xi)
            .map(|(&k, &x)| self.eval_univariate(k, x))
            .product()
    }
}

fn gen_indices(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, left: usize) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    for v in 0..=left {
        current[pos] = v;
        gen_indices(out, current, pos + 1, left - v);
    }
    current[pos] = 0;
}

/// Standard Legendre polynomial `P_k` on `[-1, 1]` by the three-term
/// recurrence.
fn legendre(k: usize, t: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => t,
        _ => {
            let mut pm1 = 1.0;
            let mut p = t;
            for n in 1..k {
                let next = ((2 * n + 1) as f64 * t * p - n as f64 * pm1) / (n + 1) as f64;
                pm1 = p;
                p = next;
            }
            p
        }
    }
}

/// Univariate normalization constants, computed by Gauss quadrature exact
/// for the squared polynomials.
fn univariate_norms(d_psi: usize) -> Vec<f64> {
    let (pts, wts) = gauss_legendre_unit(d_psi + 1);
    (0..=d_psi)
        .map(|k| {
            let s: f64 = pts
                .iter()
                .zip(&wts)
                .map(|(&x, &w)| w * legendre(k, x / XI_BOUND).powi(2))
                .sum();
            s.sqrt()
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre polynomial roots.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        pts[i] = -x.abs();
        pts[n - 1 - i] = x.abs();
        wts[i] = w;
        wts[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        pts[n / 2] = 0.0;
    }
    (pts, wts)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut pm1 = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * p - k as f64 * pm1) / (k + 1) as f64;
        pm1 = p;
        p = next;
    }
    let dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
    (p, dp)
}

/// Nodes and weights for the uniform density on `[-XI_BOUND, XI_BOUND]`:
/// the weights sum to one.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (pts, wts) = gauss_legendre(n);
    (
        pts.iter().map(|&t| t * XI_BOUND).collect(),
        wts.iter().map(|&w| w / 2.0).collect(),
    )
}

/// Sparse triple-product matrices of the basis:
/// `G_l[r][s] = <xi_l psi_r psi_s>` for `l = 0..=m` with `xi_0 = 1`, and
/// `H_l[r][s] = <psi_l psi_r psi_s>` for every basis function `psi_l`.
#[derive(Debug, Clone)]
pub struct TripleProducts {
    pub g: Vec<Arc<SpMat>>,
    pub h: Vec<Arc<SpMat>>,
}

/// Quadrature points per dimension that integrate every triple-product
/// integrand exactly.
pub fn default_quadrature_points(d_psi: usize) -> usize {
    (3 * d_psi + 2).div_ceil(2).max(1)
}

pub fn triple_products(basis: &GpcBasis) -> TripleProducts {
    triple_products_with_quadrature(basis, default_quadrature_points(basis.d_psi()))
}

/// Entries below this magnitude are quadrature noise and are dropped.
const SPARSITY_THRESHOLD: f64 = 1e-12;

pub fn triple_products_with_quadrature(basis: &GpcBasis, n_q: usize) -> TripleProducts {
    let m = basis.m();
    let n_xi = basis.n_xi();
    let (pts1, wts1) = gauss_legendre_unit(n_q);

    // Tensorized evaluation tables over the m-dimensional grid.
    let n_pts = pts1.len().pow(m as u32);
    let mut weights = vec![0.0; n_pts];
    let mut xi_vals = vec![vec![0.0; m]; n_pts];
    for (p, (w, xv)) in weights.iter_mut().zip(xi_vals.iter_mut()).enumerate() {
        let mut idx = p;
        let mut wp = 1.0;
        for d in 0..m {
            let i = idx % pts1.len();
            idx /= pts1.len();
            wp *= wts1[i];
            xv[d] = pts1[i];
        }
        *w = wp;
    }
    let psi: Vec<Vec<f64>> = (0..n_xi)
        .map(|r| xi_vals.iter().map(|xv| basis.eval(r, xv)).collect())
        .collect();

    let gram = |scale: &dyn Fn(usize) -> f64| -> SpMat {
        let mut trips = Vec::new();
        for r in 0..n_xi {
            for s in r..n_xi {
                let mut acc = 0.0;
                for p in 0..n_pts {
                    acc += weights[p] * scale(p) * psi[r][p] * psi[s][p];
                }
                if acc.abs() > SPARSITY_THRESHOLD {
                    trips.push((r, s, acc));
                    if s != r {
                        trips.push((s, r, acc));
                    }
                }
            }
        }
        sp_from_triplets(n_xi, n_xi, &trips)
    };

    let mut g = Vec::with_capacity(m + 1);
    g.push(Arc::new(gram(&|_| 1.0)));
    for l in 0..m {
        g.push(Arc::new(gram(&|p| xi_vals[p][l])));
    }
    let h = (0..n_xi)
        .map(|l| Arc::new(gram(&|p| psi[l][p])))
        .collect();
    TripleProducts { g, h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sp_iter, sp_to_dense};

    #[test]
    fn basis_sizes() {
        assert_eq!(GpcBasis::new(3, 3).n_xi(), 20);
        assert_eq!(GpcBasis::new(1, 0).n_xi(), 1);
        assert_eq!(GpcBasis::new(2, 2).n_xi(), 6);
    }

    #[test]
    fn first_index_is_constant_and_linears_are_variables() {
        let basis = GpcBasis::new(3, 2);
        assert_eq!(basis.multi_indices()[0], vec![0, 0, 0]);
        assert_eq!(basis.multi_indices()[1], vec![1, 0, 0]);
        assert_eq!(basis.multi_indices()[2], vec![0, 1, 0]);
        assert_eq!(basis.multi_indices()[3], vec![0, 0, 1]);
        let xi = [0.3, -0.8, 1.1];
        assert!((basis.eval(0, &xi) - 1.0).abs() < 1e-14);
        for l in 0..3 {
            assert!((basis.eval(1 + l, &xi) - xi[l]).abs() < 1e-13);
        }
    }

    #[test]
    fn ordering_is_deterministic() {
        let a = GpcBasis::new(3, 3);
        let b = GpcBasis::new(3, 3);
        assert_eq!(a.multi_indices(), b.multi_indices());
        for w in a.multi_indices().windows(2) {
            let d0: usize = w[0].iter().sum();
            let d1: usize = w[1].iter().sum();
            assert!(d0 <= d1);
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        // integrates x^4 on [-1,1] exactly with 3 points
        let (p, w) = gauss_legendre(3);
        let v: f64 = p.iter().zip(&w).map(|(&x, &w)| w * x.powi(4)).sum();
        assert!((v - 0.4).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let (_, w7) = gauss_legendre(7);
        assert!((w7.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn orthonormality_and_identities() {
        let basis = GpcBasis::new(3, 3);
        let tp = triple_products(&basis);
        let n = basis.n_xi();
        // G_0 = I
        let g0 = sp_to_dense(&tp.g[0]);
        for r in 0..n {
            for s in 0..n {
                let expect = if r == s { 1.0 } else { 0.0 };
                assert!(
                    (g0[[r, s]] - expect).abs() < 1e-12,
                    "g0[{r},{s}] = {}",
                    g0[[r, s]]
                );
            }
        }
        // H_1 (mean factor) = I since psi_1 = 1
        let h0 = sp_to_dense(&tp.h[0]);
        for r in 0..n {
            for s in 0..n {
                let expect = if r == s { 1.0 } else { 0.0 };
                assert!((h0[[r, s]] - expect).abs() < 1e-12);
            }
        }
        // symmetry is exact by construction
        for mat in tp.g.iter().chain(tp.h.iter()) {
            let d = sp_to_dense(mat);
            for (i, j, v) in sp_iter(mat) {
                assert_eq!(d[[j, i]], v);
            }
        }
    }

    #[test]
    fn hand_quadrature_small_case() {
        // m = 1, d_psi = 2: psi_2 = xi (unit variance), so <xi psi_1 psi_2> = 1.
        let basis = GpcBasis::new(1, 2);
        let tp = triple_products(&basis);
        let g1 = sp_to_dense(&tp.g[1]);
        assert!((g1[[0, 1]] - 1.0).abs() < 1e-13);
        assert!((g1[[1, 0]] - 1.0).abs() < 1e-13);
        // <xi psi_2 psi_2> = E[xi^3] = 0 for the symmetric density
        assert!(g1[[1, 1]].abs() < 1e-13);
    }

    #[test]
    fn quadrature_refinement_is_stable() {
        let basis = GpcBasis::new(3, 3);
        let tp = triple_products(&basis);
        let fine = triple_products_with_quadrature(&basis, 2 * default_quadrature_points(3));
        for (a, b) in tp.g.iter().zip(fine.g.iter()).chain(tp.h.iter().zip(fine.h.iter())) {
            let da = sp_to_dense(a);
            let db = sp_to_dense(b);
            let diff = (&da - &db).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(diff < 1e-13, "quadrature-dependent entry, diff {diff}");
        }
    }
}
