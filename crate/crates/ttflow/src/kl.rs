//! Karhunen-Loeve expansion of the stochastic viscosity.
//!
//! The viscosity is `nu(x, xi) = nu0 (1 + sigma sum_l sqrt(beta_l) a_l(x) xi_l)`
//! with an exponential covariance `c(x, y) = exp(-|x - y|_1 / b)`. The
//! eigenpairs `(beta_l, a_l)` of the covariance operator are computed by a
//! nodal Galerkin discretization on the pressure grid: with `C` the nodal
//! covariance matrix and `Mh` the nodal mass matrix, solve
//! `Mh C Mh a = beta Mh a`, which reduces to a symmetric eigenproblem via
//! the Cholesky factor of `Mh`.

use crate::linalg::{sp_mul_vec, sp_to_dense, sym_eigen, SpMat};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KlError {
    #[error("requested {requested} modes but the grid supports only {available}")]
    TooManyModes { requested: usize, available: usize },
    #[error("mass matrix is not positive definite")]
    MassNotSpd,
    #[error("sampled viscosity reaches {min_value:.3e}; the configuration is not positive")]
    NotPositive { min_value: f64 },
}

/// One eigenpair of the covariance operator: the eigenvalue and the nodal
/// values of the eigenfunction on the grid it was computed on.
#[derive(Debug, Clone)]
pub struct KlEigenpair {
    pub value: f64,
    pub mode: Array1<f64>,
}

/// Computes the `m` largest eigenpairs of the exponential covariance kernel
/// on the given nodes. The returned modes are orthonormal in the
/// mass-weighted inner product and their largest-magnitude entry is
/// positive.
pub fn kl_eigenpairs(
    points: &[[f64; 2]],
    mass: &SpMat,
    corr_len: f64,
    m: usize,
) -> Result<Vec<KlEigenpair>, KlError> {
    let n = points.len();
    assert!(corr_len > 0.0, "correlation length must be positive");
    if m > n {
        return Err(KlError::TooManyModes {
            requested: m,
            available: n,
        });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let cov = Array2::from_shape_fn((n, n), |(i, j)| {
        let dx = (points[i][0] - points[j][0]).abs();
        let dy = (points[i][1] - points[j][1]).abs();
        (-(dx + dy) / corr_len).exp()
    });
    // Mh C Mh a = beta Mh a  <=>  (L^T C L) y = beta y, a = L^{-T} y,
    // with Mh = L L^T.
    let mh = sp_to_dense(mass);
    let chol = crate::linalg::DenseCholesky::new(mh.view()).ok_or(KlError::MassNotSpd)?;
    let lmat = cholesky_factor(&mh).ok_or(KlError::MassNotSpd)?;
    let clt = cov.dot(&lmat); // C L
    let ltcl = lmat.t().dot(&clt); // L^T C L
    let ltcl = (&ltcl + &ltcl.t()) * 0.5;
    let (vals, vecs) = sym_eigen(ltcl.view());

    // Largest eigenvalues come last in nondecreasing order.
    let mut pairs = Vec::with_capacity(m);
    for k in 0..m {
        let idx = n - 1 - k;
        let y = vecs.column(idx).to_owned();
        // a = L^{-T} y, solved via the full Mh factorization: Mh a = L y.
        let ly = lmat.dot(&y);
        let a = chol
            .solve_mat(ly.insert_axis(ndarray::Axis(1)).view())
            .column(0)
            .to_owned();
        let mut mode = a;
        // Deterministic sign: the entry of largest magnitude is positive.
        let mut best = 0usize;
        for (i, v) in mode.iter().enumerate() {
            if v.abs() > mode[best].abs() {
                best = i;
            }
        }
        if mode[best] < 0.0 {
            mode.mapv_inplace(|v| -v);
        }
        pairs.push(KlEigenpair {
            value: vals[idx].max(0.0),
            mode,
        });
    }
    Ok(pairs)
}

fn cholesky_factor(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    Some(l)
}

/// Truncated KL model of the viscosity field.
#[derive(Debug, Clone)]
pub struct KlViscosity {
    pub nu0: f64,
    pub sigma: f64,
    pub corr_len: f64,
    pub eigenpairs: Vec<KlEigenpair>,
}

impl KlViscosity {
    /// Nodal coefficient fields of the affine viscosity expansion:
    /// `nu_0(x) = nu0` and `nu_l(x) = nu0 sigma sqrt(beta_l) a_l(x)`.
    /// Positivity of the total field is checked by Monte Carlo sampling
    /// over the parameter box before returning.
    pub fn coefficient_fields(&self, n_nodes: usize) -> Result<Vec<Array1<f64>>, KlError> {
        let mut fields = Vec::with_capacity(self.eigenpairs.len() + 1);
        fields.push(Array1::from_elem(n_nodes, self.nu0));
        for pair in &self.eigenpairs {
            assert_eq!(pair.mode.len(), n_nodes, "mode on a different grid");
            fields.push(&pair.mode * (self.nu0 * self.sigma * pair.value.max(0.0).sqrt()));
        }
        if self.sigma != 0.0 && !self.eigenpairs.is_empty() {
            let min_value = self.sampled_minimum(&fields, 1000);
            if min_value <= 0.0 {
                return Err(KlError::NotPositive { min_value });
            }
        }
        Ok(fields)
    }

    fn sampled_minimum(&self, fields: &[Array1<f64>], samples: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        let bound = crate::gpc::XI_BOUND;
        let m = fields.len() - 1;
        let n = fields[0].len();
        let mut min_value = f64::INFINITY;
        for _ in 0..samples {
            let xi: Vec<f64> = (0..m).map(|_| rng.gen_range(-bound..bound)).collect();
            for node in 0..n {
                let mut v = fields[0][node];
                for (l, x) in xi.iter().enumerate() {
                    v += fields[l + 1][node] * x;
                }
                if v < min_value {
                    min_value = v;
                }
            }
        }
        min_value
    }
}

/// Residual of the discrete eigenproblem, `|Mh C Mh a - beta Mh a|`, used
/// by verification tests.
pub fn eigen_residual(
    points: &[[f64; 2]],
    mass: &SpMat,
    corr_len: f64,
    pair: &KlEigenpair,
) -> f64 {
    let n = points.len();
    let cov = Array2::from_shape_fn((n, n), |(i, j)| {
        let dx = (points[i][0] - points[j][0]).abs();
        let dy = (points[i][1] - points[j][1]).abs();
        (-(dx + dy) / corr_len).exp()
    });
    let ma = sp_mul_vec(mass, pair.mode.view());
    let cma = cov.dot(&ma);
    let mcma = sp_mul_vec(mass, cma.view());
    let r = &mcma - &(&ma * pair.value);
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sp_from_triplets;

    /// P1 mass matrix on a uniform 1d grid over [0, 1], nodes included.
    fn line_mass(n: usize) -> (Vec<[f64; 2]>, SpMat) {
        let h = 1.0 / (n - 1) as f64;
        let points: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 * h, 0.0]).collect();
        let mut trips = Vec::new();
        for e in 0..n - 1 {
            // local mass h/6 [2 1; 1 2]
            trips.push((e, e, h / 3.0));
            trips.push((e + 1, e + 1, h / 3.0));
            trips.push((e, e + 1, h / 6.0));
            trips.push((e + 1, e, h / 6.0));
        }
        (points, sp_from_triplets(n, n, &trips))
    }

    /// Eigenvalues of the exponential kernel exp(-|x-y|/b) on [0, 1]:
    /// lambda = 2c / (w^2 + c^2) with c = 1/b, where w solves
    /// tan(w/2) = c/w (even modes) or tan(w/2) = -w/c (odd modes).
    fn analytic_exponential_eigenvalues(b: f64, count: usize) -> Vec<f64> {
        let c = 1.0 / b;
        let even = |w: f64| c - w * (w / 2.0).tan();
        let odd = |w: f64| w + c * (w / 2.0).tan();
        let mut roots = Vec::new();
        // scan for sign changes of each characteristic function
        for f in [&even as &dyn Fn(f64) -> f64, &odd] {
            let mut branch_roots = Vec::new();
            let mut w = 1e-6;
            let step = 1e-3;
            let mut prev = f(w);
            while branch_roots.len() < 2 * count && w < 200.0 {
                let next_w = w + step;
                let cur = f(next_w);
                if prev.is_finite() && cur.is_finite() && prev * cur < 0.0 {
                    // bisection
                    let (mut lo, mut hi) = (w, next_w);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if f(lo) * f(mid) <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let root = 0.5 * (lo + hi);
                    // The tangent poles also flip the sign; keep only
                    // genuine zeros.
                    if f(root).abs() < 1e-6 {
                        branch_roots.push(root);
                    }
                }
                prev = cur;
                w = next_w;
            }
            roots.extend(branch_roots);
        }
        let mut vals: Vec<f64> = roots
            .iter()
            .map(|&w| 2.0 * c / (w * w + c * c))
            .collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vals.truncate(count);
        vals
    }

    #[test]
    fn matches_analytic_1d_spectrum() {
        let (points, mass) = line_mass(64);
        let pairs = kl_eigenpairs(&points, &mass, 1.0, 4).unwrap();
        let analytic = analytic_exponential_eigenvalues(1.0, 4);
        for (p, a) in pairs.iter().zip(&analytic) {
            let rel = (p.value - a).abs() / a;
            assert!(rel < 0.02, "eigenvalue {} vs analytic {a}: rel {rel}", p.value);
        }
    }

    #[test]
    fn constant_kernel_limit() {
        // b -> infinity gives the rank-one kernel c = 1: beta_1 = |domain|,
        // constant eigenfunction, beta_2 ~ 0.
        let (points, mass) = line_mass(32);
        let pairs = kl_eigenpairs(&points, &mass, 1e9, 2).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-6, "beta1 = {}", pairs[0].value);
        let spread = pairs[0]
            .mode
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        assert!((spread.1 - spread.0).abs() < 1e-5, "mode not constant");
        assert!(pairs[1].value < 1e-6);
    }

    #[test]
    fn modes_are_mass_orthonormal_with_positive_peak() {
        let (points, mass) = line_mass(40);
        let pairs = kl_eigenpairs(&points, &mass, 0.5, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mj = sp_mul_vec(&mass, pairs[j].mode.view());
                let dot = pairs[i].mode.dot(&mj);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "m-orthonormality {i},{j}: {dot}");
            }
            let peak = pairs[i]
                .mode
                .iter()
                .cloned()
                .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            assert!(peak > 0.0);
        }
        // ordering and positivity of the spectrum
        assert!(pairs[0].value >= pairs[1].value && pairs[1].value >= pairs[2].value);
        assert!(pairs[2].value > 0.0);
        // discrete eigenproblem residual
        for p in &pairs {
            assert!(eigen_residual(&points, &mass, 0.5, p) <= 1e-8 * p.value);
        }
    }

    #[test]
    fn viscosity_fields_and_positivity() {
        let (points, mass) = line_mass(24);
        let pairs = kl_eigenpairs(&points, &mass, 1.0, 3).unwrap();
        let model = KlViscosity {
            nu0: 1.0 / 50.0,
            sigma: 0.01,
            corr_len: 1.0,
            eigenpairs: pairs.clone(),
        };
        let fields = model.coefficient_fields(points.len()).unwrap();
        assert_eq!(fields.len(), 4);
        assert!(fields[0].iter().all(|&v| v == 1.0 / 50.0));
        // sigma = 0 collapses to the mean
        let det = KlViscosity {
            sigma: 0.0,
            ..model.clone()
        };
        let f0 = det.coefficient_fields(points.len()).unwrap();
        assert!(f0[1].iter().all(|&v| v == 0.0));
        // absurdly large sigma violates positivity
        let bad = KlViscosity {
            sigma: 1e3,
            ..model
        };
        assert!(matches!(
            bad.coefficient_fields(points.len()),
            Err(KlError::NotPositive { .. })
        ));
    }
}
