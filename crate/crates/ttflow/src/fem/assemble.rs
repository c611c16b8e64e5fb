//! Element assembly for the Q2-Q1 pair on square elements.
//!
//! All bilinear forms are integrated with a 3x3 Gauss rule, which is exact
//! for every product of biquadratic shape functions and their gradients on
//! affine square elements. Viscosity fields are bilinear (Q1 nodal values),
//! convection fields biquadratic (Q2 nodal values).

use super::mesh::StructuredMesh;
use crate::linalg::{sp_from_triplets, sp_symmetrize, SpMat};
use ndarray::ArrayView1;

const GAUSS_PTS: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Values and reference-coordinate gradients of the 9 Q2 and 4 Q1 shape
/// functions at the 9 Gauss points.
struct ShapeTables {
    q2: [[f64; 9]; 9],
    q2_dxi: [[f64; 9]; 9],
    q2_deta: [[f64; 9]; 9],
    q1: [[f64; 4]; 9],
    weight: [f64; 9],
}

fn quadratic(i: usize, t: f64) -> f64 {
    match i {
        0 => 0.5 * t * (t - 1.0),
        1 => 1.0 - t * t,
        _ => 0.5 * t * (t + 1.0),
    }
}

fn quadratic_d(i: usize, t: f64) -> f64 {
    match i {
        0 => t - 0.5,
        1 => -2.0 * t,
        _ => t + 0.5,
    }
}

fn linear(i: usize, t: f64) -> f64 {
    match i {
        0 => 0.5 * (1.0 - t),
        _ => 0.5 * (1.0 + t),
    }
}

fn shape_tables() -> ShapeTables {
    let mut tab = ShapeTables {
        q2: [[0.0; 9]; 9],
        q2_dxi: [[0.0; 9]; 9],
        q2_deta: [[0.0; 9]; 9],
        q1: [[0.0; 4]; 9],
        weight: [0.0; 9],
    };
    for (q, (gy, gx)) in (0..3)
        .flat_map(|gy| (0..3).map(move |gx| (gy, gx)))
        .enumerate()
    {
        let xi = GAUSS_PTS[gx];
        let eta = GAUSS_PTS[gy];
        tab.weight[q] = GAUSS_WTS[gx] * GAUSS_WTS[gy];
        for ay in 0..3 {
            for ax in 0..3 {
                let a = ay * 3 + ax;
                tab.q2[q][a] = quadratic(ax, xi) * quadratic(ay, eta);
                tab.q2_dxi[q][a] = quadratic_d(ax, xi) * quadratic(ay, eta);
                tab.q2_deta[q][a] = quadratic(ax, xi) * quadratic_d(ay, eta);
            }
        }
        for cy in 0..2 {
            for cx in 0..2 {
                tab.q1[q][cy * 2 + cx] = linear(cx, xi) * linear(cy, eta);
            }
        }
    }
    tab
}

/// Scalar velocity mass matrix on all Q2 nodes.
pub fn scalar_mass(mesh: &StructuredMesh) -> SpMat {
    let tab = shape_tables();
    let n = mesh.n_q2();
    let det = (mesh.h / 2.0) * (mesh.h / 2.0);
    let mut trips = Vec::with_capacity(mesh.elements.len() * 81);
    for el in &mesh.elements {
        for q in 0..9 {
            let w = tab.weight[q] * det;
            for i in 0..9 {
                for j in 0..9 {
                    trips.push((el.q2[i], el.q2[j], w * tab.q2[q][i] * tab.q2[q][j]));
                }
            }
        }
    }
    sp_symmetrize(&sp_from_triplets(n, n, &trips))
}

/// Weighted stiffness `(nu grad phi_j, grad phi_i)` with `nu` given by its
/// Q1 nodal values.
pub fn weighted_stiffness(mesh: &StructuredMesh, nu_q1: ArrayView1<'_, f64>) -> SpMat {
    assert_eq!(nu_q1.len(), mesh.n_q1());
    let tab = shape_tables();
    let n = mesh.n_q2();
    let det = (mesh.h / 2.0) * (mesh.h / 2.0);
    let scale = 2.0 / mesh.h; // d/dx = (2/h) d/dxi
    let mut trips = Vec::with_capacity(mesh.elements.len() * 81);
    for el in &mesh.elements {
        for q in 0..9 {
            let nu: f64 = (0..4).map(|c| nu_q1[el.q1[c]] * tab.q1[q][c]).sum();
            let w = tab.weight[q] * det * nu * scale * scale;
            for i in 0..9 {
                for j in 0..9 {
                    let gij = tab.q2_dxi[q][i] * tab.q2_dxi[q][j]
                        + tab.q2_deta[q][i] * tab.q2_deta[q][j];
                    trips.push((el.q2[i], el.q2[j], w * gij));
                }
            }
        }
    }
    sp_symmetrize(&sp_from_triplets(n, n, &trips))
}

/// Scalar transport matrix `(w . grad phi_j, phi_i)` for a velocity field
/// with components given by their Q2 nodal values on all nodes.
pub fn convection(
    mesh: &StructuredMesh,
    wx: ArrayView1<'_, f64>,
    wy: ArrayView1<'_, f64>,
) -> SpMat {
    assert_eq!(wx.len(), mesh.n_q2());
    assert_eq!(wy.len(), mesh.n_q2());
    let tab = shape_tables();
    let n = mesh.n_q2();
    let det = (mesh.h / 2.0) * (mesh.h / 2.0);
    let scale = 2.0 / mesh.h;
    let mut trips = Vec::with_capacity(mesh.elements.len() * 81);
    for el in &mesh.elements {
        for q in 0..9 {
            let mut wxq = 0.0;
            let mut wyq = 0.0;
            for a in 0..9 {
                wxq += wx[el.q2[a]] * tab.q2[q][a];
                wyq += wy[el.q2[a]] * tab.q2[q][a];
            }
            let w = tab.weight[q] * det * scale;
            for i in 0..9 {
                let wi = w * tab.q2[q][i];
                for j in 0..9 {
                    let adv = wxq * tab.q2_dxi[q][j] + wyq * tab.q2_deta[q][j];
                    trips.push((el.q2[i], el.q2[j], wi * adv));
                }
            }
        }
    }
    sp_from_triplets(n, n, &trips)
}

/// Divergence blocks `[B_x]_{ij} = -(phi^p_i, d phi_j / dx)` and the
/// `y`-derivative analogue, on all Q2 columns.
pub fn divergence(mesh: &StructuredMesh) -> (SpMat, SpMat) {
    let tab = shape_tables();
    let (np, nu) = (mesh.n_q1(), mesh.n_q2());
    let det = (mesh.h / 2.0) * (mesh.h / 2.0);
    let scale = 2.0 / mesh.h;
    let mut tx = Vec::with_capacity(mesh.elements.len() * 36);
    let mut ty = Vec::with_capacity(mesh.elements.len() * 36);
    for el in &mesh.elements {
        for q in 0..9 {
            let w = tab.weight[q] * det * scale;
            for i in 0..4 {
                let pi = w * tab.q1[q][i];
                for j in 0..9 {
                    tx.push((el.q1[i], el.q2[j], -pi * tab.q2_dxi[q][j]));
                    ty.push((el.q1[i], el.q2[j], -pi * tab.q2_deta[q][j]));
                }
            }
        }
    }
    (
        sp_from_triplets(np, nu, &tx),
        sp_from_triplets(np, nu, &ty),
    )
}

/// Pressure mass matrix (Q1).
pub fn pressure_mass(mesh: &StructuredMesh) -> SpMat {
    let tab = shape_tables();
    let n = mesh.n_q1();
    let det = (mesh.h / 2.0) * (mesh.h / 2.0);
    let mut trips = Vec::with_capacity(mesh.elements.len() * 16);
    for el in &mesh.elements {
        for q in 0..9 {
            let w = tab.weight[q] * det;
            for i in 0..4 {
                for j in 0..4 {
                    trips.push((el.q1[i], el.q1[j], w * tab.q1[q][i] * tab.q1[q][j]));
                }
            }
        }
    }
    sp_symmetrize(&sp_from_triplets(n, n, &trips))
}

/// Pressure stiffness with constant viscosity `nu0` (Q1 gradients).
pub fn pressure_stiffness(mesh: &StructuredMesh, nu0: f64) -> SpMat {
    let n = mesh.n_q1();
    let det = (mesh.h / 2.0) * (mesh.h / 2.0);
    let scale = 2.0 / mesh.h;
    // Q1 gradients at the Gauss points.
    let mut trips = Vec::with_capacity(mesh.elements.len() * 16);
    for el in &mesh.elements {
        for gy in 0..3 {
            for gx in 0..3 {
                let xi = GAUSS_PTS[gx];
                let eta = GAUSS_PTS[gy];
                let w = GAUSS_WTS[gx] * GAUSS_WTS[gy] * det * nu0 * scale * scale;
                let dxi = |cx: usize, cy: usize| {
                    (if cx == 0 { -0.5 } else { 0.5 }) * linear(cy, eta)
                };
                let deta = |cx: usize, cy: usize| {
                    linear(cx, xi) * (if cy == 0 { -0.5 } else { 0.5 })
                };
                for i in 0..4 {
                    let (ix, iy) = (i % 2, i / 2);
                    for j in 0..4 {
                        let (jx, jy) = (j % 2, j / 2);
                        let g = dxi(ix, iy) * dxi(jx, jy) + deta(ix, iy) * deta(jx, jy);
                        trips.push((el.q1[i], el.q1[j], w * g));
                    }
                }
            }
        }
    }
    sp_symmetrize(&sp_from_triplets(n, n, &trips))
}

/// Pressure-space transport matrix `(w . grad phi^p_j, phi^p_i)` with the
/// convecting field given by Q2 nodal values.
pub fn pressure_convection(
    mesh: &StructuredMesh,
    wx: ArrayView1<'_, f64>,
    wy: ArrayView1<'_, f64>,
) -> SpMat {
    assert_eq!(wx.len(), mesh.n_q2());
    let tab = shape_tables();
    let n = mesh.n_q1();
    let det = (mesh.h / 2.0) * (mesh.h / 2.0);
    let scale = 2.0 / mesh.h;
    let mut trips = Vec::with_capacity(mesh.elements.len() * 16);
    for el in &mesh.elements {
        for gy in 0..3 {
            for gx in 0..3 {
                let q = gy * 3 + gx;
                let xi = GAUSS_PTS[gx];
                let eta = GAUSS_PTS[gy];
                let mut wxq = 0.0;
                let mut wyq = 0.0;
                for a in 0..9 {
                    wxq += wx[el.q2[a]] * tab.q2[q][a];
                    wyq += wy[el.q2[a]] * tab.q2[q][a];
                }
                let w = tab.weight[q] * det * scale;
                let dxi = |cx: usize, cy: usize| {
                    (if cx == 0 { -0.5 } else { 0.5 }) * linear(cy, eta)
                };
                let deta = |cx: usize, cy: usize| {
                    linear(cx, xi) * (if cy == 0 { -0.5 } else { 0.5 })
                };
                for i in 0..4 {
                    let wi = w * tab.q1[q][i];
                    for j in 0..4 {
                        let (jx, jy) = (j % 2, j / 2);
                        let adv = wxq * dxi(jx, jy) + wyq * deta(jx, jy);
                        trips.push((el.q1[i], el.q1[j], wi * adv));
                    }
                }
            }
        }
    }
    sp_from_triplets(n, n, &trips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{build_mesh, DomainKind};
    use crate::linalg::{sp_iter, sp_mul_vec, sp_to_dense};
    use ndarray::Array1;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mass_partition_of_unity() {
        // sum of all mass entries = domain area, per scalar component
        let mesh = build_mesh(DomainKind::Channel, 0.25).unwrap();
        let m = scalar_mass(&mesh);
        let total: f64 = sp_iter(&m).map(|(_, _, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12, "area {total}");

        let mesh = build_mesh(DomainKind::Step, 0.5).unwrap();
        let m = scalar_mass(&mesh);
        let total: f64 = sp_iter(&m).map(|(_, _, v)| v).sum();
        assert!((total - 25.0).abs() < 1e-10, "step area {total}");

        // constant field: M 1 = row sums; their total is the area again
        let ones = Array1::ones(mesh.n_q2());
        let m1 = sp_mul_vec(&m, ones.view());
        assert!((m1.sum() - 25.0).abs() < 1e-10);
    }

    #[test]
    fn mass_is_spd() {
        let mesh = build_mesh(DomainKind::Channel, 0.5).unwrap();
        let m = scalar_mass(&mesh);
        let d = sp_to_dense(&m);
        let sym = (&d - &d.t()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert_eq!(sym, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = Array1::from_shape_fn(mesh.n_q2(), |_| rng.gen_range(-1.0..1.0_f64));
            let q = x.dot(&sp_mul_vec(&m, x.view()));
            assert!(q > 0.0);
        }
    }

    #[test]
    fn stiffness_row_sums_vanish_and_match_laplacian() {
        let mesh = build_mesh(DomainKind::Channel, 0.25).unwrap();
        let ones = Array1::ones(mesh.n_q1());
        let a = weighted_stiffness(&mesh, ones.view());
        // gradient of constants is zero: A 1 = 0 on every row
        let az = sp_mul_vec(&a, Array1::ones(mesh.n_q2()).view());
        assert!(az.iter().all(|v| v.abs() < 1e-12));
        // symmetry
        let d = sp_to_dense(&a);
        let sym = (&d - &d.t()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(sym < 1e-13);
        // linearity in the viscosity field: A(2 nu) = 2 A(nu)
        let a2 = weighted_stiffness(&mesh, (&ones * 2.0).view());
        let diff = (&sp_to_dense(&a2) - &(&d * 2.0))
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn convection_constant_field_one_dimensional_transport() {
        // On the channel with w = (1, 0), N phi = (d phi/dx, phi), so
        // applying N to the linear-in-x nodal field x gives the L2 inner
        // products (1, phi_i), i.e. the mass row sums.
        let mesh = build_mesh(DomainKind::Channel, 0.5).unwrap();
        let wx = Array1::ones(mesh.n_q2());
        let wy = Array1::zeros(mesh.n_q2());
        let n = convection(&mesh, wx.view(), wy.view());
        let xfield = Array1::from_shape_fn(mesh.n_q2(), |i| mesh.q2_points[i][0]);
        let nx = sp_mul_vec(&n, xfield.view());
        let m = scalar_mass(&mesh);
        let m1 = sp_mul_vec(&m, Array1::ones(mesh.n_q2()).view());
        let diff = (&nx - &m1).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "transport of linear field, diff {diff}");
        // constants are annihilated
        let nc = sp_mul_vec(&n, Array1::ones(mesh.n_q2()).view());
        assert!(nc.iter().all(|v| v.abs() < 1e-12));
        // linearity in w: N(2w) = 2 N(w)
        let n2 = convection(&mesh, (&wx * 2.0).view(), wy.view());
        let diff2 = (&sp_to_dense(&n2) - &(&sp_to_dense(&n) * 2.0))
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff2 < 1e-13);
    }

    #[test]
    fn divergence_of_linear_fields() {
        // For u = (x, 0), div u = 1; B maps the nodal field to
        // -(phi^p_i, 1). For u = (y, 0), div u = 0.
        let mesh = build_mesh(DomainKind::Channel, 0.5).unwrap();
        let (bx, by) = divergence(&mesh);
        let xf = Array1::from_shape_fn(mesh.n_q2(), |i| mesh.q2_points[i][0]);
        let yf = Array1::from_shape_fn(mesh.n_q2(), |i| mesh.q2_points[i][1]);
        let mp = pressure_mass(&mesh);
        let m1 = sp_mul_vec(&mp, Array1::ones(mesh.n_q1()).view());
        let got = sp_mul_vec(&bx, xf.view());
        let diff = (&got + &m1).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        let zero = sp_mul_vec(&bx, yf.view());
        assert!(zero.iter().all(|v| v.abs() < 1e-12));
        let zero2 = sp_mul_vec(&by, xf.view());
        assert!(zero2.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pressure_space_operators() {
        let mesh = build_mesh(DomainKind::Channel, 0.25).unwrap();
        let mp = pressure_mass(&mesh);
        let total: f64 = sp_iter(&mp).map(|(_, _, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let ap = pressure_stiffness(&mesh, 2.0);
        let a1 = sp_mul_vec(&ap, Array1::ones(mesh.n_q1()).view());
        assert!(a1.iter().all(|v| v.abs() < 1e-12));
        // transport annihilates constants
        let wx = Array1::ones(mesh.n_q2());
        let wy = Array1::zeros(mesh.n_q2());
        let np = pressure_convection(&mesh, wx.view(), wy.view());
        let n1 = sp_mul_vec(&np, Array1::ones(mesh.n_q1()).view());
        assert!(n1.iter().all(|v| v.abs() < 1e-12));
    }
}
