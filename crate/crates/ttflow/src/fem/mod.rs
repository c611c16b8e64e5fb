//! Q2-Q1 Taylor-Hood discretization: meshes, assembled operators and
//! Dirichlet boundary machinery.
//!
//! Dirichlet conditions are handled by elimination: the unknown vector
//! holds only free velocity dofs, and the known boundary values contribute
//! `-(coupling columns) * (values)` to the right-hand side. Velocity dofs
//! are ordered as all `x`-components then all `y`-components, and all
//! pressure nodes are unknowns (the outflow Neumann condition fixes the
//! pressure level).

pub mod assemble;
pub mod mesh;

pub use mesh::{build_mesh, DomainKind, Element, MeshError, NodeTag, StructuredMesh};

use crate::linalg::{sp_block_diag2, sp_from_triplets, sp_iter, sp_submatrix, sp_transpose, SpMat};
use ndarray::{Array1, ArrayView1};
use std::sync::Arc;

/// Steady inflow profile, zero at the channel walls `y = +-1/2`.
pub fn inflow_profile(y: f64) -> f64 {
    1.0 - 4.0 * y * y
}

/// Temporal ramp of the inflow, growing from zero to one.
pub fn inflow_ramp(t: f64) -> f64 {
    1.0 - (-10.0 * t).exp()
}

/// Assembled spatial operators for one mesh and one viscosity expansion,
/// split into free (unknown) and constrained (Dirichlet) columns.
pub struct SpatialDiscretization {
    pub mesh: StructuredMesh,
    /// Scalar free-restricted blocks used by preconditioner factorizations.
    pub mass_s_ff: SpMat,
    pub stiff0_s_ff: SpMat,
    /// Two-component velocity operators, free rows.
    pub mass_v_ff: Arc<SpMat>,
    pub mass_v_fc: Arc<SpMat>,
    pub stiff_v_ff: Vec<Arc<SpMat>>,
    pub stiff_v_fc: Vec<Arc<SpMat>>,
    /// Divergence: free columns, its transpose, and the Dirichlet columns.
    pub b_f: Arc<SpMat>,
    pub bt_f: Arc<SpMat>,
    pub b_c: Arc<SpMat>,
    pub m_p: Arc<SpMat>,
    pub a_p0: Arc<SpMat>,
    /// Inverse diagonals of the velocity and pressure mass matrices.
    pub diag_mass_v_inv: Array1<f64>,
    pub diag_mass_p_inv: Array1<f64>,
    /// Pressure Poisson operator `B diag(M)^-1 B^T`.
    pub bmb: SpMat,
    /// Steady Dirichlet values on constrained velocity dofs.
    pub lifting: Array1<f64>,
    /// Embeddings from free/constrained dofs into the full two-component
    /// nodal vector (`x`-components of all nodes, then `y`-components).
    pub scatter_free: Arc<SpMat>,
    pub scatter_cons: Arc<SpMat>,
    vel_free_map: Vec<Option<usize>>,
    vel_cons_map: Vec<Option<usize>>,
}

impl SpatialDiscretization {
    /// Assembles every matrix for the given viscosity coefficient fields
    /// (Q1 nodal values; index 0 is the mean).
    pub fn new(mesh: StructuredMesh, viscosity_fields: &[Array1<f64>]) -> Self {
        assert!(!viscosity_fields.is_empty());
        for f in viscosity_fields {
            assert_eq!(f.len(), mesh.n_q1(), "viscosity field on the wrong grid");
        }
        let n_all = mesh.n_q2();
        let n_free = mesh.n_free_scalar();
        let n_cons = mesh.constrained_scalar.len();

        let free_map = &mesh.free_of_node;
        let cons_map = &mesh.cons_of_node;

        let mass_s = assemble::scalar_mass(&mesh);
        let mass_s_ff = sp_submatrix(&mass_s, free_map, n_free, free_map, n_free);
        let mass_s_fc = sp_submatrix(&mass_s, free_map, n_free, cons_map, n_cons);

        let stiff_s: Vec<SpMat> = viscosity_fields
            .iter()
            .map(|f| assemble::weighted_stiffness(&mesh, f.view()))
            .collect();
        let stiff0_s_ff = sp_submatrix(&stiff_s[0], free_map, n_free, free_map, n_free);

        let mass_v_ff = Arc::new(sp_block_diag2(&mass_s_ff));
        let mass_v_fc = Arc::new(sp_block_diag2(&mass_s_fc));
        let stiff_v_ff: Vec<Arc<SpMat>> = stiff_s
            .iter()
            .map(|a| Arc::new(sp_block_diag2(&sp_submatrix(a, free_map, n_free, free_map, n_free))))
            .collect();
        let stiff_v_fc: Vec<Arc<SpMat>> = stiff_s
            .iter()
            .map(|a| Arc::new(sp_block_diag2(&sp_submatrix(a, free_map, n_free, cons_map, n_cons))))
            .collect();

        let (bx, by) = assemble::divergence(&mesh);
        let b_full = hcat(&bx, &by);
        let (vel_free_map, vel_cons_map) = velocity_maps(&mesh);
        let all_rows: Vec<Option<usize>> = (0..mesh.n_q1()).map(Some).collect();
        let b_f = Arc::new(sp_submatrix(
            &b_full,
            &all_rows,
            mesh.n_q1(),
            &vel_free_map,
            2 * n_free,
        ));
        let b_c = Arc::new(sp_submatrix(
            &b_full,
            &all_rows,
            mesh.n_q1(),
            &vel_cons_map,
            2 * n_cons,
        ));
        let bt_f = Arc::new(sp_transpose(&b_f));

        let m_p = Arc::new(assemble::pressure_mass(&mesh));
        let a_p0 = Arc::new(assemble::pressure_stiffness(&mesh, mean_value(&viscosity_fields[0])));

        let diag_mass_v_inv = inverse_diagonal(&mass_v_ff);
        let diag_mass_p_inv = inverse_diagonal(&m_p);

        let b_scaled = scale_columns_sp(&b_f, &diag_mass_v_inv);
        let bmb = sp_mul_sp(&b_scaled, &bt_f);

        let mut lifting = Array1::zeros(2 * n_cons);
        for (k, &node) in mesh.constrained_scalar.iter().enumerate() {
            if mesh.q2_tags[node] == NodeTag::Inflow {
                lifting[k] = inflow_profile(mesh.q2_points[node][1]);
            }
        }

        let scatter_free = Arc::new(scatter_matrix(&vel_free_map, 2 * n_all, 2 * n_free));
        let scatter_cons = Arc::new(scatter_matrix(&vel_cons_map, 2 * n_all, 2 * n_cons));

        Self {
            mesh,
            mass_s_ff,
            stiff0_s_ff,
            mass_v_ff,
            mass_v_fc,
            stiff_v_ff,
            stiff_v_fc,
            b_f,
            bt_f,
            b_c,
            m_p,
            a_p0,
            diag_mass_v_inv,
            diag_mass_p_inv,
            bmb,
            lifting,
            scatter_free,
            scatter_cons,
            vel_free_map,
            vel_cons_map,
        }
    }

    pub fn n_u(&self) -> usize {
        self.mesh.n_u()
    }

    pub fn n_p(&self) -> usize {
        self.mesh.n_p()
    }

    pub fn n_c(&self) -> usize {
        self.mesh.n_c()
    }

    /// Full two-component nodal vector length.
    pub fn n_full(&self) -> usize {
        2 * self.mesh.n_q2()
    }

    /// Assembles the scalar convection matrix for a full nodal velocity
    /// vector and returns its free-free and free-constrained velocity
    /// blocks.
    pub fn convection_pair(&self, w_full: ArrayView1<'_, f64>) -> (SpMat, SpMat) {
        let n_scalar = self.mesh.n_q2();
        assert_eq!(w_full.len(), 2 * n_scalar);
        let n = assemble::convection(
            &self.mesh,
            w_full.slice(ndarray::s![..n_scalar]),
            w_full.slice(ndarray::s![n_scalar..]),
        );
        let n_free = self.mesh.n_free_scalar();
        let n_cons = self.mesh.constrained_scalar.len();
        let ff = sp_block_diag2(&sp_submatrix(
            &n,
            &self.mesh.free_of_node,
            n_free,
            &self.mesh.free_of_node,
            n_free,
        ));
        let fc = sp_block_diag2(&sp_submatrix(
            &n,
            &self.mesh.free_of_node,
            n_free,
            &self.mesh.cons_of_node,
            n_cons,
        ));
        (ff, fc)
    }

    /// Scalar free-restricted convection block for the preconditioner's
    /// time-averaged operator.
    pub fn convection_scalar_ff(&self, w_full: ArrayView1<'_, f64>) -> SpMat {
        let n_scalar = self.mesh.n_q2();
        let n = assemble::convection(
            &self.mesh,
            w_full.slice(ndarray::s![..n_scalar]),
            w_full.slice(ndarray::s![n_scalar..]),
        );
        let n_free = self.mesh.n_free_scalar();
        sp_submatrix(&n, &self.mesh.free_of_node, n_free, &self.mesh.free_of_node, n_free)
    }

    /// Pressure-space transport matrix for a full nodal velocity vector.
    pub fn convection_pressure(&self, w_full: ArrayView1<'_, f64>) -> SpMat {
        let n_scalar = self.mesh.n_q2();
        assemble::pressure_convection(
            &self.mesh,
            w_full.slice(ndarray::s![..n_scalar]),
            w_full.slice(ndarray::s![n_scalar..]),
        )
    }

    /// Expands a free velocity vector to the full nodal vector.
    pub fn expand_free(&self, u: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.n_full());
        for (full, maybe) in self.vel_free_map.iter().enumerate() {
            if let Some(f) = maybe {
                out[full] = u[*f];
            }
        }
        out
    }

    /// Expands constrained boundary values to the full nodal vector.
    pub fn expand_cons(&self, g: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.n_full());
        for (full, maybe) in self.vel_cons_map.iter().enumerate() {
            if let Some(c) = maybe {
                out[full] = g[*c];
            }
        }
        out
    }
}

fn mean_value(field: &Array1<f64>) -> f64 {
    field.sum() / field.len() as f64
}

fn velocity_maps(mesh: &StructuredMesh) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let n_all = mesh.n_q2();
    let n_free = mesh.n_free_scalar();
    let n_cons = mesh.constrained_scalar.len();
    let mut free = vec![None; 2 * n_all];
    let mut cons = vec![None; 2 * n_all];
    for node in 0..n_all {
        if let Some(f) = mesh.free_of_node[node] {
            free[node] = Some(f);
            free[node + n_all] = Some(f + n_free);
        }
        if let Some(c) = mesh.cons_of_node[node] {
            cons[node] = Some(c);
            cons[node + n_all] = Some(c + n_cons);
        }
    }
    (free, cons)
}

fn hcat(a: &SpMat, b: &SpMat) -> SpMat {
    assert_eq!(a.nrows(), b.nrows());
    let mut trips: Vec<_> = sp_iter(a).collect();
    trips.extend(sp_iter(b).map(|(i, j, v)| (i, j + a.ncols(), v)));
    sp_from_triplets(a.nrows(), a.ncols() + b.ncols(), &trips)
}

fn inverse_diagonal(a: &SpMat) -> Array1<f64> {
    let n = a.nrows();
    let mut d = Array1::zeros(n);
    for (i, j, v) in sp_iter(a) {
        if i == j {
            d[i] += v;
        }
    }
    d.mapv_inplace(|v| 1.0 / v);
    d
}

fn scale_columns_sp(a: &SpMat, d: &Array1<f64>) -> SpMat {
    let trips: Vec<_> = sp_iter(a).map(|(i, j, v)| (i, j, v * d[j])).collect();
    sp_from_triplets(a.nrows(), a.ncols(), &trips)
}

fn sp_mul_sp(a: &SpMat, b: &SpMat) -> SpMat {
    // Row-by-column product through column accumulation on b's columns.
    assert_eq!(a.ncols(), b.nrows());
    let mut trips = Vec::new();
    let mut acc = vec![0.0; a.nrows()];
    let mut touched = Vec::new();
    for jb in 0..b.ncols() {
        for (kb, &vb) in b.row_idx_of_col(jb).zip(b.val_of_col(jb)) {
            for (ia, &va) in a.row_idx_of_col(kb).zip(a.val_of_col(kb)) {
                if acc[ia] == 0.0 {
                    touched.push(ia);
                }
                acc[ia] += va * vb;
            }
        }
        for &ia in &touched {
            if acc[ia] != 0.0 {
                trips.push((ia, jb, acc[ia]));
                acc[ia] = 0.0;
            }
        }
        touched.clear();
    }
    sp_from_triplets(a.nrows(), b.ncols(), &trips)
}

fn scatter_matrix(map: &[Option<usize>], nrows: usize, ncols: usize) -> SpMat {
    let trips: Vec<_> = map
        .iter()
        .enumerate()
        .filter_map(|(full, m)| m.map(|idx| (full, idx, 1.0)))
        .collect();
    sp_from_triplets(nrows, ncols, &trips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sp_mul_vec, sp_to_dense};
    use ndarray::Array2;

    fn tiny_spaces() -> SpatialDiscretization {
        let mesh = build_mesh(DomainKind::Channel, 0.5).unwrap();
        let nu = Array1::from_elem(mesh.n_q1(), 0.1);
        SpatialDiscretization::new(mesh, &[nu])
    }

    #[test]
    fn lifting_is_parabolic_at_inflow_and_zero_elsewhere() {
        let sd = tiny_spaces();
        let n_cons = sd.mesh.constrained_scalar.len();
        for (k, &node) in sd.mesh.constrained_scalar.iter().enumerate() {
            let p = sd.mesh.q2_points[node];
            match sd.mesh.q2_tags[node] {
                NodeTag::Inflow => {
                    assert!((sd.lifting[k] - (1.0 - 4.0 * p[1] * p[1])).abs() < 1e-14);
                }
                _ => assert_eq!(sd.lifting[k], 0.0),
            }
            // y-components always zero
            assert_eq!(sd.lifting[k + n_cons], 0.0);
        }
        // ramp starts at zero
        assert_eq!(inflow_ramp(0.0), 0.0);
        assert!((inflow_ramp(1e3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_annihilates_constant_velocity() {
        // Constant (1, 0) over free and boundary dofs together is exactly
        // divergence free in the discrete sense.
        let sd = tiny_spaces();
        let n_free = sd.mesh.n_free_scalar();
        let n_cons = sd.mesh.constrained_scalar.len();
        let mut uf = Array1::zeros(2 * n_free);
        uf.slice_mut(ndarray::s![..n_free]).fill(1.0);
        let mut gc = Array1::zeros(2 * n_cons);
        gc.slice_mut(ndarray::s![..n_cons]).fill(1.0);
        let div = &sp_mul_vec(&sd.b_f, uf.view()) + &sp_mul_vec(&sd.b_c, gc.view());
        let max = div.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(max < 1e-12, "divergence of constant field {max}");
    }

    #[test]
    fn eliminated_system_matches_constrained_rows() {
        // A single implicit Stokes step: solving the reduced system with
        // the lifting right-hand side must match the full system in which
        // Dirichlet rows are replaced by identity rows.
        let sd = tiny_spaces();
        let tau = 0.5;
        let t = 0.7;
        let g = &sd.lifting * inflow_ramp(t);

        let n_free2 = sd.n_u();
        let n_cons2 = sd.n_c();
        let n_p = sd.n_p();

        // reduced system [tau^-1 M + A, B^T; B, 0]
        let fc = {
            let mut d = sp_to_dense(&sd.mass_v_ff);
            d.mapv_inplace(|v| v / tau);
            d + &sp_to_dense(&sd.stiff_v_ff[0])
        };
        let mut reduced = Array2::zeros((n_free2 + n_p, n_free2 + n_p));
        reduced.slice_mut(ndarray::s![..n_free2, ..n_free2]).assign(&fc);
        reduced
            .slice_mut(ndarray::s![..n_free2, n_free2..])
            .assign(&sp_to_dense(&sd.bt_f));
        reduced
            .slice_mut(ndarray::s![n_free2.., ..n_free2])
            .assign(&sp_to_dense(&sd.b_f));
        let mut rhs = Array1::zeros(n_free2 + n_p);
        let mut lift_u = sp_mul_vec(&sd.mass_v_fc, g.view());
        lift_u.mapv_inplace(|v| v / tau);
        lift_u += &sp_mul_vec(&sd.stiff_v_fc[0], g.view());
        rhs.slice_mut(ndarray::s![..n_free2]).assign(&(-&lift_u));
        rhs.slice_mut(ndarray::s![n_free2..])
            .assign(&(-&sp_mul_vec(&sd.b_c, g.view())));
        let sol_reduced = crate::dense::solve_dense(reduced.view(), rhs.view());

        // full system with constrained rows
        let n_all2 = sd.n_full();
        let mass_s = assemble::scalar_mass(&sd.mesh);
        let stiff_s = assemble::weighted_stiffness(
            &sd.mesh,
            Array1::from_elem(sd.mesh.n_q1(), 0.1).view(),
        );
        let (bx, by) = assemble::divergence(&sd.mesh);
        let b_full = hcat(&bx, &by);
        let mut full = Array2::zeros((n_all2 + n_p, n_all2 + n_p));
        let n_all = sd.mesh.n_q2();
        for (i, j, v) in sp_iter(&mass_s) {
            full[[i, j]] += v / tau;
            full[[i + n_all, j + n_all]] += v / tau;
        }
        for (i, j, v) in sp_iter(&stiff_s) {
            full[[i, j]] += v;
            full[[i + n_all, j + n_all]] += v;
        }
        for (i, j, v) in sp_iter(&b_full) {
            full[[n_all2 + i, j]] += v;
            full[[j, n_all2 + i]] += v;
        }
        let mut rhs_full = Array1::zeros(n_all2 + n_p);
        let g_full = sd.expand_cons(g.view());
        for (full_idx, m) in sd.vel_cons_map.iter().enumerate() {
            if m.is_some() {
                for k in 0..n_all2 + n_p {
                    full[[full_idx, k]] = 0.0;
                }
                full[[full_idx, full_idx]] = 1.0;
                rhs_full[full_idx] = g_full[full_idx];
            }
        }
        let sol_full = crate::dense::solve_dense(full.view(), rhs_full.view());

        // compare velocity on free dofs and pressure
        let uf_full = {
            let mut v = Array1::zeros(n_free2);
            for (full_idx, m) in sd.vel_free_map.iter().enumerate() {
                if let Some(f) = m {
                    v[*f] = sol_full[full_idx];
                }
            }
            v
        };
        let err_u = (&uf_full - &sol_reduced.slice(ndarray::s![..n_free2]))
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        let err_p = (&sol_full.slice(ndarray::s![n_all2..])
            - &sol_reduced.slice(ndarray::s![n_free2..]))
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(err_u < 1e-10, "velocity mismatch {err_u}");
        assert!(err_p < 1e-10, "pressure mismatch {err_p}");
    }

    #[test]
    fn dof_count_formulas() {
        // channel with q = 1/h: free scalar nodes = 2q(2q - 1)
        for q in [2usize, 4] {
            let mesh = build_mesh(DomainKind::Channel, 1.0 / q as f64).unwrap();
            assert_eq!(mesh.n_free_scalar(), 2 * q * (2 * q - 1));
            assert_eq!(mesh.n_p(), (q + 1) * (q + 1));
        }
    }

    #[test]
    fn pressure_poisson_is_spd() {
        let sd = tiny_spaces();
        let d = sp_to_dense(&sd.bmb);
        let sym = (&d - &d.t()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(sym < 1e-12);
        let chol = crate::linalg::SparseCholesky::new(&sd.bmb);
        assert!(chol.is_ok(), "pressure Poisson operator not SPD");
    }

    #[test]
    fn scatter_roundtrip() {
        let sd = tiny_spaces();
        let n_u = sd.n_u();
        let u = Array1::from_shape_fn(n_u, |i| i as f64 + 1.0);
        let full = sd.expand_free(u.view());
        let via_matrix = sp_mul_vec(&sd.scatter_free, u.view());
        assert_eq!(full, via_matrix);
        assert_eq!(full.iter().filter(|&&v| v != 0.0).count(), n_u);
    }
}
