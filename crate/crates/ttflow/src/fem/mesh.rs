//! Structured Taylor-Hood meshes.
//!
//! Both domains are unions of axis-aligned rectangles meshed with uniform
//! square elements of size `h`: biquadratic velocity nodes on a lattice of
//! spacing `h/2`, bilinear pressure nodes on the element corners.
//!
//! - `Channel`: `[0, 1] x [-1/2, 1/2]`, inflow at `x = 0`, outflow at
//!   `x = 1`, fixed walls at `y = +-1/2`.
//! - `Step`: `[-1, 0] x [-1/2, 1/2]` joined to `[0, 12] x [-1, 1]`, inflow
//!   at `x = -1`, outflow at `x = 12`, fixed walls everywhere else
//!   including the two vertical faces of the expansion.
//!
//! All geometry runs on integer lattice coordinates in units of `h/2`, so
//! node placement and boundary tags involve no floating-point comparisons.
//! Nodes are ordered lexicographically by `(y, x)`. Where a node belongs to
//! both the inflow (or outflow) and a wall, the wall tag wins; velocity
//! Dirichlet conditions are imposed on inflow and wall nodes, while outflow
//! nodes stay unknowns.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Channel,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTag {
    Interior,
    Inflow,
    Wall,
    Outflow,
}

impl NodeTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, NodeTag::Inflow | NodeTag::Wall)
    }
}

#[derive(Debug, Clone)]
pub struct Element {
    /// Nine velocity nodes in row-major local order (y slow, x fast).
    pub q2: [usize; 9],
    /// Four pressure nodes in row-major local order.
    pub q1: [usize; 4],
    /// Coordinates of the element's lower-left corner.
    pub origin: [f64; 2],
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh size {h} does not divide the domain segments (use h = 2^-k, k >= {min_k})")]
    IncompatibleH { h: f64, min_k: u32 },
}

#[derive(Debug, Clone)]
pub struct StructuredMesh {
    pub kind: DomainKind,
    pub h: f64,
    pub q2_points: Vec<[f64; 2]>,
    pub q1_points: Vec<[f64; 2]>,
    pub q2_tags: Vec<NodeTag>,
    pub elements: Vec<Element>,
    /// Free (non-Dirichlet) scalar velocity nodes, in node order.
    pub free_scalar: Vec<usize>,
    /// Dirichlet scalar velocity nodes, in node order.
    pub constrained_scalar: Vec<usize>,
    pub free_of_node: Vec<Option<usize>>,
    pub cons_of_node: Vec<Option<usize>>,
}

impl StructuredMesh {
    pub fn n_q2(&self) -> usize {
        self.q2_points.len()
    }

    pub fn n_q1(&self) -> usize {
        self.q1_points.len()
    }

    pub fn n_free_scalar(&self) -> usize {
        self.free_scalar.len()
    }

    /// Velocity dofs (two components per free scalar node).
    pub fn n_u(&self) -> usize {
        2 * self.free_scalar.len()
    }

    pub fn n_p(&self) -> usize {
        self.q1_points.len()
    }

    /// Constrained velocity dofs (two components per Dirichlet node).
    pub fn n_c(&self) -> usize {
        2 * self.constrained_scalar.len()
    }
}

/// Integer-lattice description of a domain, in units of `h/2`.
struct Lattice {
    /// x index of the domain's left edge relative to the origin.
    x_min: f64,
    y_min: f64,
    nx: i64,
    ny: i64,
    kind: DomainKind,
    /// For the step: lattice x of the expansion plane and lattice y of the
    /// inlet walls.
    x_expand: i64,
    y_inlet_lo: i64,
    y_inlet_hi: i64,
}

impl Lattice {
    fn contains(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || ix > self.nx || iy < 0 || iy > self.ny {
            return false;
        }
        match self.kind {
            DomainKind::Channel => true,
            DomainKind::Step => {
                if ix <= self.x_expand {
                    // inlet portion (x <= 0) only spans the narrow strip;
                    // the plane x = 0 itself belongs to both parts
                    if ix < self.x_expand {
                        iy >= self.y_inlet_lo && iy <= self.y_inlet_hi
                    } else {
                        true
                    }
                } else {
                    true
                }
            }
        }
    }

    fn tag(&self, ix: i64, iy: i64) -> NodeTag {
        match self.kind {
            DomainKind::Channel => {
                if iy == 0 || iy == self.ny {
                    NodeTag::Wall
                } else if ix == 0 {
                    NodeTag::Inflow
                } else if ix == self.nx {
                    NodeTag::Outflow
                } else {
                    NodeTag::Interior
                }
            }
            DomainKind::Step => {
                if ix < self.x_expand {
                    if iy == self.y_inlet_lo || iy == self.y_inlet_hi {
                        NodeTag::Wall
                    } else if ix == 0 {
                        NodeTag::Inflow
                    } else {
                        NodeTag::Interior
                    }
                } else if ix == self.x_expand {
                    // the expansion plane: wall outside the inlet strip
                    if iy <= self.y_inlet_lo || iy >= self.y_inlet_hi {
                        NodeTag::Wall
                    } else {
                        NodeTag::Interior
                    }
                } else if iy == 0 || iy == self.ny {
                    NodeTag::Wall
                } else if ix == self.nx {
                    NodeTag::Outflow
                } else {
                    NodeTag::Interior
                }
            }
        }
    }
}

fn lattice_for(kind: DomainKind, h: f64) -> Result<Lattice, MeshError> {
    let q = 1.0 / h;
    let min_k = match kind {
        DomainKind::Channel => 0,
        DomainKind::Step => 1,
    };
    if (q - q.round()).abs() > 1e-9 || q < (1 << min_k) as f64 {
        return Err(MeshError::IncompatibleH { h, min_k });
    }
    let q = q.round() as i64;
    Ok(match kind {
        DomainKind::Channel => Lattice {
            x_min: 0.0,
            y_min: -0.5,
            nx: 2 * q,
            ny: 2 * q,
            kind,
            x_expand: 0,
            y_inlet_lo: 0,
            y_inlet_hi: 2 * q,
        },
        DomainKind::Step => Lattice {
            x_min: -1.0,
            y_min: -1.0,
            nx: 26 * q,
            ny: 4 * q,
            kind,
            x_expand: 2 * q,
            y_inlet_lo: q,
            y_inlet_hi: 3 * q,
        },
    })
}

pub fn build_mesh(kind: DomainKind, h: f64) -> Result<StructuredMesh, MeshError> {
    let lat = lattice_for(kind, h)?;
    let half = h / 2.0;

    // Q2 nodes on the h/2 lattice and Q1 nodes on the h lattice, both in
    // (y, x) order.
    let mut q2_points = Vec::new();
    let mut q2_tags = Vec::new();
    let mut q2_id = std::collections::HashMap::new();
    let mut q1_points = Vec::new();
    let mut q1_id = std::collections::HashMap::new();
    for iy in 0..=lat.ny {
        for ix in 0..=lat.nx {
            if !lat.contains(ix, iy) {
                continue;
            }
            let p = [lat.x_min + ix as f64 * half, lat.y_min + iy as f64 * half];
            q2_id.insert((ix, iy), q2_points.len());
            q2_points.push(p);
            q2_tags.push(lat.tag(ix, iy));
            if ix % 2 == 0 && iy % 2 == 0 {
                q1_id.insert((ix, iy), q1_points.len());
                q1_points.push(p);
            }
        }
    }

    // Elements: squares of side h whose closure lies inside the domain.
    let mut elements = Vec::new();
    for iy in (0..lat.ny).step_by(2) {
        for ix in (0..lat.nx).step_by(2) {
            let corners_inside = [(0, 0), (2, 0), (0, 2), (2, 2)]
                .iter()
                .all(|&(dx, dy)| lat.contains(ix + dx, iy + dy));
            // For these geometries a square is inside iff its four corners
            // are and it does not straddle the inlet strip boundary.
            let valid = corners_inside
                && match kind {
                    DomainKind::Channel => true,
                    DomainKind::Step => {
                        ix + 2 <= lat.x_expand || ix >= lat.x_expand
                    }
                };
            if !valid {
                continue;
            }
            let mut q2 = [0usize; 9];
            for dy in 0..3 {
                for dx in 0..3 {
                    q2[(dy * 3 + dx) as usize] = q2_id[&(ix + dx, iy + dy)];
                }
            }
            let q1 = [
                q1_id[&(ix, iy)],
                q1_id[&(ix + 2, iy)],
                q1_id[&(ix, iy + 2)],
                q1_id[&(ix + 2, iy + 2)],
            ];
            elements.push(Element {
                q2,
                q1,
                origin: [lat.x_min + ix as f64 * half, lat.y_min + iy as f64 * half],
            });
        }
    }

    let mut free_scalar = Vec::new();
    let mut constrained_scalar = Vec::new();
    let mut free_of_node = vec![None; q2_points.len()];
    let mut cons_of_node = vec![None; q2_points.len()];
    for (i, tag) in q2_tags.iter().enumerate() {
        if tag.is_dirichlet() {
            cons_of_node[i] = Some(constrained_scalar.len());
            constrained_scalar.push(i);
        } else {
            free_of_node[i] = Some(free_scalar.len());
            free_scalar.push(i);
        }
    }

    Ok(StructuredMesh {
        kind,
        h,
        q2_points,
        q1_points,
        q2_tags,
        elements,
        free_scalar,
        constrained_scalar,
        free_of_node,
        cons_of_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_counts_by_hand() {
        let mesh = build_mesh(DomainKind::Channel, 0.5).unwrap();
        assert_eq!(mesh.elements.len(), 4);
        assert_eq!(mesh.n_q2(), 25);
        assert_eq!(mesh.n_q1(), 9);
        // walls: 10 nodes on y = +-1/2; inflow: 3 interior nodes at x = 0
        assert_eq!(mesh.constrained_scalar.len(), 13);
        assert_eq!(mesh.n_u(), 24);
        assert_eq!(mesh.n_p(), 9);
    }

    #[test]
    fn channel_refinement_quadruples_elements() {
        let coarse = build_mesh(DomainKind::Channel, 0.5).unwrap();
        let fine = build_mesh(DomainKind::Channel, 0.25).unwrap();
        assert_eq!(fine.elements.len(), 4 * coarse.elements.len());
    }

    #[test]
    fn step_counts() {
        let mesh = build_mesh(DomainKind::Step, 0.25).unwrap();
        // 16 inlet elements + 384 expansion elements
        assert_eq!(mesh.elements.len(), 400);
        assert_eq!(mesh.n_p(), 461);
        assert_eq!(mesh.n_q2(), 1721);
        // Dirichlet on inflow and walls (corners included); the outflow
        // column stays free.
        assert_eq!(mesh.n_u(), 2992);
    }

    #[test]
    fn incompatible_h_rejected() {
        assert!(build_mesh(DomainKind::Step, 0.3).is_err());
        assert!(build_mesh(DomainKind::Step, 1.0).is_err());
        assert!(build_mesh(DomainKind::Channel, 0.7).is_err());
    }

    #[test]
    fn tags_are_geometrically_consistent() {
        let mesh = build_mesh(DomainKind::Step, 0.5).unwrap();
        for (p, tag) in mesh.q2_points.iter().zip(&mesh.q2_tags) {
            match tag {
                NodeTag::Inflow => {
                    assert_eq!(p[0], -1.0);
                    assert!(p[1].abs() < 0.5);
                }
                NodeTag::Outflow => {
                    assert_eq!(p[0], 12.0);
                    assert!(p[1].abs() < 1.0);
                }
                NodeTag::Wall => {
                    let on_main_walls = (p[1].abs() == 1.0 && p[0] >= 0.0)
                        || (p[1].abs() == 0.5 && p[0] <= 0.0)
                        || (p[0] == 0.0 && p[1].abs() >= 0.5);
                    assert!(on_main_walls, "wall tag at {p:?}");
                }
                NodeTag::Interior => {
                    assert!(p[0] > -1.0 && p[0] < 12.0);
                }
            }
        }
        // every element references valid nodes and q1 corners match q2 corners
        for el in &mesh.elements {
            assert_eq!(mesh.q2_points[el.q2[0]], mesh.q1_points[el.q1[0]]);
            assert_eq!(mesh.q2_points[el.q2[2]], mesh.q1_points[el.q1[1]]);
            assert_eq!(mesh.q2_points[el.q2[6]], mesh.q1_points[el.q1[2]]);
            assert_eq!(mesh.q2_points[el.q2[8]], mesh.q1_points[el.q1[3]]);
        }
    }

    #[test]
    fn node_ordering_is_lexicographic() {
        let mesh = build_mesh(DomainKind::Channel, 0.25).unwrap();
        for w in mesh.q2_points.windows(2) {
            let key = |p: &[f64; 2]| (p[1], p[0]);
            assert!(key(&w[0]) < key(&w[1]));
        }
    }
}
