use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Closed, consistently oriented triangulated surface.
///
/// Vertex positions and the triangle table are reference counted so that the
/// meshes of a trajectory share one connectivity table.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    vertices: Arc<Vec<Point3>>,
    triangles: Arc<Vec<[usize; 3]>>,
}

/// Area, P1 hat-function surface gradients and unit normal of one triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub gradients: [Point3; 3],
    pub normal: Point3,
}

impl SurfaceMesh {
    /// Builds and validates a mesh: indices in range, every vertex used,
    /// every edge shared by exactly two oppositely oriented triangles, and
    /// no zero-area triangle.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = SurfaceMesh {
            vertices: Arc::new(vertices),
            triangles: Arc::new(triangles),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Mesh sharing `self`'s connectivity with new vertex positions. Only
    /// areas are re-checked.
    pub fn with_positions(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::FieldLength {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        let mesh = SurfaceMesh {
            vertices: Arc::new(vertices),
            triangles: Arc::clone(&self.triangles),
        };
        for t in 0..mesh.num_triangles() {
            mesh.element(t)?;
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn shares_connectivity(&self, other: &SurfaceMesh) -> bool {
        Arc::ptr_eq(&self.triangles, &other.triangles) || self.triangles == other.triangles
    }

    pub(crate) fn triangle_points(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.triangle_points(t);
        0.5 * (p1 - p0).cross(&(p2 - p0)).norm()
    }

    /// Per-element surface calculus for triangle `t`.
    pub fn element(&self, t: usize) -> Result<ElementGeometry> {
        element_geometry(self, t)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Longest edge length.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in 0..self.num_triangles() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                h = h.max((p[(i + 1) % 3] - p[i]).norm());
            }
        }
        h
    }

    /// Sorted vertex neighbours (excluding the vertex itself).
    pub fn vertex_neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for tri in self.triangles.iter() {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        adj[tri[i]].push(tri[j]);
                    }
                }
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        adj
    }

    /// Triangles adjacent across each edge: `result[t][i]` is the triangle on
    /// the other side of the edge opposite local vertex `i`.
    pub fn triangle_neighbours(&self) -> Vec<[usize; 3]> {
        let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                edge_owner.insert((tri[(i + 1) % 3], tri[(i + 2) % 3]), t);
            }
        }
        self.triangles
            .iter()
            .map(|tri| {
                let mut nb = [usize::MAX; 3];
                for (i, slot) in nb.iter_mut().enumerate() {
                    let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                    *slot = edge_owner[&(b, a)];
                }
                nb
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if nv == 0 || self.triangles.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        if self.vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("vertex coordinates"));
        }
        let mut used = vec![false; nv];
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {v} of {nv}"
                    )));
                }
                used[v] = true;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            for i in 0..3 {
                let e = (tri[i], tri[(i + 1) % 3]);
                if directed.insert(e, t).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "edge {:?} used twice with the same orientation",
                        e
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) is a boundary edge or inconsistently oriented"
                )));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not used")));
        }
        for t in 0..self.num_triangles() {
            self.element(t)?;
        }
        Ok(())
    }
}

/// Area, hat-function gradients and unit normal of triangle `t`.
///
/// The gradient of the hat function of local vertex `i` is
/// `n × (p_{i+2} − p_{i+1}) / (2A)`; the three gradients lie in the triangle
/// plane and sum to zero.
pub fn element_geometry(mesh: &SurfaceMesh, t: usize) -> Result<ElementGeometry> {
    if t >= mesh.num_triangles() {
        return Err(Error::Index(format!("triangle {t}")));
    }
    let p = mesh.triangle_points(t);
    let cross = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let twice_area = cross.norm();
    let scale = (p[1] - p[0]).norm_squared().max((p[2] - p[0]).norm_squared());
    if !(twice_area > 1e-14 * scale) || !twice_area.is_finite() {
        return Err(Error::DegenerateElement {
            triangle: t,
            area: 0.5 * twice_area,
        });
    }
    let normal = cross / twice_area;
    let gradients = [0, 1, 2].map(|i| normal.cross(&(p[(i + 2) % 3] - p[(i + 1) % 3])) / twice_area);
    Ok(ElementGeometry {
        area: 0.5 * twice_area,
        gradients,
        normal,
    })
}
