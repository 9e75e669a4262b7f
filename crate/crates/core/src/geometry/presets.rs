use std::collections::HashMap;
use std::f64::consts::PI;

use super::mesh::{Point3, SurfaceMesh};
use crate::error::{Error, Result};

pub const MAX_ICOSPHERE_LEVEL: usize = 6;

/// Unit icosphere: the icosahedron with `level` rounds of 4:1 midpoint
/// subdivision, new vertices projected to the sphere. Outward orientation.
pub fn icosphere(level: usize) -> Result<SurfaceMesh> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(Error::InvalidMesh(format!(
            "icosphere level {level} above {MAX_ICOSPHERE_LEVEL}"
        )));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point3::from(*p).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Torus with major radius 1.0 and minor radius 0.4 on an `n_u × n_v` grid
/// (`u` around the central axis, `v` around the tube), outward oriented.
pub fn torus(n_u: usize, n_v: usize) -> Result<SurfaceMesh> {
    torus_with_radii(n_u, n_v, 1.0, 0.4)
}

pub fn torus_with_radii(n_u: usize, n_v: usize, major: f64, minor: f64) -> Result<SurfaceMesh> {
    if n_u < 3 || n_v < 3 {
        return Err(Error::InvalidMesh(format!(
            "torus grid needs at least 3x3 cells, got {n_u}x{n_v}"
        )));
    }
    if !(minor > 0.0 && major > minor) {
        return Err(Error::InvalidMesh("torus radii must satisfy 0 < minor < major".into()));
    }
    let mut vertices = Vec::with_capacity(n_u * n_v);
    for i in 0..n_u {
        let u = 2.0 * PI * i as f64 / n_u as f64;
        for j in 0..n_v {
            let v = 2.0 * PI * j as f64 / n_v as f64;
            let r = major + minor * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % n_u) * n_v + (j % n_v);
    let mut triangles = Vec::with_capacity(2 * n_u * n_v);
    for i in 0..n_u {
        for j in 0..n_v {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    SurfaceMesh::new(vertices, triangles)
}
