use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use super::mesh::{Point3, SurfaceMesh};
use super::velocity::{tangential_divergence, VelocityField};
use crate::assembly::SliceOperators;
use crate::error::{Error, Result};

/// Maximum RK4 substep is this value divided by the largest velocity gradient.
const SUBSTEP_SCALE: f64 = 1e-2;

/// Minimum admissible area ratio.
pub const MIN_JACOBIAN: f64 = 1e-8;

/// The discrete evolving surface: one mesh per time node, all sharing the
/// connectivity of the initial mesh. Vertex `i` at every node is the image
/// of vertex `i` of the initial mesh under the flow.
#[derive(Debug)]
pub struct FlowTrajectory {
    time_grid: Vec<f64>,
    meshes: Vec<SurfaceMesh>,
    jacobians: Vec<Vec<f64>>,
    velocity: VelocityField,
    stationary: bool,
    operators: Vec<OnceLock<Arc<SliceOperators>>>,
}

/// `steps + 1` equally spaced nodes on `[0, t_final]`.
pub fn uniform_time_grid(t_final: f64, steps: usize) -> Result<Vec<f64>> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidTimeGrid(format!("final time {t_final} must be positive")));
    }
    if steps == 0 {
        return Err(Error::InvalidTimeGrid("need at least one step".into()));
    }
    Ok((0..=steps)
        .map(|k| if k == steps { t_final } else { t_final * k as f64 / steps as f64 })
        .collect())
}

fn check_grid(time_grid: &[f64]) -> Result<()> {
    if time_grid.is_empty() {
        return Err(Error::InvalidTimeGrid("empty".into()));
    }
    if time_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTimeGrid("non-finite node".into()));
    }
    if let Some(k) = time_grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTimeGrid(format!(
            "nodes {k} and {} are not strictly increasing",
            k + 1
        )));
    }
    Ok(())
}

fn rk4(w: &VelocityField, t0: f64, dt: f64, substeps: usize, x: Point3) -> Point3 {
    let h = dt / substeps as f64;
    let mut x = x;
    for s in 0..substeps {
        let t = t0 + s as f64 * h;
        let k1 = w.eval(t, &x);
        let k2 = w.eval(t + 0.5 * h, &(x + k1 * (0.5 * h)));
        let k3 = w.eval(t + 0.5 * h, &(x + k2 * (0.5 * h)));
        let k4 = w.eval(t + h, &(x + k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Moves every vertex of `mesh0` along `dx/dt = w(t, x)` through the nodes of
/// `time_grid` with a fixed-substep classical Runge–Kutta scheme.
pub fn advect_mesh(
    mesh0: &SurfaceMesh,
    w: &VelocityField,
    time_grid: &[f64],
) -> Result<FlowTrajectory> {
    check_grid(time_grid)?;
    let stationary = w.is_zero();
    let areas0: Vec<f64> = (0..mesh0.num_triangles())
        .map(|t| mesh0.triangle_area(t))
        .collect();
    let mut meshes = vec![mesh0.clone()];
    let mut jacobians = vec![vec![1.0; mesh0.num_triangles()]];
    for k in 1..time_grid.len() {
        if stationary {
            meshes.push(mesh0.clone());
            jacobians.push(vec![1.0; mesh0.num_triangles()]);
            continue;
        }
        let prev = &meshes[k - 1];
        let (t0, dt) = (time_grid[k - 1], time_grid[k] - time_grid[k - 1]);
        let max_grad = prev
            .vertices()
            .iter()
            .map(|x| w.jacobian(t0, x).norm())
            .fold(0.0, f64::max);
        let substeps = ((dt * max_grad / SUBSTEP_SCALE).ceil() as usize).max(1);
        let positions: Vec<Point3> = prev
            .vertices()
            .par_iter()
            .map(|x| rk4(w, t0, dt, substeps, *x))
            .collect();
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("advected vertex positions"));
        }
        let mesh = match prev.with_positions(positions) {
            Ok(m) => m,
            Err(Error::DegenerateElement { triangle, .. }) => {
                return Err(Error::AdvectionFailed { step: k, triangle })
            }
            Err(e) => return Err(e),
        };
        let jac: Vec<f64> = (0..mesh.num_triangles())
            .map(|t| mesh.triangle_area(t) / areas0[t])
            .collect();
        if let Some(t) = jac.iter().position(|&j| !(j > MIN_JACOBIAN)) {
            return Err(Error::AdvectionFailed { step: k, triangle: t });
        }
        meshes.push(mesh);
        jacobians.push(jac);
    }
    let operators = (0..time_grid.len()).map(|_| OnceLock::new()).collect();
    Ok(FlowTrajectory {
        time_grid: time_grid.to_vec(),
        meshes,
        jacobians,
        velocity: w.clone(),
        stationary,
        operators,
    })
}

impl FlowTrajectory {
    /// Trajectory with `mesh` at every node of `time_grid`.
    pub fn stationary(mesh: &SurfaceMesh, time_grid: &[f64]) -> Result<Self> {
        advect_mesh(mesh, &VelocityField::Zero, time_grid)
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn num_nodes(&self) -> usize {
        self.time_grid.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.meshes[0].num_vertices()
    }

    pub fn final_time(&self) -> f64 {
        *self.time_grid.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.final_time() - self.time_grid[0]
    }

    pub fn mesh(&self, k: usize) -> &SurfaceMesh {
        &self.meshes[k]
    }

    pub fn meshes(&self) -> &[SurfaceMesh] {
        &self.meshes
    }

    pub fn velocity(&self) -> &VelocityField {
        &self.velocity
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// Area ratio of triangle `tri` at node `k` relative to node 0.
    pub fn jacobian(&self, k: usize, tri: usize) -> f64 {
        self.jacobians[k][tri]
    }

    pub fn jacobians(&self, k: usize) -> &[f64] {
        &self.jacobians[k]
    }

    /// `(min J, max J)` over all nodes and triangles.
    pub fn jacobian_range(&self) -> (f64, f64) {
        self.jacobians
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &j| (lo.min(j), hi.max(j)))
    }

    /// Tangential divergence of the velocity per triangle at node `k`.
    pub fn divergence(&self, k: usize) -> Result<Vec<f64>> {
        tangential_divergence(&self.velocity, &self.meshes[k], self.time_grid[k])
    }

    /// `max |∇_Ω · w|` over all nodes and triangles.
    pub fn max_abs_divergence(&self) -> Result<f64> {
        if self.stationary {
            return Ok(0.0);
        }
        let mut m: f64 = 0.0;
        for k in 0..self.num_nodes() {
            m = self.divergence(k)?.iter().fold(m, |m, d| m.max(d.abs()));
        }
        Ok(m)
    }

    /// Largest edge length over all nodes.
    pub fn mesh_size(&self) -> f64 {
        if self.stationary {
            return self.meshes[0].max_edge_length();
        }
        self.meshes.iter().map(|m| m.max_edge_length()).fold(0.0, f64::max)
    }

    /// Surface area at node `k`.
    pub fn area(&self, k: usize) -> f64 {
        self.operators(k).total_area()
    }

    /// Mass, lumped mass and stiffness on the node-`k` mesh, built once.
    pub fn operators(&self, k: usize) -> Arc<SliceOperators> {
        let k = if self.stationary { 0 } else { k };
        Arc::clone(self.operators[k].get_or_init(|| {
            Arc::new(
                SliceOperators::build(&self.meshes[k])
                    .expect("trajectory meshes are validated on construction"),
            )
        }))
    }

    pub fn same_as(&self, other: &FlowTrajectory) -> bool {
        std::ptr::eq(self, other)
            || (self.time_grid == other.time_grid
                && self.meshes[0].shares_connectivity(&other.meshes[0])
                && self
                    .meshes
                    .iter()
                    .zip(&other.meshes)
                    .all(|(a, b)| a.vertices() == b.vertices()))
    }
}
