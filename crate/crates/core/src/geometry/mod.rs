//! Evolving closed triangulated surfaces: meshes, presets, prescribed
//! velocities and the discrete flow map.

mod flow;
mod mesh;
mod off;
mod presets;
mod velocity;

pub use flow::{advect_mesh, uniform_time_grid, FlowTrajectory, MIN_JACOBIAN};
pub use mesh::{element_geometry, ElementGeometry, Point3, SurfaceMesh};
pub use off::{off_string, parse_off, write_off};
pub use presets::{icosphere, torus, torus_with_radii, MAX_ICOSPHERE_LEVEL};
pub use velocity::{tangential_divergence, ExpressionVelocity, VelocityField};

/// Area of triangle `tri` at node `t_index` relative to node 0.
pub fn jacobian(traj: &FlowTrajectory, t_index: usize, tri_index: usize) -> f64 {
    traj.jacobian(t_index, tri_index)
}
