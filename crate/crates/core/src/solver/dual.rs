use std::sync::Arc;

use crate::assembly::{pcg, SolveOptions};
use crate::error::{Error, Result};
use crate::geometry::FlowTrajectory;
use crate::spaces::{trapezoid, SpaceTimeField};

use super::stefan::SolutionTrajectory;

/// Backward problem `∂•η + (a + ε) Δ_Ω η = 0` on `[0, t]`, `η(t) = ξ`.
#[derive(Clone, Debug)]
pub struct DualProblemSpec {
    pub trajectory: Arc<FlowTrajectory>,
    pub terminal_index: usize,
    pub terminal_data: Vec<f64>,
    /// Coefficient with nodal values in `[0, 1]`.
    pub a: SpaceTimeField,
    pub epsilon: f64,
}

impl DualProblemSpec {
    pub fn new(
        trajectory: Arc<FlowTrajectory>,
        terminal_index: usize,
        terminal_data: Vec<f64>,
        a: SpaceTimeField,
        epsilon: f64,
    ) -> Result<Self> {
        if terminal_index >= trajectory.num_nodes() {
            return Err(Error::Index(format!(
                "terminal index {terminal_index} on a grid of {} nodes",
                trajectory.num_nodes()
            )));
        }
        if terminal_data.len() != trajectory.num_vertices() {
            return Err(Error::FieldLength {
                expected: trajectory.num_vertices(),
                got: terminal_data.len(),
            });
        }
        if terminal_data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("terminal data"));
        }
        if !a.trajectory().same_as(&trajectory) {
            return Err(Error::TrajectoryMismatch("coefficient lives on another trajectory".into()));
        }
        check_unit_range(&a)?;
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config {
                field: "epsilon".into(),
                message: format!("shift must be positive, got {epsilon}"),
            });
        }
        Ok(DualProblemSpec {
            trajectory,
            terminal_index,
            terminal_data,
            a,
            epsilon,
        })
    }
}

fn check_unit_range(a: &SpaceTimeField) -> Result<()> {
    for (node, vals) in a.nodes().iter().enumerate() {
        if let Some((vertex, &value)) = vals.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::CoefficientRange {
                node,
                vertex,
                value,
            });
        }
    }
    Ok(())
}

/// The three quadratures of the dual energy inequality, in the forward
/// variable `s = t − τ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualEstimates {
    /// `∫∫ φ̇²`
    pub time_derivative_sq: f64,
    /// `∫∫ α |Δ_Ω φ|²` with `Δ_h = −(M^L)⁻¹ S`.
    pub weighted_laplacian_sq: f64,
    /// `∫ |∇_Ω φ|²` at node 0.
    pub final_gradient_sq: f64,
    /// `∫ |∇_Ω ξ|²` on the terminal mesh.
    pub terminal_gradient_sq: f64,
    /// Measured `max α`.
    pub alpha_max: f64,
    /// A priori bound `1 + ε` of `α`, valid for every admissible coefficient.
    pub alpha_bound: f64,
    /// Length of the backward interval.
    pub elapsed: f64,
}

#[derive(Clone, Debug)]
pub struct DualSolution {
    /// `η` at every node; nodes after the terminal index hold `ξ`.
    pub eta: SpaceTimeField,
    pub terminal_index: usize,
    pub terminal_max: f64,
    pub estimates: DualEstimates,
}

/// Backward implicit Euler with the nodally weighted operator
/// `(M^L_k + τ diag(α_k) S_k) η_k = M^L_k η_{k+1}`, `α = a + ε`.
///
/// Off-diagonal entries of `S` are nonpositive on the meshes used here, so
/// each step is an M-matrix solve whose inverse applied to `M^L` preserves
/// constants: nodal extrema cannot grow. The system is symmetrized by
/// `diag(α)⁻¹` and handed to conjugate gradients.
pub fn solve_dual_backward(dual: &DualProblemSpec, linear: SolveOptions) -> Result<DualSolution> {
    let traj = &dual.trajectory;
    let t = traj.time_grid();
    let ti = dual.terminal_index;
    let nv = traj.num_vertices();
    let mut eta = vec![dual.terminal_data.clone(); traj.num_nodes()];
    let alpha_at = |k: usize| -> Vec<f64> { dual.a.node(k).iter().map(|a| a + dual.epsilon).collect() };
    let mut dt_sq = 0.0;
    let mut lap_sq = 0.0;
    let mut alpha_max = dual.epsilon;
    for k in (0..ti).rev() {
        let tau = t[k + 1] - t[k];
        let ops = traj.operators(k);
        let alpha = alpha_at(k);
        alpha_max = alpha.iter().fold(alpha_max, |m, &a| m.max(a));
        let scaled_mass: Vec<f64> = ops.lumped.iter().zip(&alpha).map(|(m, a)| m / a).collect();
        let sys = ops.stiffness.scaled(tau).add_diagonal(&scaled_mass);
        let rhs: Vec<f64> = scaled_mass.iter().zip(&eta[k + 1]).map(|(m, e)| m * e).collect();
        let mut x = eta[k + 1].clone();
        pcg(&sys, &rhs, &mut x, linear)?;
        let lap: Vec<f64> = ops
            .stiffness
            .apply(&x)
            .iter()
            .zip(&ops.lumped)
            .map(|(s, m)| -s / m)
            .collect();
        for i in 0..nv {
            let d = (x[i] - eta[k + 1][i]) / tau;
            dt_sq += tau * ops.lumped[i] * d * d;
            lap_sq += tau * ops.lumped[i] * alpha[i] * lap[i] * lap[i];
        }
        eta[k] = x;
    }
    for e in eta.iter_mut().skip(ti + 1) {
        e.clone_from(&dual.terminal_data);
    }
    let s0 = traj.operators(0);
    let st = traj.operators(ti);
    let estimates = DualEstimates {
        time_derivative_sq: dt_sq,
        weighted_laplacian_sq: lap_sq,
        final_gradient_sq: s0.stiffness.bilinear(&eta[0], &eta[0]),
        terminal_gradient_sq: st.stiffness.bilinear(&dual.terminal_data, &dual.terminal_data),
        alpha_max,
        alpha_bound: 1.0 + dual.epsilon,
        elapsed: t[ti] - t[0],
    };
    let terminal_max = dual.terminal_data.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(DualSolution {
        eta: SpaceTimeField::new(Arc::clone(traj), eta)?,
        terminal_index: ti,
        terminal_max,
        estimates,
    })
}

/// `a = (u¹ − u²)/(e¹ − e²)` nodally, `0` where the enthalpies agree.
/// Values are clipped to `[0, 1]` against roundoff.
pub fn contrast_coefficient(s1: &SolutionTrajectory, s2: &SolutionTrajectory) -> Result<SpaceTimeField> {
    if !s1.trajectory().same_as(s2.trajectory()) {
        return Err(Error::TrajectoryMismatch("solutions live on different trajectories".into()));
    }
    let values = (0..s1.u.num_nodes())
        .map(|k| {
            let (u1, u2, e1, e2) = (s1.u.node(k), s2.u.node(k), s1.e.node(k), s2.e.node(k));
            (0..u1.len())
                .map(|i| {
                    let de = e1[i] - e2[i];
                    if de == 0.0 {
                        0.0
                    } else {
                        ((u1[i] - u2[i]) / de).clamp(0.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    SpaceTimeField::new(Arc::clone(s1.trajectory()), values)
}

/// Space-time `L²` distance with consistent mass and trapezoidal time.
pub fn space_time_l2_distance(a: &SpaceTimeField, b: &SpaceTimeField) -> Result<f64> {
    let d = a.difference(b)?;
    let traj = a.trajectory();
    let sq: Vec<f64> = (0..d.num_nodes())
        .map(|k| traj.operators(k).mass.bilinear(d.node(k), d.node(k)))
        .collect();
    Ok(trapezoid(traj.time_grid(), &sq).max(0.0).sqrt())
}

#[derive(Clone, Debug)]
pub struct MollifiedCoefficient {
    pub field: SpaceTimeField,
    /// Achieved space-time `L²` distance to the input.
    pub distance: f64,
    /// Blend weight of the averaging stencil.
    pub theta: f64,
}

const MIN_THETA: f64 = 1.0 / (1u64 << 30) as f64;

/// Smooths `a` with the stencil `a_i + θ · mean_{j ∈ N(i)} (a_j − a_i)`, where
/// `N(i)` holds the mesh neighbours of vertex `i` and vertex `i` at the
/// adjacent time nodes. `θ` starts at one and halves until the space-time
/// `L²` distance is at most `epsilon`. Output is clipped to `[0, 1]`.
pub fn mollify_coefficient(a: &SpaceTimeField, epsilon: f64) -> Result<MollifiedCoefficient> {
    check_unit_range(a)?;
    let traj = a.trajectory();
    let adj = traj.mesh(0).vertex_neighbours();
    let n = a.num_nodes();
    let increment: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let v = a.node(k);
            (0..v.len())
                .map(|i| {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for &j in &adj[i] {
                        sum += v[j] - v[i];
                        count += 1;
                    }
                    if k > 0 {
                        sum += a.node(k - 1)[i] - v[i];
                        count += 1;
                    }
                    if k + 1 < n {
                        sum += a.node(k + 1)[i] - v[i];
                        count += 1;
                    }
                    sum / count as f64
                })
                .collect()
        })
        .collect();
    let mut theta = 1.0;
    loop {
        let values: Vec<Vec<f64>> = a
            .nodes()
            .iter()
            .zip(&increment)
            .map(|(v, d)| v.iter().zip(d).map(|(x, dx)| (x + theta * dx).clamp(0.0, 1.0)).collect())
            .collect();
        let field = a.with_values(values)?;
        let distance = space_time_l2_distance(&field, a)?;
        if distance <= epsilon {
            return Ok(MollifiedCoefficient {
                field,
                distance,
                theta,
            });
        }
        if theta <= MIN_THETA {
            return Err(Error::MollifierBound {
                achieved: distance,
                requested: epsilon,
            });
        }
        theta *= 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere, uniform_time_grid};
    use rand::{Rng, SeedableRng};

    fn sphere(level: usize, t: f64, steps: usize) -> Arc<FlowTrajectory> {
        let grid = uniform_time_grid(t, steps).unwrap();
        Arc::new(FlowTrajectory::stationary(&icosphere(level).unwrap(), &grid).unwrap())
    }

    #[test]
    fn constant_terminal_data_is_preserved() {
        let traj = sphere(2, 1.0, 5);
        let a = SpaceTimeField::from_fn(traj.clone(), |t, p| 0.5 + 0.4 * (p.x * t).sin()).unwrap();
        let dual = DualProblemSpec::new(traj.clone(), 5, vec![2.5; traj.num_vertices()], a, 0.1).unwrap();
        let sol = solve_dual_backward(&dual, SolveOptions::default()).unwrap();
        for k in 0..=5 {
            assert!(sol.eta.node(k).iter().all(|v| (v - 2.5).abs() < 1e-10));
        }
        assert!(sol.estimates.time_derivative_sq < 1e-18);
        assert!(sol.estimates.final_gradient_sq < 1e-18);
    }

    #[test]
    fn spectral_decay_of_first_eigenfunction() {
        let eps = 0.5;
        let mut errs = vec![];
        for (level, steps) in [(2, 8), (3, 32)] {
            let traj = sphere(level, 1.0, steps);
            let xi: Vec<f64> = traj.mesh(0).vertices().iter().map(|p| p.z).collect();
            let dual = DualProblemSpec::new(traj.clone(), steps, xi.clone(), SpaceTimeField::zeros(traj.clone()), eps)
                .unwrap();
            let sol = solve_dual_backward(&dual, SolveOptions::default()).unwrap();
            let decay = (-2.0 * eps * 1.0f64).exp();
            let err = sol
                .eta
                .node(0)
                .iter()
                .zip(&xi)
                .map(|(a, b)| (a - decay * b).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 0.5 * errs[0] && errs[1] < 0.02, "{errs:?}");
    }

    #[test]
    fn maximum_principle_on_random_data() {
        let traj = sphere(3, 0.5, 10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = SpaceTimeField::from_fn(traj.clone(), |t, p| if p.z > t - 0.2 { 1.0 } else { 0.0 }).unwrap();
        for _ in 0..5 {
            let xi: Vec<f64> = (0..traj.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dual = DualProblemSpec::new(traj.clone(), 10, xi, a.clone(), 0.05).unwrap();
            let sol = solve_dual_backward(&dual, SolveOptions::default()).unwrap();
            assert!(sol.eta.max_abs() <= sol.terminal_max * (1.0 + 1e-10));
        }
    }

    #[test]
    fn coefficient_range_enforced() {
        let traj = sphere(0, 1.0, 2);
        let mut v = vec![vec![0.5; 12]; 3];
        v[2][3] = 1.5;
        let a = SpaceTimeField::new(traj.clone(), v).unwrap();
        assert!(matches!(
            DualProblemSpec::new(traj.clone(), 2, vec![0.0; 12], a.clone(), 0.1),
            Err(Error::CoefficientRange { node: 2, vertex: 3, .. })
        ));
        assert!(mollify_coefficient(&a, 1.0).is_err());
    }

    #[test]
    fn mollifier_cases() {
        let traj = sphere(2, 1.0, 4);
        let c = SpaceTimeField::constant(traj.clone(), 0.3).unwrap();
        let m = mollify_coefficient(&c, 1e-12).unwrap();
        assert_eq!(m.distance, 0.0);
        assert!(m.field.nodes().iter().flatten().all(|&v| (v - 0.3).abs() < 1e-15));

        let ind = SpaceTimeField::from_fn(traj.clone(), |_, p| if p.x > 0.1 { 1.0 } else { 0.0 }).unwrap();
        let m = mollify_coefficient(&ind, 10.0).unwrap();
        assert_eq!(m.theta, 1.0);
        assert!(m.distance <= 10.0);
        let m = mollify_coefficient(&ind, 1e-3).unwrap();
        assert!(m.distance <= 1e-3 && m.theta < 1.0);
        assert!(m.field.nodes().iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
