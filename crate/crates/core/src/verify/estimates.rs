use nalgebra::Matrix3;

use super::report::EstimateReport;
use crate::assembly::{pcg, SolveOptions};
use crate::enthalpy::graph_distance;
use crate::error::{Error, Result};
use crate::geometry::FlowTrajectory;
use crate::solver::{solve_stefan, DualSolution, SolutionTrajectory, SolverOptions, StefanProblemSpec};
use crate::spaces::{lpx_norm, trapezoid, SpaceTimeField};

/// Relative slack of the L¹ contraction check.
pub const CONTRACTION_RELATIVE_SLACK: f64 = 0.05;
/// Constant `C` of the additive `C·h` slack of the L¹ contraction check.
pub const CONTRACTION_MESH_CONSTANT: f64 = 1.0;
/// Relative slack of the dual energy inequality.
pub const DUAL_ENERGY_SLACK: f64 = 0.10;
/// Relative tolerance of the dual maximum principle.
pub const DUAL_MAX_TOL: f64 = 1e-10;
/// Largest admissible ratio of gradient norms across an ε sweep.
pub const ENERGY_SWEEP_RATIO: f64 = 2.0;

/// `‖u‖∞ + ‖e‖∞` against `2 e^{‖∇_Ω·w‖∞ T}(T‖f‖∞ + ‖u₀‖∞ + 1) + 1`.
pub fn check_linfty_bound(sol: &SolutionTrajectory, spec: &StefanProblemSpec) -> Result<EstimateReport> {
    let traj = sol.trajectory();
    let div = traj.max_abs_divergence()?;
    let t = traj.duration();
    let u0 = sol.u.node(0).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let rhs = 2.0 * (div * t).exp() * (t * spec.f.max_abs() + u0 + 1.0) + 1.0;
    let lhs = sol.u.max_abs() + sol.e.max_abs();
    Ok(EstimateReport::new("linfty_bound", lhs, rhs, 0.0)
        .with_note(format!("max |div w| = {div:.6e}")))
}

/// Discrete `‖∇_Ω u‖_{L²L²}` with the stiffness matrix of each node.
pub fn gradient_norm(sol: &SolutionTrajectory) -> f64 {
    let traj = sol.trajectory();
    let sq: Vec<f64> = (0..traj.num_nodes())
        .map(|k| traj.operators(k).stiffness.bilinear(sol.u.node(k), sol.u.node(k)))
        .collect();
    trapezoid(traj.time_grid(), &sq).max(0.0).sqrt()
}

/// Proxy for `‖∂•e‖_{L²H⁻¹}`: per step `r = (M^L_{k+1} e_{k+1} − M^L_k e_k)/τ`
/// measured as `rᵀ (S + M^L)⁻¹ r` on the new mesh.
pub fn time_derivative_dual_norm(sol: &SolutionTrajectory) -> Result<f64> {
    let traj = sol.trajectory();
    let t = traj.time_grid();
    let mut total = 0.0;
    for k in 0..traj.num_nodes() - 1 {
        let tau = t[k + 1] - t[k];
        let (a, b) = (traj.operators(k), traj.operators(k + 1));
        let r: Vec<f64> = (0..traj.num_vertices())
            .map(|i| (b.lumped[i] * sol.e.node(k + 1)[i] - a.lumped[i] * sol.e.node(k)[i]) / tau)
            .collect();
        let op = b.stiffness.add_diagonal(&b.lumped);
        let mut x = vec![0.0; r.len()];
        pcg(&op, &r, &mut x, SolveOptions::default())?;
        total += tau * r.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total.max(0.0).sqrt())
}

/// Uniformity of `‖∇_Ω u_ε‖_{L²L²}` over an ε sweep: `max/min ≤ 2`.
/// The dual-norm proxy of the time derivative is attached as a note only.
pub fn check_energy_bound(sweep: &[SolutionTrajectory]) -> Result<EstimateReport> {
    if sweep.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let norms: Vec<(f64, f64)> = sweep.iter().map(|s| (s.reg.epsilon(), gradient_norm(s))).collect();
    let hi = norms.iter().map(|n| n.1).fold(0.0, f64::max);
    let lo = norms.iter().map(|n| n.1).fold(f64::INFINITY, f64::min);
    let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    let proxies = sweep
        .iter()
        .map(time_derivative_dual_norm)
        .collect::<Result<Vec<_>>>()?;
    let note = format!(
        "grad L2L2 max {hi:.4e}; time-derivative H^-1 proxy {}",
        proxies.iter().map(|p| format!("{p:.4e}")).collect::<Vec<_>>().join("/")
    );
    Ok(EstimateReport::new("energy_eps_uniformity", ratio, ENERGY_SWEEP_RATIO, 0.0)
        .with_history(norms)
        .with_note(note))
}

/// `(t_k, ‖e¹−e²‖_{L¹(Ω(t_k))}, ∫₀^{t_k} ‖f¹−f²‖_{L¹} + ‖e¹₀−e²₀‖_{L¹})`, with
/// lumped quadrature in space and the trapezoidal rule in time.
pub fn l1_contraction_profile(
    sol1: &SolutionTrajectory,
    spec1: &StefanProblemSpec,
    sol2: &SolutionTrajectory,
    spec2: &StefanProblemSpec,
) -> Result<Vec<(f64, f64, f64)>> {
    let traj = sol1.trajectory();
    if !traj.same_as(sol2.trajectory()) || !spec1.trajectory.same_as(traj) || !spec2.trajectory.same_as(traj) {
        return Err(Error::TrajectoryMismatch("contraction pair must share one trajectory".into()));
    }
    if sol1.reg != sol2.reg {
        return Err(Error::TrajectoryMismatch("contraction pair must share one regularization".into()));
    }
    let t = traj.time_grid();
    let df = spec1.f.difference(&spec2.f)?;
    let src: Vec<f64> = (0..traj.num_nodes()).map(|k| traj.operators(k).lumped_l1(df.node(k))).collect();
    let de0: Vec<f64> = spec1.e0.values().iter().zip(spec2.e0.values()).map(|(a, b)| a - b).collect();
    let mut acc = traj.operators(0).lumped_l1(&de0);
    let de = sol1.e.difference(&sol2.e)?;
    let mut out = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (src[k - 1] + src[k]);
        }
        out.push((t[k], traj.operators(k).lumped_l1(de.node(k)), acc));
    }
    Ok(out)
}

/// Largest `(lhs(t) − rhs(t))⁺` of the contraction profile.
pub fn contraction_violation(profile: &[(f64, f64, f64)]) -> f64 {
    profile.iter().map(|(_, l, r)| (l - r).max(0.0)).fold(0.0, f64::max)
}

/// `lhs(t) ≤ 1.05 rhs(t) + C h` at every node.
pub fn check_l1_contraction(
    sol1: &SolutionTrajectory,
    spec1: &StefanProblemSpec,
    sol2: &SolutionTrajectory,
    spec2: &StefanProblemSpec,
) -> Result<EstimateReport> {
    let profile = l1_contraction_profile(sol1, spec1, sol2, spec2)?;
    let h = sol1.trajectory().mesh_size();
    let excess = profile
        .iter()
        .map(|(_, l, r)| l - (1.0 + CONTRACTION_RELATIVE_SLACK) * r)
        .fold(f64::NEG_INFINITY, f64::max);
    let history = profile.iter().map(|(t, l, r)| (*t, l - r)).collect();
    Ok(EstimateReport::new("l1_contraction", excess, CONTRACTION_MESH_CONSTANT * h, 0.0)
        .with_history(history)
        .with_note(format!("raw violation {:.3e}, h = {h:.4e}", contraction_violation(&profile))))
}

/// Violation at the finer level must be strictly below the coarser one,
/// unless both vanish.
pub fn check_strict_decrease(name: &str, coarse: f64, fine: f64) -> EstimateReport {
    let tol = if coarse == 0.0 && fine == 0.0 { 0.0 } else { -f64::MIN_POSITIVE };
    EstimateReport::new(name, fine, coarse, tol).with_history(vec![(0.0, coarse), (1.0, fine)])
}

/// `C_w = ½ max|∇_Ω·w| + max ‖P sym(∇w) P‖₂` over all nodes and triangle
/// centroids, the growth rate of `∫|∇_Ω φ|²` along the flow.
pub fn dual_growth_constant(traj: &FlowTrajectory) -> Result<f64> {
    if traj.is_stationary() {
        return Ok(0.0);
    }
    let div = traj.max_abs_divergence()?;
    let mut deform: f64 = 0.0;
    for k in 0..traj.num_nodes() {
        let mesh = traj.mesh(k);
        let t = traj.time_grid()[k];
        for tri in 0..mesh.num_triangles() {
            let g = mesh.element(tri)?;
            let [a, b, c] = mesh.triangles()[tri];
            let v = mesh.vertices();
            let centroid = (v[a] + v[b] + v[c]) / 3.0;
            let j = traj.velocity().jacobian(t, &centroid);
            let p = Matrix3::identity() - g.normal * g.normal.transpose();
            let d = p * (0.5 * (j + j.transpose())) * p;
            let norm = d.symmetric_eigenvalues().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            deform = deform.max(norm);
        }
    }
    Ok(0.5 * div + deform)
}

/// Maximum principle and energy inequality of the dual solve.
pub fn check_dual_estimates(out: &DualSolution, c_w: f64) -> [EstimateReport; 2] {
    let max_phi = out.eta.nodes()[..=out.terminal_index]
        .iter()
        .flatten()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    let maxp = EstimateReport::new("dual_max_principle", max_phi, out.terminal_max, DUAL_MAX_TOL * out.terminal_max);
    let e = &out.estimates;
    let lhs = e.time_derivative_sq + e.weighted_laplacian_sq + e.final_gradient_sq;
    let a0 = e.alpha_bound;
    let rhs = (1.0 + a0) * (1.0 + (2.0 * c_w * (1.0 + a0) * e.elapsed).exp()) * e.terminal_gradient_sq;
    let energy = EstimateReport::new("dual_energy", lhs, rhs, DUAL_ENERGY_SLACK * rhs).with_note(format!(
        "dt^2 {:.4e}, alpha lap^2 {:.4e}, grad^2 {:.4e}",
        e.time_derivative_sq, e.weighted_laplacian_sq, e.final_gradient_sq
    ));
    [maxp, energy]
}

/// `‖u_a − u_b‖_{L¹L¹}` with lumped quadrature and the trapezoidal rule.
pub fn l1l1_distance(a: &SpaceTimeField, b: &SpaceTimeField) -> Result<f64> {
    lpx_norm(&a.difference(b)?, 1.0, 1.0)
}

/// Solves for every ε (decreasing) and checks that successive distances
/// `d_j = ‖u_{ε_j} − u_{ε_{j+1}}‖_{L¹L¹}` do not grow and that the finest
/// solution lies within `2ε` of the limiting graph.
pub fn check_eps_convergence(
    spec: &StefanProblemSpec,
    eps_list: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<EstimateReport>, Vec<SolutionTrajectory>)> {
    if eps_list.len() < 3 {
        return Err(Error::TooFewValues {
            needed: 3,
            got: eps_list.len(),
        });
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || !(eps_list[eps_list.len() - 1] > 0.0) {
        return Err(Error::Config {
            field: "eps".into(),
            message: "values must be positive and strictly decreasing".into(),
        });
    }
    let sols = eps_list
        .iter()
        .map(|&eps| solve_stefan(&spec.with_epsilon(eps), opts))
        .collect::<Result<Vec<_>>>()?;
    let d = sols
        .windows(2)
        .map(|w| l1l1_distance(&w[0].u, &w[1].u))
        .collect::<Result<Vec<_>>>()?;
    let growth = d.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let history: Vec<(f64, f64)> = eps_list.iter().zip(&d).map(|(e, d)| (*e, *d)).collect();
    let monotone = EstimateReport::new("eps_cauchy_monotone", growth, 0.0, 1e-12 * dmax.max(1e-300))
        .with_history(history)
        .with_note(format!(
            "distances {}",
            d.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
        ));
    let finest = sols.last().expect("at least three solutions");
    let eps_min = eps_list[eps_list.len() - 1];
    let defect = finest
        .u
        .nodes()
        .iter()
        .flatten()
        .zip(finest.e.nodes().iter().flatten())
        .map(|(u, e)| graph_distance(*u, *e))
        .fold(0.0, f64::max);
    let graph = EstimateReport::new("eps_graph_defect", defect, 2.0 * eps_min, 0.0);
    Ok((vec![monotone, graph], sols))
}

/// `I(m τ) = ∫₀^{T−mτ} ∫_{Ω₀} |ũ(t + mτ) − ũ(t)|` on pulled-back arrays with
/// lumped quadrature on the initial mesh.
pub fn time_translate_integral(u: &SpaceTimeField, shift_steps: usize) -> f64 {
    let traj = u.trajectory();
    let n = u.num_nodes();
    if shift_steps == 0 || shift_steps >= n {
        return 0.0;
    }
    let m0 = traj.operators(0);
    let vals: Vec<f64> = (0..n - shift_steps)
        .map(|k| {
            let (a, b) = (u.node(k + shift_steps), u.node(k));
            m0.lumped.iter().zip(a.iter().zip(b)).map(|(m, (x, y))| m * (x - y).abs()).sum()
        })
        .collect();
    trapezoid(&traj.time_grid()[..n - shift_steps], &vals)
}

/// Evaluates `I(h)` for shifts `h` (multiples of a uniform τ), fits
/// `I ≈ C h^β` and asserts that `I` decreases as `h` decreases.
pub fn check_time_translate(sol: &SolutionTrajectory, h_list: &[f64]) -> Result<EstimateReport> {
    let traj = sol.trajectory();
    let t = traj.time_grid();
    if t.len() < 2 {
        return Err(Error::SingleNode);
    }
    let tau = t[1] - t[0];
    let uniform = t.windows(2).all(|w| ((w[1] - w[0]) - tau).abs() <= 1e-9 * tau);
    if h_list.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: h_list.len(),
        });
    }
    let mut shifts = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let m = (h / tau).round();
        if !uniform || m < 1.0 || (h - m * tau).abs() > 1e-9 * tau || m as usize >= t.len() {
            return Err(Error::ShiftNotMultiple(h));
        }
        shifts.push((h, m as usize));
    }
    shifts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<(f64, f64)> = shifts
        .iter()
        .map(|&(h, m)| (h, time_translate_integral(&sol.u, m)))
        .collect();
    // largest increase of I when h shrinks
    let violation = values.windows(2).map(|w| w[0].1 - w[1].1).fold(f64::NEG_INFINITY, f64::max);
    let all_zero = values.iter().all(|v| v.1 == 0.0);
    let tol = if all_zero { 0.0 } else { -f64::MIN_POSITIVE };
    let beta = fit_exponent(&values);
    let note = match beta {
        Some(b) => format!("fitted exponent {b:.3}"),
        None => "no positive values to fit".into(),
    };
    Ok(EstimateReport::new("time_translate_decay", violation, 0.0, tol)
        .with_history(values)
        .with_note(note))
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn fit_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enthalpy::EnthalpyRegularization;
    use crate::geometry::{advect_mesh, icosphere, uniform_time_grid, VelocityField};
    use crate::spaces::DiscreteField;
    use std::sync::Arc;

    fn spec_on(traj: Arc<FlowTrajectory>, eps: f64, u0: impl Fn(f64) -> f64, fval: f64) -> StefanProblemSpec {
        let e0 = DiscreteField::from_fn(traj.mesh(0), |p| {
            let u = u0(p.z);
            u + if u > 0.0 { 1.0 } else { 0.0 }
        })
        .unwrap();
        let f = SpaceTimeField::constant(traj.clone(), fval).unwrap();
        StefanProblemSpec::new(traj, f, e0, EnthalpyRegularization::new(eps)).unwrap()
    }

    fn sphere(level: usize, t: f64, steps: usize) -> Arc<FlowTrajectory> {
        let grid = uniform_time_grid(t, steps).unwrap();
        Arc::new(FlowTrajectory::stationary(&icosphere(level).unwrap(), &grid).unwrap())
    }

    #[test]
    fn linfty_bound_with_zero_data() {
        let spec = spec_on(sphere(2, 0.5, 4), 0.05, |_| 0.0, 0.0);
        let sol = solve_stefan(&spec, &SolverOptions::default()).unwrap();
        let r = check_linfty_bound(&sol, &spec).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 3.0);
        assert!(r.pass);
    }

    #[test]
    fn linfty_bound_uses_divergence_on_expanding_sphere() {
        let grid = uniform_time_grid(0.25, 8).unwrap();
        let traj = Arc::new(advect_mesh(&icosphere(3).unwrap(), &VelocityField::radial(1.0), &grid).unwrap());
        let spec = spec_on(traj, 0.05, |z| -0.5 + z, 0.0);
        let sol = solve_stefan(&spec, &SolverOptions::default()).unwrap();
        let r = check_linfty_bound(&sol, &spec).unwrap();
        assert!(r.pass);
        let u0 = sol.u.node(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let expect_div2 = 2.0 * (2.0f64 * 0.25).exp() * (u0 + 1.0) + 1.0;
        assert!((r.rhs - expect_div2).abs() / expect_div2 < 1e-2, "{} {}", r.rhs, expect_div2);
    }

    #[test]
    fn energy_of_zero_data_is_zero() {
        let spec = spec_on(sphere(1, 0.5, 2), 0.05, |_| 0.0, 0.0);
        let sol = solve_stefan(&spec, &SolverOptions::default()).unwrap();
        assert_eq!(gradient_norm(&sol), 0.0);
        assert!(check_energy_bound(&[sol]).unwrap().pass);
    }

    #[test]
    fn contraction_identical_and_shifted() {
        let traj = sphere(3, 0.3, 6);
        let s1 = spec_on(traj.clone(), 0.05, |z| -0.5 + z, 0.0);
        let a = solve_stefan(&s1, &SolverOptions::default()).unwrap();
        let r = check_l1_contraction(&a, &s1, &a, &s1).unwrap();
        assert!(r.pass && r.history.iter().all(|h| h.1 == 0.0));

        let delta = 0.3;
        let e0: Vec<f64> = s1.e0.values().iter().map(|e| e + delta).collect();
        let s2 = StefanProblemSpec {
            e0: DiscreteField::new(traj.mesh(0), e0).unwrap(),
            ..s1.clone()
        };
        let b = solve_stefan(&s2, &SolverOptions::default()).unwrap();
        let prof = l1_contraction_profile(&a, &s1, &b, &s2).unwrap();
        let target = delta * traj.area(0);
        for (_, l, r) in &prof {
            assert!((l - target).abs() < 1e-9 && (r - target).abs() < 1e-9);
        }
        let swapped = check_l1_contraction(&b, &s2, &a, &s1).unwrap();
        let direct = check_l1_contraction(&a, &s1, &b, &s2).unwrap();
        assert_eq!(swapped.lhs, direct.lhs);
    }

    #[test]
    fn strict_decrease_rules() {
        assert!(check_strict_decrease("x", 0.0, 0.0).pass);
        assert!(check_strict_decrease("x", 1.0, 0.5).pass);
        assert!(!check_strict_decrease("x", 1.0, 1.0).pass);
        assert!(!check_strict_decrease("x", 1.0, 2.0).pass);
    }

    #[test]
    fn growth_constant_of_presets() {
        assert_eq!(dual_growth_constant(&sphere(1, 1.0, 2)).unwrap(), 0.0);
        let grid = uniform_time_grid(0.1, 2).unwrap();
        let rad = advect_mesh(&icosphere(2).unwrap(), &VelocityField::radial(1.0), &grid).unwrap();
        assert!((dual_growth_constant(&rad).unwrap() - 2.0).abs() < 0.05);
        let rot = advect_mesh(&icosphere(2).unwrap(), &VelocityField::rotation([0.0, 0.0, 1.0], 1.0).unwrap(), &grid)
            .unwrap();
        assert!(dual_growth_constant(&rot).unwrap() < 1e-12);
    }

    #[test]
    fn eps_convergence_one_phase_is_flat() {
        let spec = spec_on(sphere(2, 0.2, 4), 0.05, |z| 2.0 + z, 0.0);
        let (reports, _) = check_eps_convergence(&spec, &[0.2, 0.1, 0.05], &SolverOptions::default()).unwrap();
        assert!(reports.iter().all(|r| r.pass));
        assert!(reports[0].history.iter().all(|h| h.1 < 1e-10));
        assert!(check_eps_convergence(&spec, &[0.2, 0.1], &SolverOptions::default()).is_err());
    }

    #[test]
    fn time_translate_cases() {
        let spec = spec_on(sphere(2, 0.5, 8), 0.05, |z| 2.0 + z, 0.0);
        let sol = solve_stefan(&spec, &SolverOptions::default()).unwrap();
        let r = check_time_translate(&sol, &[0.0625, 0.125, 0.25]).unwrap();
        assert!(r.pass, "{r}");
        assert!(check_time_translate(&sol, &[0.1, 0.25]).is_err());
        assert!(check_time_translate(&sol, &[0.25]).is_err());

        let zero = spec_on(sphere(1, 0.5, 4), 0.05, |_| 0.0, 0.0);
        let sol = solve_stefan(&zero, &SolverOptions::default()).unwrap();
        let r = check_time_translate(&sol, &[0.125, 0.25]).unwrap();
        assert!(r.pass && r.history.iter().all(|h| h.1 == 0.0));
    }

    #[test]
    fn exponent_fit() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.4].iter().map(|&h: &f64| (h, 3.0 * h.powf(1.5))).collect();
        assert!((fit_exponent(&pts).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(fit_exponent(&[(1.0, 0.0)]), None);
    }
}
