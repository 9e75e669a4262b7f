use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Check, InnerSchemeConfig, MeshConfig, ScenarioConfig, VelocityConfig};
use crate::assembly::SolveOptions;
use crate::enthalpy::EnthalpyRegularization;
use crate::error::{Error, Result};
use crate::expr::{Expr, Point};
use crate::geometry::{advect_mesh, icosphere, parse_off, torus, uniform_time_grid, FlowTrajectory, SurfaceMesh, VelocityField};
use crate::solver::{
    contrast_coefficient, mollify_coefficient, solve_dual_backward, solve_stefan, DualProblemSpec, InnerScheme,
    SolutionTrajectory, SolverOptions, StefanProblemSpec,
};
use crate::spaces::{trapezoid, write_stfield, DiscreteField, SpaceTimeField};
use crate::verify::{
    check_dual_estimates, check_energy_bound, check_eps_convergence, check_l1_contraction, check_linfty_bound,
    check_stefan_condition, check_strict_decrease, check_time_translate, contraction_violation, dual_growth_constant,
    extract_interface, l1_contraction_profile, write_interface_csv,
    write_reports_csv, EstimateReport, InterfaceCurve,
};

/// Relative tolerance of the discrete enthalpy balance.
pub const CONSERVATION_TOL: f64 = 1e-10;
/// Tolerance of `e = E_ε(u)` at every node.
pub const GRAPH_TOL: f64 = 1e-12;

/// Enthalpy selected from a temperature: `u` where `u ≤ 0`, `u + 1` where
/// `u > 0`.
pub fn enthalpy_from_temperature(u: f64) -> f64 {
    if u > 0.0 {
        u + 1.0
    } else {
        u
    }
}

pub fn build_mesh(cfg: &MeshConfig) -> Result<SurfaceMesh> {
    match cfg {
        MeshConfig::Icosphere { level } => icosphere(*level),
        MeshConfig::Torus { n_u, n_v } => torus(*n_u, *n_v),
        MeshConfig::Off { path } => parse_off(&fs::read_to_string(path)?),
    }
}

pub fn build_velocity(cfg: &VelocityConfig) -> Result<VelocityField> {
    Ok(match cfg {
        VelocityConfig::Zero => VelocityField::Zero,
        VelocityConfig::Radial { rate } => VelocityField::radial(*rate),
        VelocityConfig::Rotation { axis, omega } => VelocityField::rotation(*axis, *omega)?,
        VelocityConfig::Expression { components: [a, b, c] } => VelocityField::from_expressions(a, b, c)?,
    })
}

pub fn build_trajectory(cfg: &ScenarioConfig) -> Result<Arc<FlowTrajectory>> {
    let mesh = build_mesh(&cfg.mesh)?;
    let grid = uniform_time_grid(cfg.time.t_final, cfg.time.steps)?;
    Ok(Arc::new(advect_mesh(&mesh, &build_velocity(&cfg.velocity)?, &grid)?))
}

pub fn solver_options(cfg: &ScenarioConfig) -> SolverOptions {
    SolverOptions {
        inner_scheme: match cfg.solver.inner {
            InnerSchemeConfig::Newton => InnerScheme::Newton,
            InnerSchemeConfig::FrozenFixedPoint => InnerScheme::FrozenFixedPoint,
        },
        newton_tol: cfg.solver.newton_tol,
        max_inner: cfg.solver.max_inner,
        linear_tol: cfg.solver.linear_tol,
    }
}

fn expression_field(traj: &Arc<FlowTrajectory>, src: &str) -> Result<SpaceTimeField> {
    let e = Expr::parse(src)?;
    SpaceTimeField::from_fn(Arc::clone(traj), |t, x| e.eval(&Point::new(t, [x.x, x.y, x.z])))
}

fn initial_enthalpy(traj: &FlowTrajectory, u0: Option<&str>, e0: Option<&str>) -> Result<DiscreteField> {
    let (src, from_temperature) = match (u0, e0) {
        (Some(u), _) => (u, true),
        (None, Some(e)) => (e, false),
        (None, None) => unreachable!("validated configs carry u0 or e0"),
    };
    let expr = Expr::parse(src)?;
    let t0 = traj.time_grid()[0];
    DiscreteField::from_fn(traj.mesh(0), |x| {
        let v = expr.eval(&Point::new(t0, [x.x, x.y, x.z]));
        if from_temperature {
            enthalpy_from_temperature(v)
        } else {
            v
        }
    })
}

/// Problem of the primary data set on `traj`.
pub fn build_spec(cfg: &ScenarioConfig, traj: &Arc<FlowTrajectory>) -> Result<StefanProblemSpec> {
    let f = expression_field(traj, &cfg.data.f)?;
    let e0 = initial_enthalpy(traj, cfg.data.u0.as_deref(), cfg.data.e0.as_deref())?;
    StefanProblemSpec::new(Arc::clone(traj), f, e0, EnthalpyRegularization::new(cfg.regularization.epsilon))
}

/// Problem of the `[pair]` data set, falling back to the primary data.
pub fn build_pair_spec(cfg: &ScenarioConfig, traj: &Arc<FlowTrajectory>) -> Result<Option<StefanProblemSpec>> {
    let Some(p) = &cfg.pair else { return Ok(None) };
    let f = expression_field(traj, p.f.as_deref().unwrap_or(&cfg.data.f))?;
    let e0 = if p.u0.is_some() || p.e0.is_some() {
        initial_enthalpy(traj, p.u0.as_deref(), p.e0.as_deref())?
    } else {
        initial_enthalpy(traj, cfg.data.u0.as_deref(), cfg.data.e0.as_deref())?
    };
    let reg = EnthalpyRegularization::new(cfg.regularization.epsilon);
    Ok(Some(StefanProblemSpec::new(Arc::clone(traj), f, e0, reg)?))
}

/// `(‖u − u_exact‖_{L²(Ω(T))}, ‖u − u_exact‖_{L²L²})` with consistent mass.
pub fn exact_errors(sol: &SolutionTrajectory, exact: &str) -> Result<(f64, f64)> {
    let traj = sol.trajectory();
    let exact = expression_field(traj, exact)?;
    let d = sol.u.difference(&exact)?;
    let sq: Vec<f64> = (0..d.num_nodes())
        .map(|k| traj.operators(k).mass.bilinear(d.node(k), d.node(k)).max(0.0))
        .collect();
    Ok((sq[sq.len() - 1].sqrt(), trapezoid(traj.time_grid(), &sq).sqrt()))
}

/// Same scenario one level finer: mesh level + 1 (or doubled torus grid),
/// twice the steps and half the ε.
pub fn refined(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.mesh = match &cfg.mesh {
        MeshConfig::Icosphere { level } => MeshConfig::Icosphere { level: level + 1 },
        MeshConfig::Torus { n_u, n_v } => MeshConfig::Torus {
            n_u: 2 * n_u,
            n_v: 2 * n_v,
        },
        other => other.clone(),
    };
    c.time.steps *= 2;
    c.regularization.epsilon /= 2.0;
    c
}

/// Solutions and reports of one scenario.
#[derive(Debug)]
pub struct RunOutcome {
    pub spec: StefanProblemSpec,
    pub solution: SolutionTrajectory,
    pub pair: Option<(StefanProblemSpec, SolutionTrajectory)>,
    pub reports: Vec<EstimateReport>,
    pub interfaces: Vec<InterfaceCurve>,
}

impl RunOutcome {
    /// False iff an asserted check failed.
    pub fn success(&self) -> bool {
        self.reports.iter().all(EstimateReport::acceptable)
    }
}

pub fn conservation_report(sol: &SolutionTrajectory, spec: &StefanProblemSpec) -> EstimateReport {
    let defect = sol.conservation_defect(spec).abs();
    let scale = sol.conservation_scale(spec);
    EstimateReport::new("conservation", defect, CONSERVATION_TOL * scale, 0.0)
        .with_note(format!("relative defect {:.3e}", defect / scale.max(f64::MIN_POSITIVE)))
}

pub fn graph_report(sol: &SolutionTrajectory) -> EstimateReport {
    EstimateReport::new("graph_consistency", sol.graph_consistency(), GRAPH_TOL, 0.0)
}

/// Contraction of the pair plus, when requested, strict decrease of the
/// violation one refinement level up.
fn contraction_reports(cfg: &ScenarioConfig, out: &RunOutcome, opts: &SolverOptions) -> Result<Vec<EstimateReport>> {
    let (spec2, sol2) = out.pair.as_ref().expect("validated: contraction needs a pair");
    let mut reports = vec![check_l1_contraction(&out.solution, &out.spec, sol2, spec2)?];
    if cfg.pair.as_ref().is_some_and(|p| p.refine) {
        let coarse = contraction_violation(&l1_contraction_profile(&out.solution, &out.spec, sol2, spec2)?);
        let fine_cfg = refined(cfg);
        let traj = build_trajectory(&fine_cfg)?;
        let s1 = build_spec(&fine_cfg, &traj)?;
        let s2 = build_pair_spec(&fine_cfg, &traj)?.expect("pair survives refinement");
        let (u1, u2) = (solve_stefan(&s1, opts)?, solve_stefan(&s2, opts)?);
        let fine = contraction_violation(&l1_contraction_profile(&u1, &s1, &u2, &s2)?);
        reports.push(check_strict_decrease("l1_contraction_refinement", coarse, fine));
    }
    Ok(reports)
}

/// Random terminal data in `[−1, 1]` at the final node, coefficient from the
/// pair's contrast (mollified to ε) or zero without a pair.
fn dual_reports(cfg: &ScenarioConfig, out: &RunOutcome, seed: u64, linear: SolveOptions) -> Result<Vec<EstimateReport>> {
    let traj = out.solution.trajectory();
    let eps = cfg.regularization.epsilon;
    let a = match &out.pair {
        Some((_, sol2)) => mollify_coefficient(&contrast_coefficient(&out.solution, sol2)?, eps)?.field,
        None => SpaceTimeField::zeros(Arc::clone(traj)),
    };
    let c_w = dual_growth_constant(traj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = traj.num_nodes() - 1;
    let (mut worst_max, mut worst_energy): (Option<EstimateReport>, Option<EstimateReport>) = (None, None);
    for _ in 0..cfg.checks.dual_samples {
        let xi: Vec<f64> = (0..traj.num_vertices()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let dual = DualProblemSpec::new(Arc::clone(traj), last, xi, a.clone(), eps)?;
        let [max, energy] = check_dual_estimates(&solve_dual_backward(&dual, linear)?, c_w);
        let rel = |r: &EstimateReport| r.slack / r.rhs.abs().max(f64::MIN_POSITIVE);
        if worst_max.as_ref().is_none_or(|w| rel(&max) < rel(w)) {
            worst_max = Some(max);
        }
        if worst_energy.as_ref().is_none_or(|w| rel(&energy) < rel(w)) {
            worst_energy = Some(energy);
        }
    }
    let note = format!("worst of {} random terminal data, seed {seed}", cfg.checks.dual_samples);
    Ok([worst_max, worst_energy]
        .into_iter()
        .flatten()
        .map(|r| {
            let n = if r.note.is_empty() { note.clone() } else { format!("{}; {note}", r.note) };
            r.with_note(n)
        })
        .collect())
}

/// Solves the scenario and evaluates its checks. `seed` overrides the
/// configured seed of the random dual data.
pub fn evaluate(cfg: &ScenarioConfig, seed: Option<u64>) -> Result<RunOutcome> {
    cfg.validate()?;
    let opts = solver_options(cfg);
    let traj = build_trajectory(cfg)?;
    let spec = build_spec(cfg, &traj)?;
    let solution = solve_stefan(&spec, &opts)?;
    let pair = match build_pair_spec(cfg, &traj)? {
        Some(s2) => {
            let sol2 = solve_stefan(&s2, &opts)?;
            Some((s2, sol2))
        }
        None => None,
    };
    let mut out = RunOutcome {
        spec,
        solution,
        pair,
        reports: Vec::new(),
        interfaces: Vec::new(),
    };
    let linear = SolveOptions {
        rel_tol: opts.linear_tol,
        ..SolveOptions::default()
    };
    let mut reports = Vec::new();
    for check in Check::ALL.into_iter().filter(|c| cfg.checks.run.contains(c)) {
        match check {
            Check::Conservation => {
                reports.push(conservation_report(&out.solution, &out.spec));
                if let Some((s2, u2)) = &out.pair {
                    let mut r = conservation_report(u2, s2);
                    r.name = "conservation_pair".into();
                    reports.push(r);
                }
            }
            Check::Graph => reports.push(graph_report(&out.solution)),
            Check::Linfty => reports.push(check_linfty_bound(&out.solution, &out.spec)?),
            Check::Energy => {
                let eps0 = cfg.regularization.epsilon;
                let mut sweep = vec![out.solution.clone()];
                for j in 1..4 {
                    sweep.push(solve_stefan(&out.spec.with_epsilon(eps0 / f64::from(1 << j)), &opts)?);
                }
                reports.push(check_energy_bound(&sweep)?);
            }
            Check::Contraction => reports.extend(contraction_reports(cfg, &out, &opts)?),
            Check::Dual => reports.extend(dual_reports(cfg, &out, seed.unwrap_or(cfg.checks.seed), linear)?),
            Check::Eps => {
                let (r, _) = check_eps_convergence(&out.spec, &cfg.regularization.sweep, &opts)?;
                reports.extend(r);
            }
            Check::TimeTranslate => {
                let t = traj.time_grid();
                let tau = t[1] - t[0];
                let h: Vec<f64> = cfg
                    .checks
                    .time_shifts
                    .iter()
                    .filter(|&&m| m < t.len())
                    .map(|&m| m as f64 * tau)
                    .collect();
                reports.push(check_time_translate(&out.solution, &h)?);
            }
            Check::Interface => {
                out.interfaces = (0..traj.num_nodes())
                    .map(|k| extract_interface(&out.solution, k))
                    .collect::<Result<_>>()?;
                if let Some(curve) = out.interfaces.iter().rev().find(|c| !c.is_empty() && c.node > 0) {
                    if let Some(r) = check_stefan_condition(&out.solution, curve)? {
                        reports.push(r);
                    }
                }
            }
            Check::Exact => {
                let exact = cfg.data.exact_u.as_deref().expect("validated: exact needs exact_u");
                let (fin, l2l2) = exact_errors(&out.solution, exact)?;
                reports.push(
                    EstimateReport::new("exact_final_l2", fin, cfg.checks.exact_final_tol, 0.0)
                        .with_note(format!("L2L2 error {l2l2:.6e}")),
                );
            }
        }
    }
    out.reports = reports;
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    config_hash: String,
    initial_enthalpy: &'static str,
    vertices: usize,
    triangles: usize,
    mesh_size: f64,
    success: bool,
    solver: ManifestSolver,
    steps: Vec<ManifestStep>,
    config: &'a ScenarioConfig,
}

#[derive(Serialize)]
struct ManifestSolver {
    inner_scheme: String,
    newton_tol: f64,
    max_inner: usize,
    linear_tol: f64,
    epsilon: f64,
}

#[derive(Serialize)]
struct ManifestStep {
    step: usize,
    time: f64,
    inner_iters: usize,
    residual: f64,
    conservation_defect: f64,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

/// Writes `ledger.csv`, `reports.csv`, `summary.txt`, `u.stfield`,
/// `e.stfield`, `interface.csv` (when extracted) and `manifest.toml`.
pub fn write_artifacts(cfg: &ScenarioConfig, out: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    out.solution.write_ledger_csv(create(dir, "ledger.csv")?)?;
    write_reports_csv(&out.reports, create(dir, "reports.csv")?)?;
    fs::write(dir.join("summary.txt"), crate::verify::summary(&out.reports))?;
    write_stfield(&out.solution.u, create(dir, "u.stfield")?)?;
    write_stfield(&out.solution.e, create(dir, "e.stfield")?)?;
    if !out.interfaces.is_empty() {
        write_interface_csv(&out.interfaces, create(dir, "interface.csv")?)?;
    }
    let opts = solver_options(cfg);
    let traj = out.solution.trajectory();
    let manifest = Manifest {
        name: &cfg.name,
        config_hash: cfg.hash(),
        initial_enthalpy: if cfg.data.u0.is_some() {
            "from temperature: e0 = u0 where u0 <= 0, u0 + 1 where u0 > 0"
        } else {
            "given"
        },
        vertices: traj.num_vertices(),
        triangles: traj.mesh(0).num_triangles(),
        mesh_size: traj.mesh_size(),
        success: out.success(),
        solver: ManifestSolver {
            inner_scheme: format!("{:?}", opts.inner_scheme),
            newton_tol: opts.newton_tol,
            max_inner: opts.max_inner,
            linear_tol: opts.linear_tol,
            epsilon: out.solution.reg.epsilon(),
        },
        steps: out
            .solution
            .diagnostics
            .iter()
            .map(|d| ManifestStep {
                step: d.step,
                time: d.time,
                inner_iters: d.inner_iters,
                residual: d.residual,
                conservation_defect: d.conservation_defect,
            })
            .collect(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config {
        field: "manifest".into(),
        message: e.to_string(),
    })?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Solves, checks and writes artifacts to `dir`.
pub fn run(cfg: &ScenarioConfig, dir: &Path, seed: Option<u64>) -> Result<RunOutcome> {
    let out = evaluate(cfg, seed)?;
    write_artifacts(cfg, &out, dir)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::preset;

    fn small(name: &str) -> ScenarioConfig {
        let mut c = preset(name).unwrap();
        c.mesh = MeshConfig::Icosphere { level: 2 };
        c.time.steps = 8;
        c
    }

    #[test]
    fn branch_convention() {
        assert_eq!(enthalpy_from_temperature(-0.5), -0.5);
        assert_eq!(enthalpy_from_temperature(0.0), 0.0);
        assert_eq!(enthalpy_from_temperature(0.5), 1.5);
    }

    #[test]
    fn refinement_doubles_resolution() {
        let c = refined(&preset("contraction_pair").unwrap());
        assert_eq!(c.mesh, MeshConfig::Icosphere { level: 4 });
        assert_eq!(c.time.steps, 64);
        assert_eq!(c.regularization.epsilon, 0.025);
    }

    #[test]
    fn run_writes_artifacts_and_reruns_identically() {
        let mut cfg = small("freezing_sphere");
        cfg.checks.run = vec![Check::Conservation, Check::Graph, Check::Linfty, Check::Interface];
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let out = run(&cfg, &a, None).unwrap();
        assert!(out.success(), "{}", crate::verify::summary(&out.reports));
        run(&cfg, &b, None).unwrap();
        for f in ["ledger.csv", "reports.csv", "u.stfield", "e.stfield", "interface.csv", "manifest.toml"] {
            let x = fs::read(a.join(f)).unwrap();
            assert!(!x.is_empty(), "{f}");
            assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        }
        let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
        assert!(manifest.contains(&cfg.hash()));
        assert!(manifest.contains("u0 + 1 where u0 > 0"));
    }

    #[test]
    fn pair_checks_on_small_mesh() {
        let mut cfg = small("contraction_pair");
        cfg.pair.as_mut().unwrap().refine = false;
        cfg.checks.dual_samples = 3;
        let out = evaluate(&cfg, Some(7)).unwrap();
        let names: Vec<&str> = out.reports.iter().map(|r| r.name.as_str()).collect();
        assert!(names.contains(&"l1_contraction"), "{names:?}");
        assert!(names.contains(&"dual_max_principle"), "{names:?}");
        assert!(out.success(), "{}", crate::verify::summary(&out.reports));
    }

    #[test]
    fn failing_asserted_check_fails_the_run() {
        let mut cfg = small("one_phase_sphere");
        cfg.checks.run = vec![Check::Exact];
        cfg.checks.exact_final_tol = 1e-12;
        let out = evaluate(&cfg, None).unwrap();
        assert!(!out.success());
    }
}
