use std::io::Write;
use std::sync::Arc;

use crate::assembly::{pcg, SliceOperators, SolveOptions, SparseOperator};
use crate::enthalpy::EnthalpyRegularization;
use crate::error::{Error, Result};
use crate::geometry::FlowTrajectory;
use crate::spaces::{DiscreteField, SpaceTimeField};

/// Data of the regularized problem on a fixed trajectory.
#[derive(Clone, Debug)]
pub struct StefanProblemSpec {
    pub trajectory: Arc<FlowTrajectory>,
    /// Source at every time node.
    pub f: SpaceTimeField,
    /// Initial enthalpy on the initial mesh.
    pub e0: DiscreteField,
    pub reg: EnthalpyRegularization,
}

impl StefanProblemSpec {
    pub fn new(
        trajectory: Arc<FlowTrajectory>,
        f: SpaceTimeField,
        e0: DiscreteField,
        reg: EnthalpyRegularization,
    ) -> Result<Self> {
        if !f.trajectory().same_as(&trajectory) {
            return Err(Error::TrajectoryMismatch("source field lives on another trajectory".into()));
        }
        if e0.values().len() != trajectory.num_vertices() {
            return Err(Error::FieldLength {
                expected: trajectory.num_vertices(),
                got: e0.values().len(),
            });
        }
        Ok(StefanProblemSpec {
            trajectory,
            f,
            e0,
            reg,
        })
    }

    /// Same data with another regularization width.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        StefanProblemSpec {
            reg: EnthalpyRegularization::new(epsilon),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerScheme {
    /// Newton with a backtracking line search on the convex step functional.
    Newton,
    /// Undamped linearization with the coefficient `E_ε′` frozen at the
    /// previous iterate.
    FrozenFixedPoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub inner_scheme: InnerScheme,
    /// Relative nonlinear residual target.
    pub newton_tol: f64,
    pub max_inner: usize,
    pub linear_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            inner_scheme: InnerScheme::Newton,
            newton_tol: 1e-10,
            max_inner: 100,
            linear_tol: 1e-11,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, v: f64| Error::Config {
            field: field.into(),
            message: format!("must be positive, got {v}"),
        };
        if !(self.newton_tol > 0.0) {
            return Err(bad("newton_tol", self.newton_tol));
        }
        if !(self.linear_tol > 0.0) {
            return Err(bad("linear_tol", self.linear_tol));
        }
        if self.max_inner == 0 {
            return Err(bad("max_inner", 0.0));
        }
        Ok(())
    }

    fn linear(&self) -> SolveOptions {
        SolveOptions {
            rel_tol: self.linear_tol,
            ..SolveOptions::default()
        }
    }
}

/// Per-step record of the time integration.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// Index of the node that was computed.
    pub step: usize,
    pub time: f64,
    pub inner_iters: usize,
    /// Final relative nonlinear residual.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// `1ᵀ M^L e` at the new node.
    pub enthalpy_total: f64,
    pub umin: f64,
    pub umax: f64,
    /// `1ᵀM^L_{k+1} e_{k+1} − 1ᵀM^L_k e_k − τ 1ᵀM_{k+1} f_{k+1}`.
    pub conservation_defect: f64,
}

/// Temperature and enthalpy at every node plus the step ledger.
#[derive(Clone, Debug)]
pub struct SolutionTrajectory {
    pub u: SpaceTimeField,
    pub e: SpaceTimeField,
    pub diagnostics: Vec<StepDiagnostics>,
    pub reg: EnthalpyRegularization,
}

impl SolutionTrajectory {
    pub fn trajectory(&self) -> &Arc<FlowTrajectory> {
        self.u.trajectory()
    }

    /// Accumulated enthalpy balance defect over the whole run.
    pub fn conservation_defect(&self, spec: &StefanProblemSpec) -> f64 {
        let traj = self.trajectory();
        let n = traj.num_nodes() - 1;
        let t = traj.time_grid();
        let mut source = 0.0;
        for k in 0..n {
            let ops = traj.operators(k + 1);
            source += (t[k + 1] - t[k]) * ops.mass.apply(spec.f.node(k + 1)).iter().sum::<f64>();
        }
        traj.operators(n).lumped_integral(self.e.node(n))
            - traj.operators(0).lumped_integral(self.e.node(0))
            - source
    }

    /// `|Ω|·max|e| + T·|Ω|·max|f|`, the scale of the balance.
    pub fn conservation_scale(&self, spec: &StefanProblemSpec) -> f64 {
        let traj = self.trajectory();
        let area = (0..traj.num_nodes()).map(|k| traj.area(k)).fold(0.0, f64::max);
        area * self.e.max_abs() + traj.duration() * area * spec.f.max_abs()
    }

    /// `max |e − E_ε(u)|` over all nodes and vertices.
    pub fn graph_consistency(&self) -> f64 {
        self.u
            .nodes()
            .iter()
            .flatten()
            .zip(self.e.nodes().iter().flatten())
            .map(|(u, e)| (e - self.reg.e_eps(*u)).abs())
            .fold(0.0, f64::max)
    }

    /// CSV ledger `step,time,inner_iters,residual,enthalpy_total,umin,umax`.
    pub fn write_ledger_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,time,inner_iters,residual,enthalpy_total,umin,umax")?;
        let traj = self.trajectory();
        let u0 = self.u.node(0);
        let (lo, hi) = min_max(u0);
        writeln!(
            out,
            "0,{:e},0,0e0,{:e},{:e},{:e}",
            traj.time_grid()[0],
            traj.operators(0).lumped_integral(self.e.node(0)),
            lo,
            hi
        )?;
        for d in &self.diagnostics {
            writeln!(
                out,
                "{},{:e},{},{:e},{:e},{:e},{:e}",
                d.step, d.time, d.inner_iters, d.residual, d.enthalpy_total, d.umin, d.umax
            )?;
        }
        Ok(())
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

const POLISH_FLOOR: f64 = 1e-14;

/// Result of one implicit step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub u: Vec<f64>,
    pub e: Vec<f64>,
    pub inner_iters: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

/// The nodal system `M^L E_ε(u) + τ S u = b` of one step.
struct StepSystem<'a> {
    lumped: &'a [f64],
    stiffness: &'a SparseOperator,
    tau: f64,
    rhs: Vec<f64>,
    reg: EnthalpyRegularization,
    scale: f64,
}

impl StepSystem<'_> {
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let su = self.stiffness.apply(u);
        (0..u.len())
            .map(|i| self.lumped[i] * self.reg.e_eps(u[i]) + self.tau * su[i] - self.rhs[i])
            .collect()
    }

    fn relative(&self, r: &[f64]) -> f64 {
        r.iter().map(|x| x.abs()).sum::<f64>() / self.scale
    }

    /// Convex functional whose gradient is the residual.
    fn energy(&self, u: &[f64]) -> f64 {
        let quad = 0.5 * self.tau * self.stiffness.bilinear(u, u);
        let pot: f64 = (0..u.len())
            .map(|i| self.lumped[i] * self.reg.e_eps_primitive(u[i]) - self.rhs[i] * u[i])
            .sum();
        quad + pot
    }

    /// `M^L diag(E_ε′(w)) + τ S`.
    fn jacobian(&self, w: &[f64]) -> SparseOperator {
        let d: Vec<f64> = (0..w.len()).map(|i| self.lumped[i] * self.reg.e_eps_prime(w[i])).collect();
        self.stiffness.scaled(self.tau).add_diagonal(&d)
    }
}

fn build_system<'a>(
    spec: &StefanProblemSpec,
    e_k: &[f64],
    k: usize,
    ops_k: &SliceOperators,
    ops_next: &'a SliceOperators,
) -> StepSystem<'a> {
    let t = spec.trajectory.time_grid();
    let tau = t[k + 1] - t[k];
    let load = ops_next.mass.apply(spec.f.node(k + 1));
    let rhs: Vec<f64> = (0..e_k.len())
        .map(|i| ops_k.lumped[i] * e_k[i] + tau * load[i])
        .collect();
    let scale = (0..e_k.len())
        .map(|i| ops_k.lumped[i] * e_k[i].abs() + tau * load[i].abs())
        .sum::<f64>();
    StepSystem {
        lumped: &ops_next.lumped,
        stiffness: &ops_next.stiffness,
        tau,
        rhs,
        reg: spec.reg,
        scale,
    }
}

/// One frozen-coefficient iterate: solves
/// `(M^L E_ε′(w) + τS) u = b − M^L (E_ε(w) − E_ε′(w) w)`.
pub fn inner_frozen_fixed_point(
    w: &[f64],
    e_k: &[f64],
    k: usize,
    spec: &StefanProblemSpec,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    check_step(e_k, k, spec)?;
    let (ops_k, ops_next) = (spec.trajectory.operators(k), spec.trajectory.operators(k + 1));
    let sys = build_system(spec, e_k, k, &ops_k, &ops_next);
    frozen_update(&sys, w, opts)
}

fn frozen_update(sys: &StepSystem, w: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let a = sys.jacobian(w);
    let b: Vec<f64> = (0..w.len())
        .map(|i| {
            let (e, d) = (sys.reg.e_eps(w[i]), sys.reg.e_eps_prime(w[i]));
            sys.rhs[i] - sys.lumped[i] * (e - d * w[i])
        })
        .collect();
    let mut u = w.to_vec();
    pcg(&a, &b, &mut u, opts.linear())?;
    Ok(u)
}

fn check_step(e_k: &[f64], k: usize, spec: &StefanProblemSpec) -> Result<()> {
    let n = spec.trajectory.num_nodes();
    if k + 1 >= n {
        return Err(Error::Index(format!("step from node {k} on a grid of {n} nodes")));
    }
    if e_k.len() != spec.trajectory.num_vertices() {
        return Err(Error::FieldLength {
            expected: spec.trajectory.num_vertices(),
            got: e_k.len(),
        });
    }
    Ok(())
}

/// Advances the enthalpy from node `k` to node `k + 1`. `guess` seeds the
/// inner iteration (defaults to `U_ε(e_k)`).
pub fn step(
    e_k: &[f64],
    k: usize,
    spec: &StefanProblemSpec,
    opts: &SolverOptions,
    guess: Option<&[f64]>,
) -> Result<StepOutcome> {
    check_step(e_k, k, spec)?;
    opts.validate()?;
    let (ops_k, ops_next) = (spec.trajectory.operators(k), spec.trajectory.operators(k + 1));
    let sys = build_system(spec, e_k, k, &ops_k, &ops_next);
    let nv = e_k.len();
    if sys.scale == 0.0 {
        // zero data: zero is the unique solution
        return Ok(StepOutcome {
            u: vec![0.0; nv],
            e: vec![0.0; nv],
            inner_iters: 0,
            residual: 0.0,
            residual_history: vec![0.0],
        });
    }
    let mut u: Vec<f64> = match guess {
        Some(g) => g.to_vec(),
        None => e_k.iter().map(|&e| spec.reg.u_eps(e)).collect(),
    };
    let mut r = sys.residual(&u);
    let mut rel = sys.relative(&r);
    let mut history = vec![rel];
    let mut iters = 0;
    while rel > opts.newton_tol {
        if iters >= opts.max_inner {
            return Err(Error::InnerIteration {
                step: k + 1,
                iterations: iters,
                history,
            });
        }
        u = match opts.inner_scheme {
            InnerScheme::FrozenFixedPoint => frozen_update(&sys, &u, opts)?,
            InnerScheme::Newton => newton_update(&sys, &u, &r, opts)?,
        };
        iters += 1;
        r = sys.residual(&u);
        rel = sys.relative(&r);
        history.push(rel);
        if !rel.is_finite() {
            return Err(Error::InnerIteration {
                step: k + 1,
                iterations: iters,
                history,
            });
        }
    }
    // The enthalpy balance defect of the step is the sum of the residual, so
    // one extra update after convergence pushes it down to roundoff. It is
    // kept only if it helps and is not counted as an iteration.
    if iters > 0 && rel > POLISH_FLOOR {
        let polished = match opts.inner_scheme {
            InnerScheme::FrozenFixedPoint => frozen_update(&sys, &u, opts)?,
            InnerScheme::Newton => newton_update(&sys, &u, &r, opts)?,
        };
        let rel_p = sys.relative(&sys.residual(&polished));
        if rel_p < rel {
            u = polished;
            rel = rel_p;
            history.push(rel);
        }
    }
    let e = u.iter().map(|&x| spec.reg.e_eps(x)).collect();
    Ok(StepOutcome {
        u,
        e,
        inner_iters: iters,
        residual: rel,
        residual_history: history,
    })
}

fn newton_update(sys: &StepSystem, u: &[f64], r: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let a = sys.jacobian(u);
    let neg: Vec<f64> = r.iter().map(|x| -x).collect();
    let mut delta = vec![0.0; u.len()];
    pcg(&a, &neg, &mut delta, opts.linear())?;
    let slope: f64 = r.iter().zip(&delta).map(|(a, b)| a * b).sum();
    let phi0 = sys.energy(u);
    let rel0 = sys.relative(r);
    let mut s = 1.0;
    for _ in 0..40 {
        let trial: Vec<f64> = u.iter().zip(&delta).map(|(u, d)| u + s * d).collect();
        let phi = sys.energy(&trial);
        // near convergence energy differences drown in roundoff; a residual
        // decrease is then accepted instead, but never a real energy increase
        // (mixing the two criteria can cycle)
        let noise = 1e-13 * phi0.abs().max(sys.scale);
        if phi <= phi0 + 1e-4 * s * slope || (phi <= phi0 + noise && sys.relative(&sys.residual(&trial)) < rel0) {
            return Ok(trial);
        }
        s *= 0.5;
    }
    Ok(u.iter().zip(&delta).map(|(u, d)| u + s * d).collect())
}

/// Integrates from `e0` over every node of the trajectory.
pub fn solve_stefan(spec: &StefanProblemSpec, opts: &SolverOptions) -> Result<SolutionTrajectory> {
    opts.validate()?;
    let traj = Arc::clone(&spec.trajectory);
    let n = traj.num_nodes();
    let t = traj.time_grid();
    let e0 = spec.e0.values().to_vec();
    let u0: Vec<f64> = e0.iter().map(|&e| spec.reg.u_eps(e)).collect();
    let mut us = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    us.push(u0);
    es.push(e0);
    let mut diagnostics = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n - 1 {
        let out = step(&es[k], k, spec, opts, Some(&us[k]))?;
        let ops_next = traj.operators(k + 1);
        let total = ops_next.lumped_integral(&out.e);
        let source: f64 = ops_next.mass.apply(spec.f.node(k + 1)).iter().sum();
        let defect = total - traj.operators(k).lumped_integral(&es[k]) - (t[k + 1] - t[k]) * source;
        let (umin, umax) = min_max(&out.u);
        log::debug!("step {} t={:.4} inner={} residual={:e}", k + 1, t[k + 1], out.inner_iters, out.residual);
        diagnostics.push(StepDiagnostics {
            step: k + 1,
            time: t[k + 1],
            inner_iters: out.inner_iters,
            residual: out.residual,
            residual_history: out.residual_history,
            enthalpy_total: total,
            umin,
            umax,
            conservation_defect: defect,
        });
        us.push(out.u);
        es.push(out.e);
    }
    Ok(SolutionTrajectory {
        u: SpaceTimeField::new(Arc::clone(&traj), us)?,
        e: SpaceTimeField::new(traj, es)?,
        diagnostics,
        reg: spec.reg,
    })
}

/// Largest defect over `tests` of the discrete weak form
/// `−∫∫ η̇ e + ∫∫ ∇u·∇η − ∫∫ f η − ∫ e₀ η(0) + ∫ e(T) η(T)`.
///
/// The quadrature mirrors the scheme by summation by parts: `η̇` is a
/// forward difference paired with the lumped `e` of the left node, while the
/// gradient and source terms sit at the right node. Smooth test functions
/// see an `O(h² + τ)` consistency error; for `η ≡ 1` the defect is the
/// enthalpy balance defect.
pub fn weak_residual(
    sol: &SolutionTrajectory,
    spec: &StefanProblemSpec,
    tests: &[SpaceTimeField],
) -> Result<f64> {
    let traj = sol.trajectory();
    let n = traj.num_nodes() - 1;
    let t = traj.time_grid();
    let mut worst: f64 = 0.0;
    for eta in tests {
        if !eta.trajectory().same_as(traj) {
            return Err(Error::TrajectoryMismatch("test field lives on another trajectory".into()));
        }
        let mut d = 0.0;
        for k in 0..n {
            let tau = t[k + 1] - t[k];
            let ops_k = traj.operators(k);
            let ops = traj.operators(k + 1);
            let (ek, ek1) = (eta.node(k), eta.node(k + 1));
            d -= (0..ek.len())
                .map(|i| (ek1[i] - ek[i]) * ops_k.lumped[i] * sol.e.node(k)[i])
                .sum::<f64>();
            d += tau * ops.stiffness.bilinear(ek1, sol.u.node(k + 1));
            d -= tau * ops.mass.bilinear(ek1, spec.f.node(k + 1));
        }
        let end = traj.operators(n);
        d += (0..traj.num_vertices())
            .map(|i| end.lumped[i] * sol.e.node(n)[i] * eta.node(n)[i])
            .sum::<f64>();
        let start = traj.operators(0);
        d -= (0..traj.num_vertices())
            .map(|i| start.lumped[i] * spec.e0.values()[i] * eta.node(0)[i])
            .sum::<f64>();
        worst = worst.max(d.abs());
    }
    Ok(worst)
}
