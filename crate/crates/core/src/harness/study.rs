use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use super::config::{MeshConfig, ScenarioConfig};
use super::run::{build_spec, build_trajectory, exact_errors, solver_options};
use crate::error::{Error, Result};
use crate::solver::{solve_stefan, SolutionTrajectory, StefanProblemSpec};
use crate::spaces::{lpx_norm, DiscreteField};
use crate::verify::{l1l1_distance, EstimateReport, CONTRACTION_MESH_CONSTANT, CONTRACTION_RELATIVE_SLACK};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Icosphere levels, with the step count scaled by 4 per level.
    H,
    /// Step counts.
    Tau,
    /// Regularization widths.
    Eps,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(SweepAxis::H),
            "tau" => Ok(SweepAxis::Tau),
            "eps" => Ok(SweepAxis::Eps),
            _ => Err(Error::Config {
                field: "axis".into(),
                message: format!("expected h, tau or eps, got `{s}`"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Mesh size, time step or ε.
    pub value: f64,
    /// Error against the exact solution, or the Cauchy distance to the next
    /// member for the ε axis.
    pub error: f64,
    /// `log(e_{i−1}/e_i) / log(v_{i−1}/v_i)`, absent on the first row.
    pub rate: Option<f64>,
}

/// Writes `value,error_or_distance,rate`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "value,error_or_distance,rate")?;
    for r in rows {
        match r.rate {
            Some(rate) => writeln!(out, "{:e},{:e},{rate:e}", r.value, r.error)?,
            None => writeln!(out, "{:e},{:e},", r.value, r.error)?,
        }
    }
    Ok(())
}

fn with_rates(points: Vec<(f64, f64)>) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = Vec::with_capacity(points.len());
    for (i, &(value, error)) in points.iter().enumerate() {
        let rate = (i > 0).then(|| {
            let (v0, e0) = points[i - 1];
            (e0 / error).ln() / (v0 / value).ln()
        });
        rows.push(SweepRow { value, error, rate });
    }
    rows
}

fn solve(cfg: &ScenarioConfig) -> Result<SolutionTrajectory> {
    let traj = build_trajectory(cfg)?;
    solve_stefan(&build_spec(cfg, &traj)?, &solver_options(cfg))
}

/// Convergence table along one axis. The `h` and `tau` axes measure the
/// `L²L²` error against `data.exact_u`; the `eps` axis measures
/// `‖u_{ε_j} − u_{ε_{j+1}}‖_{L¹L¹}` and has one row fewer than values.
pub fn sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.len() < 3 {
        return Err(Error::TooFewValues {
            needed: 3,
            got: values.len(),
        });
    }
    let exact = || {
        cfg.data.exact_u.as_deref().ok_or_else(|| Error::Config {
            field: "data.exact_u".into(),
            message: "h and tau sweeps need an exact solution".into(),
        })
    };
    match axis {
        SweepAxis::H => {
            let base = match cfg.mesh {
                MeshConfig::Icosphere { level } => level as i32,
                _ => {
                    return Err(Error::Config {
                        field: "mesh".into(),
                        message: "h sweeps run on icosphere levels".into(),
                    })
                }
            };
            let exact = exact()?;
            let mut points = Vec::new();
            for &v in values {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Config {
                        field: "values".into(),
                        message: format!("icosphere level must be a nonnegative integer, got {v}"),
                    });
                }
                let mut c = cfg.clone();
                c.mesh = MeshConfig::Icosphere { level: v as usize };
                let scaled = cfg.time.steps as f64 * 4f64.powi(v as i32 - base);
                c.time.steps = scaled.round().max(1.0) as usize;
                c.validate()?;
                let sol = solve(&c)?;
                points.push((sol.trajectory().mesh_size(), exact_errors(&sol, exact)?.1));
            }
            Ok(with_rates(points))
        }
        SweepAxis::Tau => {
            let exact = exact()?;
            let mut points = Vec::new();
            for &v in values {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Config {
                        field: "values".into(),
                        message: format!("step count must be a positive integer, got {v}"),
                    });
                }
                let mut c = cfg.clone();
                c.time.steps = v as usize;
                let sol = solve(&c)?;
                points.push((cfg.time.t_final / v, exact_errors(&sol, exact)?.1));
            }
            Ok(with_rates(points))
        }
        SweepAxis::Eps => {
            let mut sols = Vec::new();
            for &v in values {
                let mut c = cfg.clone();
                c.regularization.epsilon = v;
                c.validate()?;
                sols.push(solve(&c)?);
            }
            let points = values
                .iter()
                .zip(sols.windows(2))
                .map(|(&v, w)| Ok((v, l1l1_distance(&w[0].u, &w[1].u)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(with_rates(points))
        }
    }
}

/// One consecutive pair of clamp levels.
#[derive(Clone, Debug, PartialEq)]
pub struct RoughPair {
    pub levels: (f64, f64),
    /// `‖e_n − e_m‖_{L¹L¹}`
    pub distance: f64,
    /// `T (‖f_n − f_m‖_{L¹L¹} + ‖e_{0n} − e_{0m}‖_{L¹})`
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct RoughDataReport {
    pub pairs: Vec<RoughPair>,
    pub reports: Vec<EstimateReport>,
}

impl RoughDataReport {
    pub fn success(&self) -> bool {
        self.reports.iter().all(EstimateReport::acceptable)
    }
}

/// Writes `level_a,level_b,distance,bound`.
pub fn write_rough_csv<W: Write>(pairs: &[RoughPair], mut out: W) -> Result<()> {
    writeln!(out, "level_a,level_b,distance,bound")?;
    for p in pairs {
        writeln!(out, "{:e},{:e},{:e},{:e}", p.levels.0, p.levels.1, p.distance, p.bound)?;
    }
    Ok(())
}

fn clamped(spec: &StefanProblemSpec, n: f64) -> Result<StefanProblemSpec> {
    let clamp = |v: &[f64]| v.iter().map(|x| x.clamp(-n, n)).collect::<Vec<_>>();
    let f = spec.f.with_values(spec.f.nodes().iter().map(|v| clamp(v)).collect())?;
    let e0 = DiscreteField::new(spec.trajectory.mesh(0), clamp(spec.e0.values()))?;
    StefanProblemSpec::new(Arc::clone(&spec.trajectory), f, e0, spec.reg)
}

/// Solves with data clamped to `[−n, n]` for every configured level and
/// compares consecutive levels against
/// `‖e_n − e_m‖_{L¹L¹} ≤ T (‖f_n − f_m‖_{L¹L¹} + ‖e_{0n} − e_{0m}‖_{L¹})`,
/// with slack `5% + C h`. Monotonicity of the distances is reported as a
/// diagnostic.
pub fn rough_data_study(cfg: &ScenarioConfig) -> Result<RoughDataReport> {
    cfg.validate()?;
    let levels = &cfg
        .rough
        .as_ref()
        .ok_or_else(|| Error::Config {
            field: "rough".into(),
            message: "rough-data study needs a [rough] section".into(),
        })?
        .levels;
    let traj = build_trajectory(cfg)?;
    let base = build_spec(cfg, &traj)?;
    let opts = solver_options(cfg);
    let specs = levels.iter().map(|&n| clamped(&base, n)).collect::<Result<Vec<_>>>()?;
    let sols = specs.iter().map(|s| solve_stefan(s, &opts)).collect::<Result<Vec<_>>>()?;
    let t = traj.duration();
    let h = traj.mesh_size();
    let m0 = traj.operators(0);
    let mut pairs = Vec::new();
    let mut reports = Vec::new();
    for j in 0..levels.len() - 1 {
        let distance = l1l1_distance(&sols[j].e, &sols[j + 1].e)?;
        let df = lpx_norm(&specs[j].f.difference(&specs[j + 1].f)?, 1.0, 1.0)?;
        let de0: Vec<f64> = specs[j].e0.values().iter().zip(specs[j + 1].e0.values()).map(|(a, b)| a - b).collect();
        let bound = t * (df + m0.lumped_l1(&de0));
        reports.push(
            EstimateReport::new(
                format!("rough_cauchy_{}_{}", levels[j], levels[j + 1]),
                distance,
                (1.0 + CONTRACTION_RELATIVE_SLACK) * bound + CONTRACTION_MESH_CONSTANT * h,
                0.0,
            )
            .with_note(format!("bound without slack {bound:.6e}")),
        );
        pairs.push(RoughPair {
            levels: (levels[j], levels[j + 1]),
            distance,
            bound,
        });
    }
    let growth = pairs.windows(2).map(|w| w[1].distance - w[0].distance).fold(f64::NEG_INFINITY, f64::max);
    if growth.is_finite() {
        reports.push(
            EstimateReport::new("rough_cauchy_monotone", growth, 0.0, 0.0)
                .diagnostic()
                .with_history(pairs.iter().map(|p| (p.levels.1, p.distance)).collect()),
        );
    }
    Ok(RoughDataReport { pairs, reports })
}
