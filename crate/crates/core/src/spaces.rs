//! Nodal fields on an evolving surface and the L^p_X machinery on top of
//! them.
//!
//! Vertex `i` of every mesh in a [`FlowTrajectory`] is the image of vertex
//! `i` of the initial mesh, so pulling a field back to the initial surface
//! keeps its nodal arrays and only swaps the carrier meshes.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{FlowTrajectory, Point3, SurfaceMesh};

/// Nodal values on one mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self> {
        check_values(mesh.num_vertices(), &values, "discrete field")?;
        Ok(DiscreteField { values })
    }

    pub fn from_fn(mesh: &SurfaceMesh, f: impl Fn(&Point3) -> f64) -> Result<Self> {
        Self::new(mesh, mesh.vertices().iter().map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_values(expected: usize, values: &[f64], what: &'static str) -> Result<()> {
    if values.len() != expected {
        return Err(Error::FieldLength {
            expected,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Which meshes carry a [`SpaceTimeField`]'s nodal arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Carrier {
    /// Node `k` lives on the node-`k` mesh.
    Evolving,
    /// Every node lives on the initial mesh.
    Reference,
}

/// One nodal array per time node of a trajectory.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    trajectory: Arc<FlowTrajectory>,
    carrier: Carrier,
    values: Vec<Vec<f64>>,
}

impl PartialEq for SpaceTimeField {
    fn eq(&self, other: &Self) -> bool {
        self.carrier == other.carrier
            && self.values == other.values
            && self.trajectory.same_as(&other.trajectory)
    }
}

impl SpaceTimeField {
    pub fn new(trajectory: Arc<FlowTrajectory>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != trajectory.num_nodes() {
            return Err(Error::NodeCount {
                expected: trajectory.num_nodes(),
                got: values.len(),
            });
        }
        let nv = trajectory.num_vertices();
        for v in &values {
            check_values(nv, v, "space-time field")?;
        }
        Ok(SpaceTimeField {
            trajectory,
            carrier: Carrier::Evolving,
            values,
        })
    }

    /// Samples `f(t, x)` at the vertices of every node's mesh.
    pub fn from_fn(trajectory: Arc<FlowTrajectory>, f: impl Fn(f64, &Point3) -> f64) -> Result<Self> {
        let values = (0..trajectory.num_nodes())
            .map(|k| {
                let t = trajectory.time_grid()[k];
                trajectory.mesh(k).vertices().iter().map(|x| f(t, x)).collect()
            })
            .collect();
        Self::new(trajectory, values)
    }

    pub fn constant(trajectory: Arc<FlowTrajectory>, c: f64) -> Result<Self> {
        let values = vec![vec![c; trajectory.num_vertices()]; trajectory.num_nodes()];
        Self::new(trajectory, values)
    }

    pub fn zeros(trajectory: Arc<FlowTrajectory>) -> Self {
        let values = vec![vec![0.0; trajectory.num_vertices()]; trajectory.num_nodes()];
        SpaceTimeField {
            trajectory,
            carrier: Carrier::Evolving,
            values,
        }
    }

    pub fn trajectory(&self) -> &Arc<FlowTrajectory> {
        &self.trajectory
    }

    pub fn carrier(&self) -> Carrier {
        self.carrier
    }

    /// Mesh carrying node `k`.
    pub fn carrier_mesh(&self, k: usize) -> &SurfaceMesh {
        match self.carrier {
            Carrier::Evolving => self.trajectory.mesh(k),
            Carrier::Reference => self.trajectory.mesh(0),
        }
    }

    fn carrier_index(&self, k: usize) -> usize {
        match self.carrier {
            Carrier::Evolving => k,
            Carrier::Reference => 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn into_nodes(self) -> Vec<Vec<f64>> {
        self.values
    }

    pub fn discrete(&self, k: usize) -> DiscreteField {
        DiscreteField {
            values: self.values[k].clone(),
        }
    }

    /// Largest nodal magnitude over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same nodal arrays with a different carrier.
    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = Self::new(Arc::clone(&self.trajectory), values)?;
        out.carrier = self.carrier;
        Ok(out)
    }

    /// `self − other`, nodewise.
    pub fn difference(&self, other: &SpaceTimeField) -> Result<Self> {
        if !self.trajectory.same_as(&other.trajectory) {
            return Err(Error::TrajectoryMismatch("fields live on different trajectories".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        self.with_values(values)
    }
}

/// Transfers a field to the initial surface.
pub fn pullback(f: &SpaceTimeField) -> SpaceTimeField {
    SpaceTimeField {
        carrier: Carrier::Reference,
        ..f.clone()
    }
}

/// Transfers a pulled-back field to the evolving surface.
pub fn pushforward(f: &SpaceTimeField) -> SpaceTimeField {
    SpaceTimeField {
        carrier: Carrier::Evolving,
        ..f.clone()
    }
}

/// Supported Lebesgue exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    One,
    Two,
    Infinity,
}

impl TryFrom<f64> for Exponent {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Exponent::One)
        } else if p == 2.0 {
            Ok(Exponent::Two)
        } else if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else {
            Err(Error::UnsupportedExponent(p.to_string()))
        }
    }
}

/// Spatial `L^q` norm of node `k`: lumped quadrature for `q = 1`,
/// consistent mass for `q = 2`, nodal maximum for `q = ∞`.
pub fn spatial_norm(f: &SpaceTimeField, k: usize, q: Exponent) -> f64 {
    let v = f.node(k);
    match q {
        Exponent::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        Exponent::One => f.trajectory.operators(f.carrier_index(k)).lumped_l1(v),
        Exponent::Two => f
            .trajectory
            .operators(f.carrier_index(k))
            .mass
            .bilinear(v, v)
            .max(0.0)
            .sqrt(),
    }
}

/// Trapezoidal rule over the trajectory's time grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `‖f‖_{L^p(0,T; L^q)}` with `p, q ∈ {1, 2, ∞}`.
pub fn lpx_norm(f: &SpaceTimeField, p: f64, q: f64) -> Result<f64> {
    let (p, q) = (Exponent::try_from(p)?, Exponent::try_from(q)?);
    let spatial: Vec<f64> = (0..f.num_nodes()).map(|k| spatial_norm(f, k, q)).collect();
    Ok(match p {
        Exponent::Infinity => spatial.iter().fold(0.0, |m: f64, &x| m.max(x)),
        Exponent::One => trapezoid(f.trajectory.time_grid(), &spatial),
        Exponent::Two => {
            let sq: Vec<f64> = spatial.iter().map(|x| x * x).collect();
            trapezoid(f.trajectory.time_grid(), &sq).sqrt()
        }
    })
}

/// Empirical bracket `[C_low, C_high]` of `‖u‖_{L²(Ω(t))} / ‖u‖_{L²(Ω₀)}`
/// over the nodal samples (indexed on the initial mesh) and all time nodes.
/// Zero-norm samples are skipped.
pub fn norm_equivalence_constant(traj: &FlowTrajectory, samples: &[Vec<f64>]) -> Result<(f64, f64)> {
    let nv = traj.num_vertices();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut used = false;
    let m0 = traj.operators(0);
    for s in samples {
        check_values(nv, s, "norm sample")?;
        let base = m0.mass.bilinear(s, s);
        if !(base > 0.0) {
            continue;
        }
        used = true;
        for k in 0..traj.num_nodes() {
            let r = (traj.operators(k).mass.bilinear(s, s) / base).sqrt();
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if !used {
        return Err(Error::NoUsableSample);
    }
    Ok((lo, hi))
}

/// Weights of the derivative at `t[c]` of the quadratic through three nodes.
fn three_point_weights(t: [f64; 3], c: usize) -> [f64; 3] {
    let x = t[c];
    let mut w = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let denom = (t[i] - t[j]) * (t[i] - t[k]);
        w[i] = ((x - t[j]) + (x - t[k])) / denom;
    }
    w
}

/// Material derivative: time differences of the pulled-back arrays, pushed
/// forward. Centered at interior nodes, second-order one-sided at the ends
/// (first order when there are only two nodes).
pub fn material_derivative(f: &SpaceTimeField) -> Result<SpaceTimeField> {
    let n = f.num_nodes();
    if n < 2 {
        return Err(Error::SingleNode);
    }
    let t = f.trajectory.time_grid();
    let nv = f.trajectory.num_vertices();
    let u = &f.values;
    let combine = |idx: [usize; 3], w: [f64; 3]| -> Vec<f64> {
        (0..nv)
            .map(|i| w[0] * u[idx[0]][i] + w[1] * u[idx[1]][i] + w[2] * u[idx[2]][i])
            .collect()
    };
    let mut out = Vec::with_capacity(n);
    if n == 2 {
        let dt = t[1] - t[0];
        let d: Vec<f64> = (0..nv).map(|i| (u[1][i] - u[0][i]) / dt).collect();
        out.push(d.clone());
        out.push(d);
    } else {
        for k in 0..n {
            let (idx, c) = if k == 0 {
                ([0, 1, 2], 0)
            } else if k == n - 1 {
                ([n - 3, n - 2, n - 1], 2)
            } else {
                ([k - 1, k, k + 1], 1)
            };
            out.push(combine(idx, three_point_weights([t[idx[0]], t[idx[1]], t[idx[2]]], c)));
        }
    }
    Ok(SpaceTimeField {
        trajectory: Arc::clone(&f.trajectory),
        carrier: f.carrier,
        values: out,
    })
}

/// `∫_Ω d u v` with `d` constant per triangle and `u, v` piecewise linear.
pub fn weighted_product(mesh: &SurfaceMesh, d: &[f64], u: &[f64], v: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, &[a, b, c])| {
            let (su, sv) = (u[a] + u[b] + u[c], v[a] + v[b] + v[c]);
            let diag = u[a] * v[a] + u[b] * v[b] + u[c] * v[c];
            d[t] * mesh.triangle_area(t) / 12.0 * (diag + su * sv)
        })
        .sum()
}

fn same_trajectory(u: &SpaceTimeField, v: &SpaceTimeField) -> Result<()> {
    if !u.trajectory.same_as(&v.trajectory) {
        return Err(Error::TrajectoryMismatch("fields live on different trajectories".into()));
    }
    Ok(())
}

/// Per-interval defect of the transport identity
/// `d/dt (u, v) = ⟨u̇, v⟩ + ⟨u, v̇⟩ + ∫ u v ∇_Ω·w`,
/// with the right-hand side integrated by the trapezoidal rule and the
/// material derivatives taken from [`material_derivative`].
pub fn transport_identity_residual(u: &SpaceTimeField, v: &SpaceTimeField) -> Result<Vec<f64>> {
    same_trajectory(u, v)?;
    let traj = &u.trajectory;
    let (u, v) = (pushforward(u), pushforward(v));
    let (du, dv) = (material_derivative(&u)?, material_derivative(&v)?);
    let n = traj.num_nodes();
    let mut pairing = Vec::with_capacity(n);
    let mut rate = Vec::with_capacity(n);
    for k in 0..n {
        let ops = traj.operators(k);
        pairing.push(ops.mass.bilinear(u.node(k), v.node(k)));
        let mut r = ops.mass.bilinear(du.node(k), v.node(k)) + ops.mass.bilinear(u.node(k), dv.node(k));
        if !traj.is_stationary() {
            r += weighted_product(traj.mesh(k), &traj.divergence(k)?, u.node(k), v.node(k));
        }
        rate.push(r);
    }
    let t = traj.time_grid();
    Ok((0..n - 1)
        .map(|k| {
            let quad = 0.5 * (t[k + 1] - t[k]) * (rate[k] + rate[k + 1]);
            ((pairing[k + 1] - pairing[k]) - quad).abs()
        })
        .collect())
}

/// `|2∫⟨u̇, u⁺⟩ − (‖u⁺(T)‖² − ‖u⁺(0)‖² − ∫∫ (u⁺)² ∇_Ω·w)|` with the
/// supplied material derivative `udot`, nodal positive parts and
/// trapezoidal time quadrature.
pub fn plus_part_identity_residual(u: &SpaceTimeField, udot: &SpaceTimeField) -> Result<f64> {
    same_trajectory(u, udot)?;
    let traj = &u.trajectory;
    let n = traj.num_nodes();
    let plus: Vec<Vec<f64>> = u.values.iter().map(|v| v.iter().map(|x| x.max(0.0)).collect()).collect();
    let mut lhs_rate = Vec::with_capacity(n);
    let mut div_rate = Vec::with_capacity(n);
    for k in 0..n {
        let ops = traj.operators(k);
        lhs_rate.push(2.0 * ops.mass.bilinear(udot.node(k), &plus[k]));
        div_rate.push(if traj.is_stationary() {
            0.0
        } else {
            weighted_product(traj.mesh(k), &traj.divergence(k)?, &plus[k], &plus[k])
        });
    }
    let t = traj.time_grid();
    let lhs = trapezoid(t, &lhs_rate);
    let end = traj.operators(n - 1).mass.bilinear(&plus[n - 1], &plus[n - 1]);
    let start = traj.operators(0).mass.bilinear(&plus[0], &plus[0]);
    let rhs = end - start - trapezoid(t, &div_rate);
    Ok((lhs - rhs).abs())
}

/// Writes `STFIELD V N` followed by one line of `V` values per node.
pub fn write_stfield<W: Write>(f: &SpaceTimeField, mut out: W) -> Result<()> {
    writeln!(out, "STFIELD {} {}", f.trajectory.num_vertices(), f.num_nodes())?;
    for row in &f.values {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Parses a space-time field file into node-major arrays.
pub fn parse_stfield(src: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let err = |line: usize, message: String| Error::Parse {
        line: line + 1,
        message,
    };
    let mut tok = header.split_whitespace();
    if tok.next() != Some("STFIELD") {
        return Err(err(hline, "expected `STFIELD V N` header".into()));
    }
    let mut count = |name: &str| -> Result<usize> {
        tok.next()
            .ok_or_else(|| err(hline, format!("missing {name}")))?
            .parse::<usize>()
            .map_err(|e| err(hline, format!("bad {name}: {e}")))
    };
    let (nv, nn) = (count("vertex count")?, count("node count")?);
    if tok.next().is_some() {
        return Err(err(hline, "trailing tokens in header".into()));
    }
    if nv == 0 || nn == 0 {
        return Err(err(hline, "counts must be positive".into()));
    }
    // every value needs at least two bytes
    if nv.saturating_mul(nn) > src.len() {
        return Err(err(hline, "counts exceed input size".into()));
    }
    let mut values = Vec::with_capacity(nn);
    for k in 0..nn {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| err(hline, format!("expected {nn} value lines, found {k}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| err(ln, format!("bad value `{s}`: {e}"))))
            .collect::<Result<_>>()?;
        if row.len() != nv {
            return Err(err(ln, format!("expected {nv} values, found {}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(err(ln, "non-finite value".into()));
        }
        values.push(row);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "unexpected trailing content".into()));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{advect_mesh, icosphere, uniform_time_grid, VelocityField};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn stationary(level: usize, t: f64, steps: usize) -> Arc<FlowTrajectory> {
        let grid = uniform_time_grid(t, steps).unwrap();
        Arc::new(FlowTrajectory::stationary(&icosphere(level).unwrap(), &grid).unwrap())
    }

    fn expanding(level: usize, t: f64, steps: usize) -> Arc<FlowTrajectory> {
        let grid = uniform_time_grid(t, steps).unwrap();
        Arc::new(advect_mesh(&icosphere(level).unwrap(), &VelocityField::radial(1.0), &grid).unwrap())
    }

    #[test]
    fn pullback_roundtrip_is_exact() {
        let traj = expanding(2, 0.5, 4);
        let f = SpaceTimeField::from_fn(traj, |t, x| (x.x * 3.1 + t).sin() / 7.0).unwrap();
        let back = pushforward(&pullback(&f));
        assert_eq!(back, f);
        assert_eq!(pullback(&f).carrier(), Carrier::Reference);
        for k in 0..f.num_nodes() {
            assert_eq!(pullback(&f).node(k), f.node(k));
        }
    }

    #[test]
    fn pullback_of_indicator_keeps_vertex() {
        let traj = expanding(1, 0.3, 3);
        let nv = traj.num_vertices();
        let ind: Vec<f64> = (0..nv).map(|i| if i == 7 { 1.0 } else { 0.0 }).collect();
        let f = SpaceTimeField::new(traj.clone(), vec![ind.clone(); traj.num_nodes()]).unwrap();
        let g = pullback(&f);
        assert!(g.nodes().iter().all(|n| *n == ind));
        assert!(std::ptr::eq(g.carrier_mesh(3), traj.mesh(0)));
    }

    #[test]
    fn norms_of_simple_fields() {
        let traj = stationary(4, 1.0, 4);
        assert_eq!(lpx_norm(&SpaceTimeField::zeros(traj.clone()), 2.0, 2.0).unwrap(), 0.0);
        let one = SpaceTimeField::constant(traj.clone(), 1.0).unwrap();
        let n = lpx_norm(&one, 2.0, 2.0).unwrap();
        assert!((n - (4.0 * PI).sqrt()).abs() / (4.0 * PI).sqrt() < 2e-3, "{n}");
        let c = SpaceTimeField::constant(traj.clone(), -2.75).unwrap();
        assert_eq!(lpx_norm(&c, f64::INFINITY, f64::INFINITY).unwrap(), 2.75);
        assert!(matches!(lpx_norm(&c, 3.0, 2.0), Err(Error::UnsupportedExponent(_))));
        assert!(lpx_norm(&c, 1.0, 0.5).is_err());
    }

    #[test]
    fn sup_norm_is_nodal_max() {
        let traj = expanding(2, 0.4, 4);
        let f = SpaceTimeField::from_fn(traj, |t, x| x.z * (1.0 + t) - 0.3 * x.y).unwrap();
        let max = f.nodes().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(lpx_norm(&f, f64::INFINITY, f64::INFINITY).unwrap(), max);
    }

    #[test]
    fn norm_equivalence_brackets() {
        let traj = stationary(2, 1.0, 3);
        let s = vec![traj.mesh(0).vertices().iter().map(|p| p.x + 0.5).collect::<Vec<_>>()];
        let (lo, hi) = norm_equivalence_constant(&traj, &s).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);

        let traj = expanding(3, 1.0, 8);
        let s = vec![vec![1.0; traj.num_vertices()], vec![0.0; traj.num_vertices()]];
        let (lo, hi) = norm_equivalence_constant(&traj, &s).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 1.0f64.exp()).abs() < 1e-6, "{hi}");
        assert!(matches!(
            norm_equivalence_constant(&traj, &[vec![0.0; traj.num_vertices()]]),
            Err(Error::NoUsableSample)
        ));
    }

    #[test]
    fn norm_bracket_grows_with_extension() {
        let short = expanding(2, 0.5, 4);
        let long = expanding(2, 1.0, 8);
        let s = vec![short.mesh(0).vertices().iter().map(|p| 1.0 + p.z * p.z).collect::<Vec<_>>()];
        let (lo_s, hi_s) = norm_equivalence_constant(&short, &s).unwrap();
        let (lo_l, hi_l) = norm_equivalence_constant(&long, &s).unwrap();
        assert!(lo_l <= lo_s && hi_l >= hi_s);
    }

    #[test]
    fn material_derivative_cases() {
        let traj = expanding(1, 1.0, 10);
        let g: Vec<f64> = (0..traj.num_vertices()).map(|i| (i as f64).cos()).collect();
        let c = SpaceTimeField::new(traj.clone(), vec![g.clone(); 11]).unwrap();
        assert!(material_derivative(&c).unwrap().max_abs() < 1e-12);

        let t = traj.time_grid().to_vec();
        let lin: Vec<Vec<f64>> = t.iter().map(|t| g.iter().map(|x| t * x).collect()).collect();
        let d = material_derivative(&SpaceTimeField::new(traj.clone(), lin).unwrap()).unwrap();
        for k in 1..10 {
            for (a, b) in d.node(k).iter().zip(&g) {
                assert!((a - b).abs() < 1e-13);
            }
        }

        let mut errs = vec![];
        for steps in [10, 20, 40] {
            let traj = stationary(0, 1.0, steps);
            let g: Vec<f64> = (0..traj.num_vertices()).map(|i| 1.0 + i as f64 * 0.1).collect();
            let t = traj.time_grid().to_vec();
            let v = t.iter().map(|t| g.iter().map(|x| t.sin() * x).collect()).collect();
            let d = material_derivative(&SpaceTimeField::new(traj.clone(), v).unwrap()).unwrap();
            let mut err: f64 = 0.0;
            for (k, t) in t.iter().enumerate() {
                for (a, b) in d.node(k).iter().zip(&g) {
                    err = err.max((a - t.cos() * b).abs());
                }
            }
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
        let single = Arc::new(FlowTrajectory::stationary(&icosphere(0).unwrap(), &[0.0]).unwrap());
        assert!(matches!(
            material_derivative(&SpaceTimeField::zeros(single)),
            Err(Error::SingleNode)
        ));
    }

    #[test]
    fn weighted_product_matches_mass() {
        let m = icosphere(2).unwrap();
        let u: Vec<f64> = m.vertices().iter().map(|p| p.x + 2.0).collect();
        let v: Vec<f64> = m.vertices().iter().map(|p| p.y * p.z).collect();
        let ones = vec![1.0; m.num_triangles()];
        let mass = crate::assembly::mass_matrix(&m).unwrap();
        assert!((weighted_product(&m, &ones, &u, &v) - mass.bilinear(&u, &v)).abs() < 1e-13);
    }

    #[test]
    fn transport_identity_trivial_case() {
        let traj = stationary(2, 1.0, 5);
        let u = SpaceTimeField::constant(traj.clone(), 1.5).unwrap();
        let v = SpaceTimeField::from_fn(traj, |_, x| x.z).unwrap();
        let r = transport_identity_residual(&u, &v).unwrap();
        assert!(r.iter().all(|&x| x <= 1e-12));
    }

    #[test]
    fn transport_identity_expanding_area() {
        let mut res = vec![];
        for (level, steps) in [(2, 8), (3, 16), (4, 32)] {
            let traj = expanding(level, 0.5, steps);
            let one = SpaceTimeField::constant(traj, 1.0).unwrap();
            let r = transport_identity_residual(&one, &one).unwrap();
            res.push(r.iter().sum::<f64>());
        }
        assert!(res[0] / res[1] > 2.0 && res[1] / res[2] > 2.0, "{res:?}");
    }

    #[test]
    fn plus_part_identity_cases() {
        let traj = stationary(2, 1.0, 10);
        let neg = SpaceTimeField::from_fn(traj.clone(), |t, x| x.z - 2.0 - t).unwrap();
        let dneg = SpaceTimeField::constant(traj.clone(), -1.0).unwrap();
        assert_eq!(plus_part_identity_residual(&neg, &dneg).unwrap(), 0.0);

        let mut res = vec![];
        for steps in [10, 20, 40] {
            let traj = stationary(2, 1.0, steps);
            let u = SpaceTimeField::from_fn(traj.clone(), |t, x| (2.0 + x.z) * (1.0 + t * t)).unwrap();
            let du = SpaceTimeField::from_fn(traj, |t, x| (2.0 + x.z) * 2.0 * t).unwrap();
            res.push(plus_part_identity_residual(&u, &du).unwrap());
        }
        assert!(res[0] / res[1] > 3.5 && res[1] / res[2] > 3.5, "{res:?}");
    }

    #[test]
    fn stfield_roundtrip_and_errors() {
        let traj = expanding(1, 0.2, 2);
        let f = SpaceTimeField::from_fn(traj.clone(), |t, x| x.x / 3.0 + t * 1e-20).unwrap();
        let mut buf = Vec::new();
        write_stfield(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&format!("STFIELD {} 3\n", traj.num_vertices())));
        let parsed = parse_stfield(&text).unwrap();
        assert_eq!(parsed, f.nodes());

        for bad in ["", "FIELD 1 1\n0", "STFIELD 2 1\n1", "STFIELD 1 2\n1", "STFIELD 1 1\nx", "STFIELD 1 1\n1\n2", "STFIELD 1 1\nNaN", "STFIELD 99999999 99999999\n1"] {
            assert!(matches!(parse_stfield(bad), Err(Error::Parse { .. })), "{bad:?}");
        }
        match parse_stfield("STFIELD 2 2\n1 2\n3") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constructor_validation() {
        let traj = stationary(0, 1.0, 2);
        assert!(matches!(
            SpaceTimeField::new(traj.clone(), vec![vec![0.0; 12]; 2]),
            Err(Error::NodeCount { .. })
        ));
        assert!(matches!(
            SpaceTimeField::new(traj.clone(), vec![vec![0.0; 11]; 3]),
            Err(Error::FieldLength { .. })
        ));
        let mut v = vec![vec![0.0; 12]; 3];
        v[1][4] = f64::NAN;
        assert!(matches!(SpaceTimeField::new(traj, v), Err(Error::NonFinite(_))));
    }

    fn field_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (
            proptest::collection::vec(-5.0f64..5.0, 42 * 3),
            proptest::collection::vec(-5.0f64..5.0, 42 * 3),
            -3.0f64..3.0,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn norms_are_homogeneous_and_subadditive((a, b, c) in field_strategy()) {
            let traj = expanding(1, 0.5, 2);
            let rows = |v: &Vec<f64>| v.chunks(42).map(<[f64]>::to_vec).collect::<Vec<_>>();
            let fa = SpaceTimeField::new(traj.clone(), rows(&a)).unwrap();
            let fb = SpaceTimeField::new(traj.clone(), rows(&b)).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
            let fs = SpaceTimeField::new(traj.clone(), rows(&sum)).unwrap();
            let fc = SpaceTimeField::new(traj, rows(&scaled)).unwrap();
            for p in [1.0, 2.0, f64::INFINITY] {
                for q in [1.0, 2.0, f64::INFINITY] {
                    let na = lpx_norm(&fa, p, q).unwrap();
                    let nb = lpx_norm(&fb, p, q).unwrap();
                    prop_assert!(lpx_norm(&fs, p, q).unwrap() <= na + nb + 1e-12 * (na + nb));
                    let nc = lpx_norm(&fc, p, q).unwrap();
                    prop_assert!((nc - c.abs() * na).abs() <= 1e-12 * na.max(1.0));
                }
            }
        }
    }
}
