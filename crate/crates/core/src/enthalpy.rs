//! The enthalpy graph `E(r) = r + H(r)` (with `H` the Heaviside graph) and
//! its cubic-smoothstep regularization.

const INVERSION_RTOL: f64 = 1e-13;
const MAX_NEWTON: usize = 60;

/// Smooth bi-Lipschitz approximation `E_ε` of the enthalpy graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnthalpyRegularization {
    epsilon: f64,
}

impl EnthalpyRegularization {
    /// Panics unless `epsilon` is finite and positive.
    pub fn new(epsilon: f64) -> Self {
        assert!(
            epsilon.is_finite() && epsilon > 0.0,
            "regularization width must be positive, got {epsilon}"
        );
        EnthalpyRegularization { epsilon }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `L_ε = max H_ε′ = 3 / (2ε)`.
    pub fn lipschitz_constant(&self) -> f64 {
        1.5 / self.epsilon
    }

    fn ramp(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if r >= self.epsilon {
            1.0
        } else {
            let s = r / self.epsilon;
            s * s * (3.0 - 2.0 * s)
        }
    }

    fn ramp_prime(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= self.epsilon {
            0.0
        } else {
            let s = r / self.epsilon;
            6.0 * s * (1.0 - s) / self.epsilon
        }
    }

    pub fn e_eps(&self, r: f64) -> f64 {
        r + self.ramp(r)
    }

    pub fn e_eps_prime(&self, r: f64) -> f64 {
        1.0 + self.ramp_prime(r)
    }

    /// Convex primitive `∫₀ʳ E_ε`.
    pub fn e_eps_primitive(&self, r: f64) -> f64 {
        let eps = self.epsilon;
        let ramp_int = if r <= 0.0 {
            0.0
        } else if r >= eps {
            0.5 * eps + (r - eps)
        } else {
            let s = r / eps;
            eps * (s * s * s - 0.5 * s * s * s * s)
        };
        0.5 * r * r + ramp_int
    }

    /// Inverse `U_ε = E_ε⁻¹`.
    pub fn u_eps(&self, s: f64) -> f64 {
        let eps = self.epsilon;
        if s <= 0.0 {
            return s;
        }
        if s >= eps + 1.0 {
            return s - 1.0;
        }
        // r ∈ [0, ε]; E_ε is increasing, so keep a bracket and fall back to
        // bisection whenever Newton leaves it
        let (mut lo, mut hi) = (0.0, eps);
        let mut r = (s / (1.0 + eps) * eps).clamp(lo, hi);
        let tol = INVERSION_RTOL * s.abs().max(1.0);
        for _ in 0..MAX_NEWTON {
            let g = self.e_eps(r) - s;
            if g.abs() <= tol {
                return r;
            }
            if g > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let next = r - g / self.e_eps_prime(r);
            r = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        while hi - lo > f64::EPSILON * eps {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.e_eps(mid) > s {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// The limiting graph evaluated at `u ≠ 0`; `None` at the jump.
pub fn e_graph(u: f64) -> Option<f64> {
    if u < 0.0 {
        Some(u)
    } else if u > 0.0 {
        Some(u + 1.0)
    } else {
        None
    }
}

/// Inverse of the limiting graph, `U(e) = min(e, 0) + max(e − 1, 0)`.
pub fn u_graph(e: f64) -> f64 {
    e.min(0.0) + (e - 1.0).max(0.0)
}

/// Euclidean distance from `(u, e)` to the graph of `E`.
pub fn graph_distance(u: f64, e: f64) -> f64 {
    // lower ray {(r, r) : r ≤ 0}
    let t = (0.5 * (u + e)).min(0.0);
    let d_low = (u - t).hypot(e - t);
    // jump segment {0} × [0, 1]
    let d_seg = u.hypot(e - e.clamp(0.0, 1.0));
    // upper ray {(r, r + 1) : r ≥ 0}
    let t = (0.5 * (u + e - 1.0)).max(0.0);
    let d_up = (u - t).hypot(e - t - 1.0);
    d_low.min(d_seg).min(d_up)
}

/// `e ∈ E(u)` up to distance `tol` in the `(u, e)` plane.
pub fn e_graph_contains(u: f64, e: f64, tol: f64) -> bool {
    graph_distance(u, e) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn graph_membership() {
        assert!(e_graph_contains(0.0, 0.5, 0.0));
        assert!(e_graph_contains(1.0, 2.0, 0.0));
        assert!(!e_graph_contains(1.0, 1.0, 0.0));
        assert!(e_graph_contains(-3.0, -3.0, 0.0));
        assert!(!e_graph_contains(-3.0, -2.5, 0.1));
        assert!(!e_graph_contains(0.0, 1.5, 0.1));
        assert!((graph_distance(1.0, 1.0) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn regularization_values() {
        let eps = 0.05;
        let reg = EnthalpyRegularization::new(eps);
        assert_eq!(reg.e_eps(-1.0), -1.0);
        assert_eq!(reg.e_eps(0.0), 0.0);
        assert!((reg.e_eps(eps / 2.0) - (eps / 2.0 + 0.5)).abs() < 1e-15);
        assert_eq!(reg.e_eps(2.0 * eps), 2.0 * eps + 1.0);
        assert_eq!(reg.u_eps(-1.0), -1.0);
        assert!((reg.u_eps(eps + 1.0) - eps).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_constant_matches_sampled_maximum() {
        assert_eq!(EnthalpyRegularization::new(1.0).lipschitz_constant(), 1.5);
        assert!((EnthalpyRegularization::new(0.01).lipschitz_constant() - 150.0).abs() < 1e-12);
        for eps in [1.0, 0.1, 0.01] {
            let reg = EnthalpyRegularization::new(eps);
            let n = 100_001;
            let mut max_d: f64 = 0.0;
            for i in 0..n {
                let r = -1.0 + (2.0 * eps + 1.0) * i as f64 / (n - 1) as f64;
                let d = reg.e_eps_prime(r);
                assert!(d >= 1.0);
                max_d = max_d.max(d);
            }
            let bound = 1.0 + reg.lipschitz_constant();
            assert!(max_d <= bound * (1.0 + 1e-14));
            assert!(max_d >= bound * (1.0 - 1e-6));
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let reg = EnthalpyRegularization::new(0.3);
        for i in 1..60 {
            let r = -0.2 + 0.01 * i as f64;
            let h = 1e-6;
            let fd = (reg.e_eps(r + h) - reg.e_eps(r - h)) / (2.0 * h);
            assert!((fd - reg.e_eps_prime(r)).abs() < 1e-4, "r={r}");
            let fd = (reg.e_eps_primitive(r + h) - reg.e_eps_primitive(r - h)) / (2.0 * h);
            assert!((fd - reg.e_eps(r)).abs() < 1e-6, "r={r}");
        }
    }

    #[test]
    fn inversion_oracle_on_random_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for eps in [1.0, 0.05, 1e-3] {
            let reg = EnthalpyRegularization::new(eps);
            for _ in 0..1000 {
                let r: f64 = if rng.gen_bool(0.5) {
                    rng.gen_range(-0.1 * eps..1.1 * eps)
                } else {
                    rng.gen_range(-5.0..5.0)
                };
                assert!((reg.u_eps(reg.e_eps(r)) - r).abs() < 1e-12, "eps={eps} r={r}");
            }
        }
    }

    #[test]
    fn limit_graph_helpers() {
        assert_eq!(e_graph(-2.0), Some(-2.0));
        assert_eq!(e_graph(2.0), Some(3.0));
        assert_eq!(e_graph(0.0), None);
        assert_eq!(u_graph(0.4), 0.0);
        assert_eq!(u_graph(1.5), 0.5);
        assert_eq!(u_graph(-0.5), -0.5);
    }

    #[test]
    fn exact_away_from_ramp_once_eps_small() {
        for eps in [0.5, 0.1, 0.01] {
            let reg = EnthalpyRegularization::new(eps);
            let sup = (0..=1000)
                .map(|i| 0.2 + 2.8 * i as f64 / 1000.0)
                .map(|r| (reg.e_eps(r) - (r + 1.0)).abs())
                .fold(0.0, f64::max);
            if eps < 0.2 {
                assert_eq!(sup, 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn strongly_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0, eps in 1e-3f64..1.0) {
            let reg = EnthalpyRegularization::new(eps);
            let lhs = (reg.e_eps(a) - reg.e_eps(b)) * (a - b);
            prop_assert!(lhs >= (a - b) * (a - b) * (1.0 - 1e-12));
        }

        #[test]
        fn inverse_is_nonexpansive(a in -3.0f64..4.0, b in -3.0f64..4.0, eps in 1e-3f64..1.0) {
            let reg = EnthalpyRegularization::new(eps);
            prop_assert!((reg.u_eps(a) - reg.u_eps(b)).abs() <= (a - b).abs() * (1.0 + 1e-12) + 1e-13);
        }

        #[test]
        fn inverse_derivative_bounds(s in -2.0f64..3.0, eps in 1e-2f64..1.0) {
            let reg = EnthalpyRegularization::new(eps);
            let h = 1e-7;
            let d = (reg.u_eps(s + h) - reg.u_eps(s - h)) / (2.0 * h);
            prop_assert!(d <= 1.0 + 1e-5);
            prop_assert!(d >= 1.0 / (1.0 + reg.lipschitz_constant()) - 1e-5);
        }

        #[test]
        fn regularized_pairs_lie_near_graph(s in -3.0f64..4.0, eps in 1e-4f64..1.0) {
            let reg = EnthalpyRegularization::new(eps);
            prop_assert!(e_graph_contains(reg.u_eps(s), s, eps));
        }

        #[test]
        fn inversion_residual(s in -3.0f64..4.0, eps in 1e-4f64..1.0) {
            let reg = EnthalpyRegularization::new(eps);
            let r = reg.u_eps(s);
            prop_assert!((reg.e_eps(r) - s).abs() <= 1e-13 * s.abs().max(1.0) + 1e-15);
        }
    }
}
