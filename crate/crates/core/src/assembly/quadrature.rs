/// Quadrature on the reference triangle in barycentric coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// One-point centroid rule (degree 1).
    pub fn centroid() -> Self {
        QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    /// Edge-midpoint rule (degree 2).
    pub fn edge_midpoints() -> Self {
        QuadratureRule {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Area-normalized mean of the P1 interpolant of `vals`, written as
    /// `v0 + Σ w (b1 (v1 − v0) + b2 (v2 − v0))` so that constants come back
    /// unchanged.
    pub fn mean_p1(&self, vals: [f64; 3]) -> f64 {
        let (d1, d2) = (vals[1] - vals[0], vals[2] - vals[0]);
        let incr: f64 = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * (b[1] * d1 + b[2] * d2))
            .sum();
        vals[0] + incr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_positive_and_normalized() {
        for rule in [QuadratureRule::centroid(), QuadratureRule::edge_midpoints()] {
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for b in rule.points() {
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn edge_midpoint_rule_is_exact_for_quadratics() {
        // mean of b0^2 over the reference triangle is 1/6; of b0*b1 is 1/12
        let rule = QuadratureRule::edge_midpoints();
        let q = |f: &dyn Fn(&[f64; 3]) -> f64| -> f64 {
            rule.points().iter().zip(rule.weights()).map(|(b, w)| w * f(b)).sum()
        };
        assert!((q(&|b| b[0] * b[0]) - 1.0 / 6.0).abs() < 1e-15);
        assert!((q(&|b| b[0] * b[1]) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn constants_are_preserved_exactly() {
        for c in [0.1, 1.0 / 3.0, 7.3e-5, 12345.678] {
            assert_eq!(QuadratureRule::edge_midpoints().mean_p1([c; 3]), c);
        }
        assert!((QuadratureRule::centroid().mean_p1([1.0, 2.0, 6.0]) - 3.0).abs() < 1e-15);
    }
}
