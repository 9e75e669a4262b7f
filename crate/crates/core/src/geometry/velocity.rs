use nalgebra::Matrix3;

use super::mesh::{Point3, SurfaceMesh};
use crate::error::{Error, Result};
use crate::expr::{Expr, Point, Var};

/// Prescribed ambient velocity `w(t, x)` with an analytic spatial Jacobian.
#[derive(Clone, Debug)]
pub enum VelocityField {
    Zero,
    /// `w = rate · x`
    Radial { rate: f64 },
    /// `w = omega · axis × x` (`axis` normalized on construction)
    Rotation { axis: Point3, omega: f64 },
    /// User expressions for the three components over `(t, x, y, z)`.
    Expression(Box<ExpressionVelocity>),
}

#[derive(Clone, Debug)]
pub struct ExpressionVelocity {
    components: [Expr; 3],
    jacobian: [[Expr; 3]; 3],
}

impl VelocityField {
    pub fn radial(rate: f64) -> Self {
        VelocityField::Radial { rate }
    }

    pub fn rotation(axis: [f64; 3], omega: f64) -> Result<Self> {
        let axis = Point3::from(axis);
        let n = axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Config {
                field: "velocity.axis".into(),
                message: "rotation axis must be a nonzero finite vector".into(),
            });
        }
        Ok(VelocityField::Rotation {
            axis: axis / n,
            omega,
        })
    }

    pub fn from_expressions(wx: &str, wy: &str, wz: &str) -> Result<Self> {
        let components = [Expr::parse(wx)?, Expr::parse(wy)?, Expr::parse(wz)?];
        let vars = [Var::X, Var::Y, Var::Z];
        let jacobian = [0, 1, 2].map(|i| vars.map(|v| components[i].derivative(v)));
        Ok(VelocityField::Expression(Box::new(ExpressionVelocity {
            components,
            jacobian,
        })))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VelocityField::Zero => true,
            VelocityField::Radial { rate } => *rate == 0.0,
            VelocityField::Rotation { omega, .. } => *omega == 0.0,
            VelocityField::Expression(e) => e.components.iter().all(|c| *c == Expr::Num(0.0)),
        }
    }

    pub fn eval(&self, t: f64, x: &Point3) -> Point3 {
        match self {
            VelocityField::Zero => Point3::zeros(),
            VelocityField::Radial { rate } => x * *rate,
            VelocityField::Rotation { axis, omega } => axis.cross(x) * *omega,
            VelocityField::Expression(e) => {
                let p = Point::new(t, [x.x, x.y, x.z]);
                Point3::new(
                    e.components[0].eval(&p),
                    e.components[1].eval(&p),
                    e.components[2].eval(&p),
                )
            }
        }
    }

    /// `J[i][j] = ∂w_i/∂x_j`.
    pub fn jacobian(&self, t: f64, x: &Point3) -> Matrix3<f64> {
        match self {
            VelocityField::Zero => Matrix3::zeros(),
            VelocityField::Radial { rate } => Matrix3::identity() * *rate,
            VelocityField::Rotation { axis, omega } => axis.cross_matrix() * *omega,
            VelocityField::Expression(e) => {
                let p = Point::new(t, [x.x, x.y, x.z]);
                Matrix3::from_fn(|i, j| e.jacobian[i][j].eval(&p))
            }
        }
    }
}

/// Per-triangle tangential divergence `tr(Dw) − n·(Dw n)`, evaluated at
/// the centroid with the face normal.
pub fn tangential_divergence(w: &VelocityField, mesh: &SurfaceMesh, t: f64) -> Result<Vec<f64>> {
    (0..mesh.num_triangles())
        .map(|tri| {
            let g = mesh.element(tri)?;
            let p = mesh.triangle_points(tri);
            let centroid = (p[0] + p[1] + p[2]) / 3.0;
            let jac = w.jacobian(t, &centroid);
            let div = jac.trace() - g.normal.dot(&(jac * g.normal));
            if !div.is_finite() {
                return Err(Error::NonFinite("velocity divergence"));
            }
            Ok(div)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::presets::icosphere;

    fn fd_jacobian(w: &VelocityField, t: f64, x: &Point3) -> Matrix3<f64> {
        let h = 1e-6;
        Matrix3::from_fn(|i, j| {
            let mut e = Point3::zeros();
            e[j] = h;
            (w.eval(t, &(x + e))[i] - w.eval(t, &(x - e))[i]) / (2.0 * h)
        })
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let fields = [
            VelocityField::Zero,
            VelocityField::radial(0.7),
            VelocityField::rotation([1.0, 2.0, 2.0], 1.3).unwrap(),
            VelocityField::from_expressions("x*y + sin(t*z)", "exp(-x)*z", "y^2 - t").unwrap(),
        ];
        let x = Point3::new(0.3, -0.4, 0.8);
        for w in &fields {
            let a = w.jacobian(0.4, &x);
            let fd = fd_jacobian(w, 0.4, &x);
            let scale = fd.norm().max(1.0);
            assert!((a - fd).norm() <= 1e-6 * scale, "{w:?}: {a} vs {fd}");
        }
    }

    #[test]
    fn divergence_presets() {
        let m = icosphere(3).unwrap();
        let zero = tangential_divergence(&VelocityField::Zero, &m, 0.0).unwrap();
        assert!(zero.iter().all(|&d| d == 0.0));
        let radial = tangential_divergence(&VelocityField::radial(1.0), &m, 0.0).unwrap();
        assert!(radial.iter().all(|&d| (d - 2.0).abs() < 1e-12));
        let rot = VelocityField::rotation([0.0, 0.0, 1.0], 2.0).unwrap();
        let d = tangential_divergence(&rot, &m, 0.0).unwrap();
        assert!(d.iter().all(|&d| d.abs() < 1e-12));
    }

    #[test]
    fn zero_axis_rejected() {
        assert!(VelocityField::rotation([0.0; 3], 1.0).is_err());
    }
}
