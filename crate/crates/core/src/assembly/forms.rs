use super::quadrature::QuadratureRule;
use super::sparse::SparseOperator;
use crate::error::{Error, Result};
use crate::geometry::SurfaceMesh;

/// Consistent P1 mass matrix.
pub fn mass_matrix(mesh: &SurfaceMesh) -> Result<SparseOperator> {
    let mut m = SparseOperator::from_mesh_pattern(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.element(t)?.area;
        for i in 0..3 {
            for j in 0..3 {
                let v = if i == j { area / 6.0 } else { area / 12.0 };
                m.add_to(tri[i], tri[j], v);
            }
        }
    }
    m.verify_symmetric()?;
    Ok(m)
}

/// Row-sum lumped mass as a diagonal operator.
pub fn lumped_mass(mesh: &SurfaceMesh) -> Result<SparseOperator> {
    Ok(SparseOperator::diagonal_matrix(mass_matrix(mesh)?.row_sums()))
}

/// P1 stiffness matrix of the Laplace–Beltrami operator.
pub fn stiffness_matrix(mesh: &SurfaceMesh) -> Result<SparseOperator> {
    let mut s = SparseOperator::from_mesh_pattern(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.element(t)?;
        for i in 0..3 {
            for j in 0..3 {
                s.add_to(tri[i], tri[j], g.area * g.gradients[i].dot(&g.gradients[j]));
            }
        }
    }
    s.verify_symmetric()?;
    Ok(s)
}

fn check_coefficient(mesh: &SurfaceMesh, alpha: &[f64]) -> Result<()> {
    if alpha.len() != mesh.num_vertices() {
        return Err(Error::FieldLength {
            expected: mesh.num_vertices(),
            got: alpha.len(),
        });
    }
    for (vertex, &value) in alpha.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite("dual coefficient"));
        }
        if value < 0.0 {
            return Err(Error::NegativeCoefficient { vertex, value });
        }
    }
    Ok(())
}

/// Matrix of `a(φ, η) = ∫ α ∇φ·∇η + ∫ (∇α·∇φ) η` with row index for the
/// test function `η` and column index for the trial function `φ`.
///
/// `α` is P1; `∇α` is constant per triangle. Nonsymmetric in general, and
/// bit-identical to the stiffness matrix when `α ≡ 1`.
pub fn weighted_dual_form(mesh: &SurfaceMesh, alpha: &[f64]) -> Result<SparseOperator> {
    check_coefficient(mesh, alpha)?;
    let rule = QuadratureRule::edge_midpoints();
    let mut a = SparseOperator::from_mesh_pattern(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.element(t)?;
        let vals = [alpha[tri[0]], alpha[tri[1]], alpha[tri[2]]];
        let mean = rule.mean_p1(vals);
        let grad_alpha =
            g.gradients[1] * (vals[1] - vals[0]) + g.gradients[2] * (vals[2] - vals[0]);
        for i in 0..3 {
            for j in 0..3 {
                let diffusion = mean * (g.area * g.gradients[i].dot(&g.gradients[j]));
                // ∫_T φ_i = |T| / 3
                let drift = grad_alpha.dot(&g.gradients[j]) * (g.area / 3.0);
                a.add_to(tri[i], tri[j], diffusion + drift);
            }
        }
    }
    a.set_symmetric(false);
    Ok(a)
}

/// Variant of [`weighted_dual_form`] with the product `α η` replaced by its
/// P1 interpolant, `∫ ∇φ·∇ I_h(α η)`, which equals `diag(α) · S`.
///
/// Off-diagonal entries keep the sign of the stiffness matrix, so the
/// backward dual scheme built on it obeys a discrete maximum principle on
/// meshes with nonnegative cotangent weights.
pub fn interpolated_dual_form(mesh: &SurfaceMesh, alpha: &[f64]) -> Result<SparseOperator> {
    check_coefficient(mesh, alpha)?;
    Ok(stiffness_matrix(mesh)?.row_scaled(alpha))
}

/// `M f`.
pub fn load_vector(mesh: &SurfaceMesh, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != mesh.num_vertices() {
        return Err(Error::FieldLength {
            expected: mesh.num_vertices(),
            got: f.len(),
        });
    }
    Ok(mass_matrix(mesh)?.apply(f))
}

/// Operators of one time slice.
#[derive(Clone, Debug)]
pub struct SliceOperators {
    pub mass: SparseOperator,
    pub lumped: Vec<f64>,
    pub stiffness: SparseOperator,
}

impl SliceOperators {
    pub fn build(mesh: &SurfaceMesh) -> Result<Self> {
        let mass = mass_matrix(mesh)?;
        let lumped = mass.row_sums();
        let stiffness = stiffness_matrix(mesh)?;
        Ok(SliceOperators {
            mass,
            lumped,
            stiffness,
        })
    }

    pub fn total_area(&self) -> f64 {
        self.lumped.iter().sum()
    }

    /// `Σ m_i |v_i|`
    pub fn lumped_l1(&self, v: &[f64]) -> f64 {
        self.lumped.iter().zip(v).map(|(m, x)| m * x.abs()).sum()
    }

    /// `Σ m_i v_i`
    pub fn lumped_integral(&self, v: &[f64]) -> f64 {
        self.lumped.iter().zip(v).map(|(m, x)| m * x).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere, Point3};
    use std::f64::consts::PI;

    fn tetra() -> SurfaceMesh {
        SurfaceMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, -1.0),
            ],
            vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_mass_block() {
        // element contribution of the right triangle, isolated by
        // assembling on a one-triangle patch of the tetrahedron
        let mesh = tetra();
        let mut m = SparseOperator::from_mesh_pattern(&mesh);
        let area = mesh.element(0).unwrap().area;
        let tri = mesh.triangles()[0];
        for i in 0..3 {
            for j in 0..3 {
                m.add_to(tri[i], tri[j], if i == j { area / 6.0 } else { area / 12.0 });
            }
        }
        let expect = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), 0.5 / 12.0 * expect[i][j]);
            }
        }
    }

    #[test]
    fn mass_totals_area() {
        let mesh = icosphere(4).unwrap();
        let m = mass_matrix(&mesh).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let total = m.bilinear(&ones, &ones);
        assert!((total - mesh.total_area()).abs() < 1e-12 * total);
        assert!((total - 4.0 * PI).abs() / (4.0 * PI) < 2e-3);
        let lumped = lumped_mass(&mesh).unwrap();
        assert_eq!(lumped.diagonal(), m.row_sums());
    }

    #[test]
    fn stiffness_kernel_and_symmetry() {
        let mesh = icosphere(3).unwrap();
        let s = stiffness_matrix(&mesh).unwrap();
        let s1 = s.apply(&vec![1.0; mesh.num_vertices()]);
        assert!(s1.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(s.asymmetry(), 0.0);
    }

    #[test]
    fn dual_form_reduces_to_stiffness() {
        let mesh = icosphere(2).unwrap();
        let s = stiffness_matrix(&mesh).unwrap();
        let a = weighted_dual_form(&mesh, &vec![1.0; mesh.num_vertices()]).unwrap();
        for i in 0..s.dim() {
            assert_eq!(s.row(i), a.row(i));
        }
        let c = 0.37;
        let ac = weighted_dual_form(&mesh, &vec![c; mesh.num_vertices()]).unwrap();
        for i in 0..s.dim() {
            for (x, y) in ac.row(i).1.iter().zip(s.row(i).1) {
                assert!((x - c * y).abs() <= 1e-14 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dual_form_rejects_negative_coefficient() {
        let mesh = icosphere(0).unwrap();
        let mut alpha = vec![1.0; mesh.num_vertices()];
        alpha[3] = -0.1;
        assert!(matches!(
            weighted_dual_form(&mesh, &alpha),
            Err(Error::NegativeCoefficient { vertex: 3, .. })
        ));
        assert!(interpolated_dual_form(&mesh, &alpha).is_err());
    }

    #[test]
    fn dual_form_row_and_column_sums() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mesh = icosphere(2).unwrap();
        let alpha: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let a = weighted_dual_form(&mesh, &alpha).unwrap();
        // a(1, η) = 0 for all η: rows annihilate constants
        let a1 = a.apply(&vec![1.0; mesh.num_vertices()]);
        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(a1.iter().all(|v| v.abs() < 1e-12 * scale));
        // a(φ_j, 1) = ∫ ∇α·∇φ_j; oracle assembled element by element
        let mut oracle = vec![0.0; mesh.num_vertices()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let g = mesh.element(t).unwrap();
            let grad_alpha: Point3 = (0..3).map(|k| g.gradients[k] * alpha[tri[k]]).sum();
            for j in 0..3 {
                oracle[tri[j]] += g.area * grad_alpha.dot(&g.gradients[j]);
            }
        }
        let col = a.apply_transpose(&vec![1.0; mesh.num_vertices()]);
        for (c, o) in col.iter().zip(&oracle) {
            assert!((c - o).abs() < 1e-12 * scale, "{c} {o}");
        }
    }

    #[test]
    fn interpolated_form_has_stiffness_signs() {
        let mesh = icosphere(2).unwrap();
        let alpha: Vec<f64> = (0..mesh.num_vertices()).map(|i| 0.05 + (i % 7) as f64 * 0.1).collect();
        let a = interpolated_dual_form(&mesh, &alpha).unwrap();
        for i in 0..a.dim() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if i != j {
                    assert!(v <= 0.0);
                }
            }
        }
    }

    #[test]
    fn load_vector_cases() {
        let mesh = icosphere(3).unwrap();
        let n = mesh.num_vertices();
        assert!(load_vector(&mesh, &vec![0.0; n]).unwrap().iter().all(|&v| v == 0.0));
        let m = mass_matrix(&mesh).unwrap();
        let ones = load_vector(&mesh, &vec![1.0; n]).unwrap();
        for (a, b) in ones.iter().zip(m.row_sums()) {
            assert!((a - b).abs() < 1e-15);
        }
        // ∫ z^2 over the sphere is 4π/3
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p.z * p.z).collect();
        let total: f64 = load_vector(&mesh, &f).unwrap().iter().sum();
        assert!((total - 4.0 * PI / 3.0).abs() < 1e-2 * 4.0 * PI / 3.0, "{total}");
        assert!(load_vector(&mesh, &[1.0]).is_err());
    }

    #[test]
    fn reassembly_is_bit_identical() {
        let mesh = icosphere(2).unwrap();
        assert_eq!(stiffness_matrix(&mesh).unwrap(), stiffness_matrix(&mesh).unwrap());
        assert_eq!(mass_matrix(&mesh).unwrap(), mass_matrix(&mesh).unwrap());
    }
}
