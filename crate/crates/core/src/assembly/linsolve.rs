//! Jacobi-preconditioned Krylov solvers.

use super::sparse::{dot, SparseOperator};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Target `‖b − Ax‖ / ‖b‖`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tol: 1e-11,
            max_iter: 5000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn inverse_diagonal(a: &SparseOperator) -> Vec<f64> {
    a.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

fn true_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    norm(&r)
}

/// Conjugate gradients for symmetric positive definite `a`, starting from
/// `x` (used as the initial guess and overwritten).
pub fn pcg(a: &SparseOperator, b: &[f64], x: &mut [f64], opts: SolveOptions) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let dinv = inverse_diagonal(a);
    let mut r: Vec<f64> = {
        let ax = a.apply(x);
        b.iter().zip(&ax).map(|(b, ax)| b - ax).collect()
    };
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel > opts.rel_tol {
        if it >= opts.max_iter {
            return Err(Error::LinearSolver {
                method: "conjugate gradient",
                iterations: it,
                residual: rel,
            });
        }
        a.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Breakdown {
                method: "conjugate gradient",
                iteration: it,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        rel = norm(&r) / bnorm;
        if rel <= opts.rel_tol {
            // guard against drift of the recursive residual
            rel = true_residual(a, x, b) / bnorm;
        }
    }
    Ok(SolveStats {
        iterations: it,
        rel_residual: rel,
    })
}

/// Right-preconditioned BiCGSTAB for general square `a`.
pub fn bicgstab(
    a: &SparseOperator,
    b: &[f64],
    x: &mut [f64],
    opts: SolveOptions,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let dinv = inverse_diagonal(a);
    let mut r: Vec<f64> = {
        let ax = a.apply(x);
        b.iter().zip(&ax).map(|(b, ax)| b - ax).collect()
    };
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    let breakdown = |iteration| Error::Breakdown {
        method: "BiCGSTAB",
        iteration,
    };
    while rel > opts.rel_tol {
        if it >= opts.max_iter {
            return Err(Error::LinearSolver {
                method: "BiCGSTAB",
                iterations: it,
                residual: rel,
            });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(breakdown(it));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        a.apply_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(breakdown(it));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        it += 1;
        if norm(&s) / bnorm <= opts.rel_tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            rel = true_residual(a, x, b) / bnorm;
            if rel <= opts.rel_tol {
                break;
            }
            r = b.iter().zip(a.apply(x)).map(|(b, ax)| b - ax).collect();
            continue;
        }
        for i in 0..n {
            z[i] = s[i] * dinv[i];
        }
        a.apply_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(breakdown(it));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= opts.rel_tol {
            rel = true_residual(a, x, b) / bnorm;
        }
    }
    Ok(SolveStats {
        iterations: it,
        rel_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{mass_matrix, stiffness_matrix, weighted_dual_form};
    use crate::geometry::icosphere;

    #[test]
    fn pcg_solves_shifted_laplacian() {
        let mesh = icosphere(3).unwrap();
        let a = mass_matrix(&mesh).unwrap().add_scaled(0.1, &stiffness_matrix(&mesh).unwrap());
        let xs: Vec<f64> = mesh.vertices().iter().map(|p| p.x * p.y + p.z).collect();
        let b = a.apply(&xs);
        let mut x = vec![0.0; b.len()];
        let stats = pcg(&a, &b, &mut x, SolveOptions::default()).unwrap();
        assert!(stats.rel_residual <= 1e-11);
        let err = xs.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let mesh = icosphere(3).unwrap();
        let alpha: Vec<f64> = mesh.vertices().iter().map(|p| 1.0 + 0.5 * p.x).collect();
        let a = weighted_dual_form(&mesh, &alpha)
            .unwrap()
            .scaled(0.05)
            .add_scaled(1.0, &mass_matrix(&mesh).unwrap());
        let xs: Vec<f64> = mesh.vertices().iter().map(|p| (p.x + 2.0 * p.z).sin()).collect();
        let b = a.apply(&xs);
        let mut x = vec![0.0; b.len()];
        let stats = bicgstab(&a, &b, &mut x, SolveOptions::default()).unwrap();
        assert!(stats.rel_residual <= 1e-11);
        let err = xs.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mesh = icosphere(1).unwrap();
        let a = mass_matrix(&mesh).unwrap();
        let mut x = vec![3.0; mesh.num_vertices()];
        pcg(&a, &vec![0.0; x.len()], &mut x, SolveOptions::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_system_reports_failure() {
        let mesh = icosphere(1).unwrap();
        let s = stiffness_matrix(&mesh).unwrap();
        // constants are in the kernel; a nonzero-mean right-hand side has no solution
        let b = vec![1.0; mesh.num_vertices()];
        let mut x = vec![0.0; b.len()];
        let opts = SolveOptions {
            rel_tol: 1e-11,
            max_iter: 200,
        };
        assert!(pcg(&s, &b, &mut x, opts).is_err());
    }
}
