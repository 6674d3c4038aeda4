//! Jacobi-preconditioned conjugate gradient for the SPD (or consistent
//! positive semi-definite) systems assembled by the harmonic, potential and
//! mhd modules. Deterministic: fixed iteration order, sequential reductions.

use crate::error::{HelioxError, Result};

/// Relative residual all solves target.
pub const CG_TOL: f64 = 1e-12;
/// Iteration cap.
pub const CG_MAX_ITERS: usize = 100_000;

/// Matrix-free SPD operator.
pub trait LinearOperator {
    fn len(&self) -> usize;
    /// out = A x
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// Diagonal of A, for Jacobi preconditioning.
    fn diagonal(&self) -> Vec<f64>;
}

pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solve A x = b. For singular consistent systems (Neumann-style Laplacians)
/// CG converges to a particular solution; callers fix the null-space
/// component afterwards if they care about it.
pub fn conjugate_gradient<A: LinearOperator>(a: &A, b: &[f64], tol: f64, max_iters: usize) -> Result<(Vec<f64>, CgReport)> {
    let n = a.len();
    assert_eq!(b.len(), n);
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rnorm = bnorm;
    for it in 0..max_iters {
        if rnorm <= tol * bnorm {
            return Ok((
                x,
                CgReport {
                    iterations: it,
                    relative_residual: rnorm / bnorm,
                },
            ));
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Hit the null space (or lost positivity to rounding); the
            // current iterate is the best consistent answer we can certify.
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = norm(&r);
    }
    if rnorm <= tol * bnorm {
        return Ok((
            x,
            CgReport {
                iterations: max_iters,
                relative_residual: rnorm / bnorm,
            },
        ));
    }
    Err(HelioxError::SolverDiverged {
        residual: rnorm / bnorm,
        iterations: max_iters,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
