//! Krylov solvers on flat vectors with a Jacobi preconditioner. Convergence is
//! declared on the max norm of the true residual.

use crate::error::{EekError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Max norm of b − Ax at exit.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Absolute max-norm residual target.
    pub tol: f64,
    pub max_iterations: usize,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn residual(apply: &mut impl FnMut(&[f64], &mut [f64]), b: &[f64], x: &[f64], r: &mut [f64]) {
    apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Preconditioned conjugate gradients for a symmetric positive definite operator.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    opts: KrylovOptions,
    stage: &str,
) -> Result<SolveStats> {
    let m = b.len();
    let mut r = vec![0.0; m];
    residual(&mut apply, b, x, &mut r);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz = dot(&r, &z);
    for it in 0..opts.max_iterations {
        let res = max_abs(&r);
        if res <= opts.tol {
            return Ok(SolveStats { iterations: it, residual: res });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(EekError::Numerical {
                stage: stage.into(),
                detail: format!("operator is not positive definite (p·Ap = {pap:e})"),
            });
        }
        let a = rz / pap;
        axpy(x, a, &p);
        axpy(&mut r, -a, &ap);
        // Refresh the recursive residual now and then to avoid drift.
        if (it + 1) % 50 == 0 {
            residual(&mut apply, b, x, &mut r);
        }
        for ((zi, ri), d) in z.iter_mut().zip(&r).zip(diag) {
            *zi = ri / d;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    residual(&mut apply, b, x, &mut r);
    let res = max_abs(&r);
    if res <= opts.tol {
        return Ok(SolveStats { iterations: opts.max_iterations, residual: res });
    }
    Err(EekError::Convergence {
        stage: stage.into(),
        iterations: opts.max_iterations,
        residual: res,
    })
}

/// Right-preconditioned BiCGSTAB for general nonsingular operators.
pub fn bicgstab(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    opts: KrylovOptions,
    stage: &str,
) -> Result<SolveStats> {
    let m = b.len();
    let mut r = vec![0.0; m];
    residual(&mut apply, b, x, &mut r);
    let mut r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut s = vec![0.0; m];
    let mut t = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut zz = vec![0.0; m];
    for it in 0..opts.max_iterations {
        let res = max_abs(&r);
        if res <= opts.tol {
            return Ok(SolveStats { iterations: it, residual: res });
        }
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // Breakdown: restart from the current residual.
            residual(&mut apply, b, x, &mut r);
            r0.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..m {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..m {
            y[i] = p[i] / diag[i];
        }
        apply(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..m {
            s[i] = r[i] - alpha * v[i];
        }
        for i in 0..m {
            zz[i] = s[i] / diag[i];
        }
        apply(&zz, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..m {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        if (it + 1) % 50 == 0 {
            residual(&mut apply, b, x, &mut r);
        }
    }
    residual(&mut apply, b, x, &mut r);
    let res = max_abs(&r);
    if res <= opts.tol {
        return Ok(SolveStats { iterations: opts.max_iterations, residual: res });
    }
    Err(EekError::Convergence {
        stage: stage.into(),
        iterations: opts.max_iterations,
        residual: res,
    })
}
