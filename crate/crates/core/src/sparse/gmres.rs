//! Restarted GMRES with right preconditioning.
//!
//! Right preconditioning solves `A M y = b` and returns `x = M y`, so the
//! residual minimised by the Arnoldi process is the residual of the original
//! system. The residual reported in [`SolveStats`] is nevertheless recomputed
//! from `A` and the returned `x`.

use serde::{Deserialize, Serialize};

use super::{CsrMatrix, DenseMatrix};
use crate::error::{Error, Result};

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse applied on the right: `out = M r`.
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], out: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y).expect("operator dimensions checked by caller");
    }
}

impl Preconditioner for CsrMatrix {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        self.spmv_into(r, out).expect("preconditioner dimensions checked by caller");
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.mul_vec(x));
    }
}

/// The trivial preconditioner.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(r);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl SolverConfig {
    /// Global interpolation solves.
    pub const OUTER: SolverConfig = SolverConfig {
        tol: 1e-10,
        max_iter: 5000,
        restart: 50,
    };

    /// Local cardinal-function solves; low accuracy is enough there.
    pub const INNER: SolverConfig = SolverConfig {
        tol: 1e-1,
        max_iter: 500,
        restart: 50,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "solver tolerance must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 || self.restart == 0 {
            return Err(Error::InvalidConfig(
                "max_iter and restart must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::OUTER
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// True relative residual of the returned solution.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64], bnorm: f64) -> f64 {
    let mut ax = vec![0.0; b.len()];
    a.apply(x, &mut ax);
    let r: f64 = b
        .iter()
        .zip(&ax)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt();
    r / bnorm
}

/// Solves `A x = b` from a zero initial guess.
///
/// Non-convergence within `cfg.max_iter` is reported through
/// `SolveStats::converged`; an Arnoldi breakdown that leaves the system
/// unsolved is an error.
pub fn gmres<A, P>(a: &A, b: &[f64], precond: Option<&P>, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("right-hand side entry {i} is not finite")));
    }
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }

    let precondition = |v: &[f64], out: &mut [f64]| match precond {
        Some(p) => p.apply(v, out),
        None => out.copy_from_slice(v),
    };

    let m = cfg.restart.min(n).max(1);
    let mut iterations = 0;
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut residual;

    loop {
        // Arnoldi basis, Hessenberg columns (already rotated) and Givens data
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut z = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut breakdown = false;
        let mut k_used = 0;

        for k in 0..m {
            precondition(&basis[k], &mut z);
            a.apply(&z, &mut w);
            let w0 = norm(&w);
            let mut h = vec![0.0; k + 2];
            // modified Gram-Schmidt, applied twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i] += c;
                    for (wj, vj) in w.iter_mut().zip(v) {
                        *wj -= c * vj;
                    }
                }
            }
            let hn = norm(&w);
            h[k + 1] = hn;
            for i in 0..k {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let rho = h[k].hypot(h[k + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (h[k] / rho, h[k + 1] / rho) };
            cs.push(c);
            sn.push(s);
            h[k] = rho;
            h[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            hess.push(h);
            iterations += 1;
            k_used = k + 1;

            if hn <= f64::EPSILON * w0 || hn == 0.0 {
                breakdown = true;
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
            if g[k + 1].abs() / bnorm <= cfg.tol || iterations >= cfg.max_iter {
                break;
            }
        }

        // back substitution on the triangular factor
        let mut y = vec![0.0; k_used];
        let rmax = (0..k_used).map(|i| hess[i][i].abs()).fold(0.0, f64::max);
        let mut singular = false;
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[j][i] * y[j]).sum();
            let d = hess[i][i];
            if d.abs() <= f64::EPSILON * rmax * k_used as f64 || d == 0.0 {
                singular = true;
                y[i] = 0.0;
            } else {
                y[i] = (g[i] - s) / d;
            }
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (u, vj) in update.iter_mut().zip(v) {
                *u += yi * vj;
            }
        }
        precondition(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }

        let mut ax = vec![0.0; n];
        a.apply(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        beta = norm(&r);
        residual = beta / bnorm;
        if residual <= cfg.tol {
            break;
        }
        if breakdown || singular {
            return Err(Error::Breakdown {
                iterations,
                residual,
            });
        }
        if iterations >= cfg.max_iter {
            break;
        }
    }

    debug_assert!((residual - true_residual(a, b, &x, bnorm)).abs() <= 1e-14 * residual.max(1.0));
    Ok((
        x,
        SolveStats {
            iterations,
            residual,
            converged: residual <= cfg.tol,
        },
    ))
}
