//! Compactly supported Wendland RBF interpolation with per-point support
//! radii, and its rescaled (constant-reproducing) variant.
//!
//! Matrix entries always take the radius of the *source* column:
//! `(Phi)_ij = phi(|x_i - xsrc_j|, r_j)`. The interpolation matrix is
//! therefore not symmetric in general.

mod preconditioner;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointcloud::{NeighborIndex, PointSet};
use crate::sparse::{gmres, CsrMatrix, SolveStats, SolverConfig};

pub use preconditioner::{build_cardinal_preconditioner, CardinalConfig, LocalSolve};

/// Below this value the interpolant of the constant 1 is treated as zero
/// and the destination as lying outside every source support.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

/// The C2 Wendland function `max(1 - t/r, 0)^4 (1 + 4 t/r)`.
pub fn wendland(t: f64, r: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("kernel distance must be >= 0, got {t}")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidConfig(format!("kernel radius must be > 0, got {r}")));
    }
    Ok(wendland_unchecked(t, r))
}

#[inline]
pub(crate) fn wendland_unchecked(t: f64, r: f64) -> f64 {
    let s = t / r;
    if s >= 1.0 {
        return 0.0;
    }
    let u = 1.0 - s;
    let u2 = u * u;
    u2 * u2 * (1.0 + 4.0 * s)
}

/// Gradient with respect to `x` of `phi(|x - c|, r)`, given `diff = x - c`.
///
/// `d phi / dt = -20 s (1 - s)^3 / r`, so the gradient is
/// `-20 (1 - s)^3 / r^2 * diff`, which is smooth through `t = 0`.
#[inline]
pub fn wendland_gradient(diff: [f64; 3], r: f64) -> [f64; 3] {
    let t = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
    let s = t / r;
    if s >= 1.0 {
        return [0.0; 3];
    }
    let u = 1.0 - s;
    let f = -20.0 * u * u * u / (r * r);
    diff.map(|d| f * d)
}

fn check_radii(src: &PointSet, radii: &[f64]) -> Result<()> {
    if radii.len() != src.len() {
        return Err(Error::DimensionMismatch {
            expected: src.len(),
            got: radii.len(),
        });
    }
    if let Some(j) = radii.iter().position(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "radius of source point {j} must be positive and finite"
        )));
    }
    Ok(())
}

/// For every source point `j`, the `(row, value)` pairs of targets inside its
/// open support ball, where `value` is computed by `entry(target, j, dist)`.
fn support_columns<F>(targets: &NeighborIndex, src: &PointSet, radii: &[f64], entry: F) -> Vec<Vec<(usize, f64)>>
where
    F: Fn(usize, usize, f64) -> f64 + Sync,
{
    src.points()
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            targets
                .within(*p, radii[j])
                .into_iter()
                .map(|(i, d)| (i, entry(i, j, d)))
                .collect()
        })
        .collect()
}

/// `(Phi_int)_ij = phi(|xsrc_i - xsrc_j|, r_j)`; stored only where
/// `|xsrc_i - xsrc_j| < r_j`.
pub fn assemble_interp_matrix(src: &PointSet, radii: &[f64]) -> Result<CsrMatrix> {
    assemble_interp_matrix_with(src, &src.build_index()?, radii)
}

pub fn assemble_interp_matrix_with(src: &PointSet, src_index: &NeighborIndex, radii: &[f64]) -> Result<CsrMatrix> {
    check_radii(src, radii)?;
    let cols = support_columns(src_index, src, radii, |_, j, d| wendland_unchecked(d, radii[j]));
    Ok(CsrMatrix::from_sorted_columns(&cols, src.len()))
}

/// `(Phi_eval)_ij = phi(|xdst_i - xsrc_j|, r_j)`.
pub fn assemble_eval_matrix(dst: &PointSet, src: &PointSet, radii: &[f64]) -> Result<CsrMatrix> {
    assemble_eval_matrix_with(dst, &dst.build_index()?, src, radii)
}

pub fn assemble_eval_matrix_with(
    dst: &PointSet,
    dst_index: &NeighborIndex,
    src: &PointSet,
    radii: &[f64],
) -> Result<CsrMatrix> {
    check_radii(src, radii)?;
    let cols = support_columns(dst_index, src, radii, |_, j, d| wendland_unchecked(d, radii[j]));
    Ok(CsrMatrix::from_sorted_columns(&cols, dst.len()))
}

/// The three partial-derivative matrices `d/dx_k phi(|x - xsrc_j|, r_j)`
/// evaluated at the destination points; same sparsity as `Phi_eval`.
pub fn assemble_eval_gradient(
    dst: &PointSet,
    dst_index: &NeighborIndex,
    src: &PointSet,
    radii: &[f64],
) -> Result<[CsrMatrix; 3]> {
    check_radii(src, radii)?;
    let cols = support_columns(dst_index, src, radii, |_, _, _| 0.0);
    let mut out: [Vec<Vec<(usize, f64)>>; 3] = Default::default();
    for (axis, slot) in out.iter_mut().enumerate() {
        *slot = cols
            .par_iter()
            .enumerate()
            .map(|(j, col)| {
                let c = src[j].to_array();
                col.iter()
                    .map(|&(i, _)| {
                        let x = dst[i].to_array();
                        let g = wendland_gradient([x[0] - c[0], x[1] - c[1], x[2] - c[2]], radii[j]);
                        (i, g[axis])
                    })
                    .collect()
            })
            .collect();
    }
    Ok(out.map(|c| CsrMatrix::from_sorted_columns(&c, dst.len())))
}

/// Solves `Phi_int gamma = values`; non-convergence is an error.
pub fn solve_coefficients(
    phi_int: &CsrMatrix,
    values: &[f64],
    precond: Option<&CsrMatrix>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let (x, stats) = gmres(phi_int, values, precond, cfg)?;
    if !stats.converged {
        return Err(Error::NotConverged {
            iterations: stats.iterations,
            residual: stats.residual,
        });
    }
    Ok((x, stats))
}

/// Everything needed to turn source data into RBF coefficients.
#[derive(Debug, Clone)]
pub struct InterpolationSystem {
    src: Arc<PointSet>,
    radii: Arc<[f64]>,
    phi_int: CsrMatrix,
    precond: Option<CsrMatrix>,
    solver: SolverConfig,
}

impl InterpolationSystem {
    pub fn new(
        src: Arc<PointSet>,
        radii: Arc<[f64]>,
        phi_int: CsrMatrix,
        precond: Option<CsrMatrix>,
        solver: SolverConfig,
    ) -> Result<Self> {
        check_radii(&src, &radii)?;
        let n = src.len();
        if phi_int.rows() != n || phi_int.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: phi_int.rows(),
            });
        }
        if let Some(p) = &precond {
            if p.rows() != n || p.cols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.rows(),
                });
            }
        }
        solver.validate()?;
        Ok(Self {
            src,
            radii,
            phi_int,
            precond,
            solver,
        })
    }

    pub fn source(&self) -> &Arc<PointSet> {
        &self.src
    }

    pub fn radii(&self) -> &Arc<[f64]> {
        &self.radii
    }

    pub fn phi_int(&self) -> &CsrMatrix {
        &self.phi_int
    }

    pub fn preconditioner(&self) -> Option<&CsrMatrix> {
        self.precond.as_ref()
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn without_preconditioner(mut self) -> Self {
        self.precond = None;
        self
    }

    pub fn build_interpolant(&self, values: &[f64]) -> Result<Interpolant> {
        if values.len() != self.src.len() {
            return Err(Error::DimensionMismatch {
                expected: self.src.len(),
                got: values.len(),
            });
        }
        let (coeffs, stats) = solve_coefficients(&self.phi_int, values, self.precond.as_ref(), &self.solver)?;
        Ok(Interpolant {
            src: Arc::clone(&self.src),
            radii: Arc::clone(&self.radii),
            coeffs,
            stats,
        })
    }
}

/// `sum_j gamma_j phi(|x - xsrc_j|, r_j)`.
#[derive(Debug, Clone)]
pub struct Interpolant {
    src: Arc<PointSet>,
    radii: Arc<[f64]>,
    coeffs: Vec<f64>,
    stats: SolveStats,
}

impl Interpolant {
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    pub fn evaluate(&self, phi_eval: &CsrMatrix) -> Result<Vec<f64>> {
        phi_eval.spmv(&self.coeffs)
    }

    /// Evaluates at arbitrary points, assembling a throwaway `Phi_eval`.
    pub fn evaluate_at(&self, pts: &PointSet) -> Result<Vec<f64>> {
        self.evaluate(&assemble_eval_matrix(pts, &self.src, &self.radii)?)
    }

    pub fn gradient_at(&self, pts: &PointSet) -> Result<Vec<[f64; 3]>> {
        let g = assemble_eval_gradient(pts, &pts.build_index()?, &self.src, &self.radii)?;
        let parts = [g[0].spmv(&self.coeffs)?, g[1].spmv(&self.coeffs)?, g[2].spmv(&self.coeffs)?];
        Ok((0..pts.len()).map(|i| [parts[0][i], parts[1][i], parts[2][i]]).collect())
    }
}

/// `Pi f / Pi g` with `g == 1`. The denominator is shared by every field
/// interpolated on the same source cloud.
#[derive(Debug, Clone)]
pub struct RescaledInterpolant {
    numer: Interpolant,
    denom: Arc<Interpolant>,
}

impl RescaledInterpolant {
    pub fn new(numer: Interpolant, denom: Arc<Interpolant>) -> Self {
        Self { numer, denom }
    }

    pub fn numerator(&self) -> &Interpolant {
        &self.numer
    }

    pub fn denominator(&self) -> &Interpolant {
        &self.denom
    }

    pub fn evaluate(&self, phi_eval: &CsrMatrix) -> Result<Vec<f64>> {
        evaluate_rescaled(self, phi_eval)
    }

    pub fn evaluate_at(&self, pts: &PointSet) -> Result<Vec<f64>> {
        self.evaluate(&assemble_eval_matrix(pts, &self.numer.src, &self.numer.radii)?)
    }
}

/// Componentwise `(Phi_eval gamma_f) / (Phi_eval gamma_g)`; fails on the
/// first destination whose denominator falls below [`DENOMINATOR_FLOOR`].
pub fn evaluate_rescaled(f: &RescaledInterpolant, phi_eval: &CsrMatrix) -> Result<Vec<f64>> {
    let num = f.numer.evaluate(phi_eval)?;
    let den = f.denom.evaluate(phi_eval)?;
    rescale(num, &den)
}

pub(crate) fn check_denominators(den: &[f64]) -> Result<()> {
    match den.iter().position(|d| !(*d >= DENOMINATOR_FLOOR)) {
        Some(index) => Err(Error::Uncovered {
            index,
            value: den[index],
        }),
        None => Ok(()),
    }
}

pub(crate) fn rescale(mut num: Vec<f64>, den: &[f64]) -> Result<Vec<f64>> {
    check_denominators(den)?;
    for (n, d) in num.iter_mut().zip(den) {
        *n /= d;
    }
    Ok(num)
}
