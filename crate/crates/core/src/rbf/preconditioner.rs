//! Right preconditioner built from approximate cardinal functions.
//!
//! For every source point `i` the support set `S_i` is the column pattern of
//! row `i` of `Phi_int`. The local system `L_i lambda_i = e_i`, with
//! `(L_i)_lm = phi(|x_{s_l} - x_{s_m}|, r_{s_m})`, gives the coefficients of a
//! function that is 1 at `x_i` and 0 at the other points of `S_i`; they are
//! stored as column `i` of `P^-1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::PointSet;
use crate::sparse::{gmres, CsrMatrix, DenseMatrix, GaussSeidel, SolverConfig};

/// How each local cardinal system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalSolve {
    /// Dense LU up to `dense_limit` unknowns, Gauss-Seidel preconditioned
    /// GMRES above.
    Auto { dense_limit: usize },
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalConfig {
    pub inner: SolverConfig,
    pub local_solve: LocalSolve,
    pub gauss_seidel_sweeps: usize,
}

impl Default for CardinalConfig {
    fn default() -> Self {
        Self {
            inner: SolverConfig::INNER,
            local_solve: LocalSolve::Auto { dense_limit: 64 },
            gauss_seidel_sweeps: 1,
        }
    }
}

pub fn build_cardinal_preconditioner(
    phi_int: &CsrMatrix,
    src: &PointSet,
    radii: &[f64],
    cfg: &CardinalConfig,
) -> Result<CsrMatrix> {
    let n = src.len();
    if phi_int.rows() != n || phi_int.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phi_int.rows(),
        });
    }
    if radii.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: radii.len(),
        });
    }
    cfg.inner.validate()?;
    let columns = (0..n)
        .into_par_iter()
        .map(|i| {
            local_cardinal(phi_int, i, cfg).map_err(|e| Error::CardinalSolve {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CsrMatrix::from_sorted_columns(&columns, n))
}

fn local_cardinal(phi_int: &CsrMatrix, i: usize, cfg: &CardinalConfig) -> Result<Vec<(usize, f64)>> {
    let (support, _) = phi_int.row(i);
    let ni = support.len();
    let pos = support
        .binary_search(&i)
        .map_err(|_| Error::ZeroDiagonal { row: i })?;
    // entries of Phi_int are exactly phi(|x_l - x_m|, r_m) on the pattern and
    // zero elsewhere, which is L_i restricted to S_i
    let local = DenseMatrix::from_fn(ni, ni, |l, m| phi_int.get(support[l], support[m]));
    let mut rhs = vec![0.0; ni];
    rhs[pos] = 1.0;

    let dense = match cfg.local_solve {
        LocalSolve::Dense => true,
        LocalSolve::Iterative => false,
        LocalSolve::Auto { dense_limit } => ni <= dense_limit,
    };
    let lambda = if dense {
        local.solve(&rhs)?
    } else {
        let triplets: Vec<(usize, usize, f64)> = (0..ni)
            .flat_map(|l| (0..ni).map(move |m| (l, m)))
            .map(|(l, m)| (l, m, local.get(l, m)))
            .filter(|t| t.2 != 0.0)
            .collect();
        let csr = CsrMatrix::from_triplets(ni, ni, &triplets)?;
        let gs = GaussSeidel::new(&csr, cfg.gauss_seidel_sweeps)?;
        // an unconverged local solve still yields a usable approximate column
        gmres(&csr, &rhs, Some(&gs), &cfg.inner)?.0
    };
    Ok(support.iter().copied().zip(lambda).collect())
}
