use super::{CsrMatrix, Preconditioner};
use crate::error::{Error, Result};

/// `sweeps` forward Gauss-Seidel sweeps on `A x = r` starting from `x = 0`.
pub fn gauss_seidel_apply(a: &CsrMatrix, r: &[f64], sweeps: usize) -> Result<Vec<f64>> {
    let gs = GaussSeidel::new(a, sweeps)?;
    if r.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: r.len(),
        });
    }
    let mut x = vec![0.0; r.len()];
    gs.sweep(r, &mut x);
    Ok(x)
}

/// Gauss-Seidel as a linear preconditioner, diagonal cached.
#[derive(Debug, Clone)]
pub struct GaussSeidel<'a> {
    a: &'a CsrMatrix,
    diag: Vec<f64>,
    sweeps: usize,
}

impl<'a> GaussSeidel<'a> {
    pub fn new(a: &'a CsrMatrix, sweeps: usize) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: a.cols(),
            });
        }
        let diag = (0..a.rows())
            .map(|i| {
                let d = a.get(i, i);
                if d == 0.0 {
                    Err(Error::ZeroDiagonal { row: i })
                } else {
                    Ok(d)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { a, diag, sweeps })
    }

    fn sweep(&self, r: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.sweeps {
            for i in 0..x.len() {
                let (cols, vals) = self.a.row(i);
                let mut s = r[i];
                for (&j, &v) in cols.iter().zip(vals) {
                    if j != i {
                        s -= v * x[j];
                    }
                }
                x[i] = s / self.diag[i];
            }
        }
    }
}

impl Preconditioner for GaussSeidel<'_> {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        self.sweep(r, out);
    }
}
