//! Compressed sparse row matrices and the iterative solvers built on them.

mod dense;
mod gauss_seidel;
mod gmres;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use dense::DenseMatrix;
pub use gauss_seidel::{gauss_seidel_apply, GaussSeidel};
pub use gmres::{gmres, Identity, LinearOperator, Preconditioner, SolveStats, SolverConfig};

/// Rows below this count are multiplied sequentially.
const PAR_ROWS: usize = 4096;

/// Row-major compressed sparse matrix with sorted, unique column indices in
/// every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            offsets: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Accumulates `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; rows + 1];
        for &(i, j, _) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::IndexOutOfRange {
                    row: i,
                    col: j,
                    rows,
                    cols,
                });
            }
            counts[i + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut raw = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            raw[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut offsets = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        offsets.push(0);
        for i in 0..rows {
            let row = &mut raw[counts[i]..counts[i + 1]];
            row.sort_by_key(|e| e.0);
            for &(j, v) in row.iter() {
                if indices.len() > offsets[i] && indices.last() == Some(&j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds a matrix from per-column `(row, value)` lists sorted by row.
    pub(crate) fn from_sorted_columns(columns: &[Vec<(usize, f64)>], rows: usize) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for col in columns {
            for &(i, _) in col {
                counts[i + 1] += 1;
            }
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let nnz = counts[rows];
        let mut next = counts.clone();
        let mut indices = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        // columns visited in increasing order keep every row sorted
        for (j, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                indices[next[i]] = j;
                values[next[i]] = v;
                next[i] += 1;
            }
        }
        Self {
            rows,
            cols: columns.len(),
            offsets: counts,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let mut columns = vec![Vec::new(); self.rows];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                columns[i].push((j, v));
            }
        }
        Self::from_sorted_columns(&columns, self.cols)
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: y.len(),
            });
        }
        let row_dot = |i: usize| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum::<f64>()
        };
        if self.rows >= PAR_ROWS {
            y.par_iter_mut()
                .with_min_len(512)
                .enumerate()
                .for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_triplets(rng: &mut ChaCha8Rng, r: usize, c: usize, n: usize) -> Vec<(usize, usize, f64)> {
        (0..n)
            .map(|_| (rng.gen_range(0..r), rng.gen_range(0..c), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn dense_accumulate(r: usize, c: usize, t: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; c]; r];
        for &(i, j, v) in t {
            d[i][j] += v;
        }
        d
    }

    #[test]
    fn identity_from_triplets() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m, CsrMatrix::identity(2));
    }

    #[test]
    fn duplicates_summed() {
        let m = CsrMatrix::from_triplets(1, 1, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]),
            Err(Error::IndexOutOfRange { row: 2, .. })
        ));
    }

    #[test]
    fn random_pattern_matches_dense_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_triplets(&mut rng, 50, 50, 600);
        let m = CsrMatrix::from_triplets(50, 50, &t).unwrap();
        let oracle = dense_accumulate(50, 50, &t);
        let dense = m.to_dense();
        for i in 0..50 {
            for j in 0..50 {
                assert!((dense[i][j] - oracle[i][j]).abs() < 1e-14);
            }
            let (cols, _) = m.row(i);
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn spmv_identity_and_zero() {
        let x = vec![1.5, -2.0, 3.25];
        assert_eq!(CsrMatrix::identity(3).spmv(&x).unwrap(), x);
        assert_eq!(CsrMatrix::zeros(2, 3).spmv(&x).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            CsrMatrix::identity(2).spmv(&x),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn transpose_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_triplets(&mut rng, 7, 11, 30);
        let m = CsrMatrix::from_triplets(7, 11, &t).unwrap();
        let mt = m.transpose();
        let (d, dt) = (m.to_dense(), mt.to_dense());
        for i in 0..7 {
            for j in 0..11 {
                assert_eq!(d[i][j], dt[j][i]);
            }
        }
    }

    #[test]
    fn large_spmv_parallel_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 2 * PAR_ROWS;
        let t = random_triplets(&mut rng, n, 300, 5 * n);
        let m = CsrMatrix::from_triplets(n, 300, &t).unwrap();
        let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = m.spmv(&x).unwrap();
        let mut oracle = vec![0.0; n];
        for &(i, j, v) in &t {
            oracle[i] += v * x[j];
        }
        for i in 0..n {
            assert!((y[i] - oracle[i]).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn spmv_matches_dense_oracle(seed in 0u64..10_000, r in 1usize..200, c in 1usize..200, fill in 0.0f64..0.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = ((r * c) as f64 * fill) as usize;
            let t = random_triplets(&mut rng, r, c, n);
            let m = CsrMatrix::from_triplets(r, c, &t).unwrap();
            let x: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = m.spmv(&x).unwrap();
            let d = dense_accumulate(r, c, &t);
            for i in 0..r {
                let yo: f64 = (0..c).map(|j| d[i][j] * x[j]).sum();
                let scale: f64 = (0..c).map(|j| (d[i][j] * x[j]).abs()).sum::<f64>().max(1e-300);
                prop_assert!((y[i] - yo).abs() <= 1e-14 * scale.max(1.0));
            }
        }
    }
}
