//! 3x3 tensors, their singular value decomposition, singular-vector alignment
//! and rotation/quaternion conversion.

mod quaternion;
mod svd;

use std::ops::{Add, Index, Mul, Sub};

use serde::{Deserialize, Serialize};

pub use quaternion::{quaternion_to_rotation, rotation_to_quaternion, Quaternion, QUATERNION_NORM_FLOOR};
pub use svd::{align_svd, svd3, AlignedSvd, RawSvd, ReferenceTriplet};

/// A 3x3 tensor stored row-major: `m[3 * k + l] = F_kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub m: [f64; 9],
}

impl Tensor3 {
    pub const IDENTITY: Tensor3 = Tensor3 {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    };

    pub const ZERO: Tensor3 = Tensor3 { m: [0.0; 9] };

    pub fn from_row_major(m: [f64; 9]) -> Self {
        Self { m }
    }

    pub fn from_rows(r: [[f64; 3]; 3]) -> Self {
        Self::from_fn(|k, l| r[k][l])
    }

    pub fn from_cols(c: [[f64; 3]; 3]) -> Self {
        Self::from_fn(|k, l| c[l][k])
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = [0.0; 9];
        for k in 0..3 {
            for l in 0..3 {
                m[3 * k + l] = f(k, l);
            }
        }
        Self { m }
    }

    pub fn diag(d: [f64; 3]) -> Self {
        Self::from_fn(|k, l| if k == l { d[k] } else { 0.0 })
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.m[3 * k + l]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, v: f64) {
        self.m[3 * k + l] = v;
    }

    pub fn col(&self, l: usize) -> [f64; 3] {
        [self.get(0, l), self.get(1, l), self.get(2, l)]
    }

    pub fn row(&self, k: usize) -> [f64; 3] {
        [self.get(k, 0), self.get(k, 1), self.get(k, 2)]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|k, l| self.get(l, k))
    }

    pub fn mul_vec(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|k| dot(self.row(k), x))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: self.m.map(|v| v * s),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }

    pub fn det(&self) -> f64 {
        det3(self)
    }
}

impl Default for Tensor3 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Index<(usize, usize)> for Tensor3 {
    type Output = f64;

    fn index(&self, (k, l): (usize, usize)) -> &f64 {
        &self.m[3 * k + l]
    }
}

impl Mul for Tensor3 {
    type Output = Tensor3;

    fn mul(self, rhs: Tensor3) -> Tensor3 {
        Tensor3::from_fn(|k, l| (0..3).map(|p| self.get(k, p) * rhs.get(p, l)).sum())
    }
}

impl Add for Tensor3 {
    type Output = Tensor3;

    fn add(self, rhs: Tensor3) -> Tensor3 {
        Tensor3::from_fn(|k, l| self.get(k, l) + rhs.get(k, l))
    }
}

impl Sub for Tensor3 {
    type Output = Tensor3;

    fn sub(self, rhs: Tensor3) -> Tensor3 {
        Tensor3::from_fn(|k, l| self.get(k, l) - rhs.get(k, l))
    }
}

/// Determinant by expansion along the first row.
pub fn det3(f: &Tensor3) -> f64 {
    let m = &f.m;
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Largest entry of `|A^T A - I|`.
pub(crate) fn orthogonality_error(a: &Tensor3) -> f64 {
    let g = a.transpose() * *a;
    (g - Tensor3::IDENTITY).max_abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cofactor_det_by_column(f: &Tensor3) -> f64 {
        // expansion along the last column
        let minor = |r0: usize, r1: usize| f.get(r0, 0) * f.get(r1, 1) - f.get(r1, 0) * f.get(r0, 1);
        f.get(0, 2) * minor(1, 2) - f.get(1, 2) * minor(0, 2) + f.get(2, 2) * minor(0, 1)
    }

    #[test]
    fn det_examples() {
        assert_eq!(det3(&Tensor3::IDENTITY), 1.0);
        assert_eq!(det3(&Tensor3::diag([2.0, 3.0, 4.0])), 24.0);
        assert_eq!(det3(&Tensor3::ZERO), 0.0);
    }

    #[test]
    fn det_matches_cofactor_and_lu_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut checked = 0;
        while checked < 2000 {
            let f = Tensor3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let d = det3(&f);
            let oracle = cofactor_det_by_column(&f);
            let lu = nalgebra::Matrix3::from_row_slice(&f.m).determinant();
            if oracle.abs() < 0.1 {
                continue;
            }
            assert!((d - oracle).abs() < 1e-14 * oracle.abs(), "{d} vs {oracle}");
            assert!((d - lu).abs() < 1e-13 * lu.abs());
            checked += 1;
        }
    }

    #[test]
    fn products_and_transpose() {
        let a = Tensor3::from_rows([[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [4.0, 0.0, 1.0]]);
        let b = a.transpose();
        assert_eq!(b.get(0, 2), 4.0);
        let p = a * Tensor3::IDENTITY;
        assert_eq!(p, a);
        assert_eq!(a.mul_vec([1.0, 1.0, 1.0]), [3.0, 4.0, 5.0]);
        assert!((det3(&(a * b)) - det3(&a).powi(2)).abs() < 1e-12);
        assert_eq!(Tensor3::from_cols([a.col(0), a.col(1), a.col(2)]), a);
        assert_eq!(a[(1, 2)], 3.0);
    }
}
