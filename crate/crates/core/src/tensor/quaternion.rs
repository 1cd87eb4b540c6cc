use serde::{Deserialize, Serialize};

use super::{det3, orthogonality_error, Tensor3};
use crate::error::{Error, Result};

/// Quaternions with a smaller norm are not turned back into rotations.
pub const QUATERNION_NORM_FLOOR: f64 = 1e-6;

const ROTATION_TOL: f64 = 1e-10;

/// `a + b i + c j + d k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|x| x * s))
    }

    /// Representative of `{q, -q}` with `a > 0`, or, when `a == 0`, with the
    /// first nonzero of `b, c, d` positive.
    pub fn hemisphere(self) -> Self {
        let lead = self.to_array().into_iter().find(|x| *x != 0.0).unwrap_or(0.0);
        if lead < 0.0 {
            self.scale(-1.0)
        } else {
            self
        }
    }
}

/// Unit quaternion of a proper rotation, normalized to the `a >= 0`
/// hemisphere. Uses the branch of Shepperd's method with the largest pivot.
pub fn rotation_to_quaternion(r: &Tensor3) -> Result<Quaternion> {
    let orthogonality = orthogonality_error(r);
    let det = det3(r);
    if !(orthogonality <= ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
        return Err(Error::NotRotation { orthogonality, det });
    }
    let m = |k: usize, l: usize| r.get(k, l);
    let trace = m(0, 0) + m(1, 1) + m(2, 2);
    let pivots = [trace, m(0, 0), m(1, 1), m(2, 2)];
    let mut best = 0;
    for i in 1..4 {
        if pivots[i] > pivots[best] {
            best = i;
        }
    }
    let q = match best {
        0 => {
            let a = 0.5 * (1.0 + trace).sqrt();
            let f = 0.25 / a;
            Quaternion::new(a, (m(2, 1) - m(1, 2)) * f, (m(0, 2) - m(2, 0)) * f, (m(1, 0) - m(0, 1)) * f)
        }
        1 => {
            let b = 0.5 * (1.0 + m(0, 0) - m(1, 1) - m(2, 2)).sqrt();
            let f = 0.25 / b;
            Quaternion::new((m(2, 1) - m(1, 2)) * f, b, (m(0, 1) + m(1, 0)) * f, (m(0, 2) + m(2, 0)) * f)
        }
        2 => {
            let c = 0.5 * (1.0 - m(0, 0) + m(1, 1) - m(2, 2)).sqrt();
            let f = 0.25 / c;
            Quaternion::new((m(0, 2) - m(2, 0)) * f, (m(0, 1) + m(1, 0)) * f, c, (m(1, 2) + m(2, 1)) * f)
        }
        _ => {
            let d = 0.5 * (1.0 - m(0, 0) - m(1, 1) + m(2, 2)).sqrt();
            let f = 0.25 / d;
            Quaternion::new((m(1, 0) - m(0, 1)) * f, (m(0, 2) + m(2, 0)) * f, (m(1, 2) + m(2, 1)) * f, d)
        }
    };
    Ok(q.scale(1.0 / q.norm()).hemisphere())
}

/// Rotation matrix of `q / |q|`.
pub fn quaternion_to_rotation(q: &Quaternion) -> Result<Tensor3> {
    let norm = q.norm();
    if !(norm >= QUATERNION_NORM_FLOOR) || !norm.is_finite() {
        return Err(Error::DegenerateQuaternion { norm });
    }
    let Quaternion { a, b, c, d } = q.scale(1.0 / norm);
    Ok(Tensor3::from_rows([
        [1.0 - 2.0 * (c * c + d * d), 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), 1.0 - 2.0 * (b * b + d * d), 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), 1.0 - 2.0 * (b * b + c * c)],
    ]))
}
