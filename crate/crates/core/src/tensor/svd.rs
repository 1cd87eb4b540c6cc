use serde::{Deserialize, Serialize};

use super::{cross, det3, dot, orthogonality_error, rotation_to_quaternion, Quaternion, Tensor3};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// `F = U diag(sigma) V^T` with orthogonal `U`, `V` and `sigma` sorted in
/// decreasing order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSvd {
    pub u: Tensor3,
    pub sigma: [f64; 3],
    pub v: Tensor3,
}

impl RawSvd {
    pub fn reconstruct(&self) -> Tensor3 {
        compose(&self.u, self.sigma, &self.v)
    }
}

/// An orthonormal right-handed triplet the right singular vectors are
/// matched against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTriplet {
    pub w: [[f64; 3]; 3],
}

impl ReferenceTriplet {
    pub const CANONICAL: ReferenceTriplet = ReferenceTriplet {
        w: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn new(w1: [f64; 3], w2: [f64; 3], w3: [f64; 3]) -> Result<Self> {
        let t = Tensor3::from_cols([w1, w2, w3]);
        let orth = orthogonality_error(&t);
        let det = det3(&t);
        if !(orth <= 1e-10) || !((det - 1.0).abs() <= 1e-10) {
            return Err(Error::InvalidConfig(format!(
                "reference triplet must be orthonormal and right-handed (orthogonality error {orth:e}, det {det})"
            )));
        }
        Ok(Self { w: [w1, w2, w3] })
    }
}

impl Default for ReferenceTriplet {
    fn default() -> Self {
        Self::CANONICAL
    }
}

/// Singular factors reordered and reoriented against a reference triplet.
/// `u` and `v` are proper rotations and every `sigma` is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedSvd {
    pub u: Tensor3,
    pub sigma: [f64; 3],
    pub v: Tensor3,
    pub q_u: Quaternion,
    pub q_v: Quaternion,
}

impl AlignedSvd {
    pub fn reconstruct(&self) -> Tensor3 {
        compose(&self.u, self.sigma, &self.v)
    }

    pub fn log_sigma(&self) -> [f64; 3] {
        self.sigma.map(f64::ln)
    }
}

pub(crate) fn compose(u: &Tensor3, sigma: [f64; 3], v: &Tensor3) -> Tensor3 {
    Tensor3::from_fn(|k, l| (0..3).map(|p| u.get(k, p) * sigma[p] * v.get(l, p)).sum())
}

/// One-sided Jacobi SVD: plane rotations are applied to the columns of `F`
/// until they are mutually orthogonal; their norms are the singular values.
pub fn svd3(f: &Tensor3) -> RawSvd {
    let mut a = [f.col(0), f.col(1), f.col(2)];
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let alpha = dot(a[p], a[p]);
            let beta = dot(a[q], a[q]);
            let gamma = dot(a[p], a[q]);
            if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + 1.0f64.hypot(zeta));
            let c = 1.0 / 1.0f64.hypot(t);
            let s = c * t;
            for cols in [&mut a, &mut v] {
                let (xp, xq) = (cols[p], cols[q]);
                for k in 0..3 {
                    cols[p][k] = c * xp[k] - s * xq[k];
                    cols[q][k] = s * xp[k] + c * xq[k];
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms = a.map(|c| dot(c, c).sqrt());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let sigma = order.map(|i| norms[i]);
    let v_cols = order.map(|i| v[i]);

    let tiny = sigma[0] * 8.0 * f64::EPSILON;
    let mut u_cols = [[0.0; 3]; 3];
    let mut have = Vec::with_capacity(3);
    for (slot, &i) in order.iter().enumerate() {
        if norms[i] > tiny && norms[i] > 0.0 {
            u_cols[slot] = a[i].map(|x| x / norms[i]);
            have.push(slot);
        }
    }
    for slot in 0..3 {
        if !have.contains(&slot) {
            u_cols[slot] = complete_basis(&have.iter().map(|&s| u_cols[s]).collect::<Vec<_>>());
            have.push(slot);
        }
    }

    RawSvd {
        u: Tensor3::from_cols(u_cols),
        sigma,
        v: Tensor3::from_cols(v_cols),
    }
}

/// A unit vector orthogonal to every vector of `basis` (at most two).
fn complete_basis(basis: &[[f64; 3]]) -> [f64; 3] {
    if basis.len() == 2 {
        let c = cross(basis[0], basis[1]);
        let n = dot(c, c).sqrt();
        return c.map(|x| x / n);
    }
    let mut best = [0.0; 3];
    let mut best_norm = -1.0;
    for e in 0..3 {
        let mut r = [0.0; 3];
        r[e] = 1.0;
        for b in basis {
            let p = dot(r, *b);
            for k in 0..3 {
                r[k] -= p * b[k];
            }
        }
        let n = dot(r, r).sqrt();
        if n > best_norm {
            best_norm = n;
            best = r.map(|x| x / n);
        }
    }
    best
}

/// Reorders and reorients `raw` so that right singular vector `k` is the one
/// most aligned with `w^k` and points along it; the third is oriented so that
/// `det V = +1`. Singular values and left vectors follow in lockstep.
pub fn align_svd(raw: &RawSvd, reference: &ReferenceTriplet) -> Result<AlignedSvd> {
    if raw.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::ZeroSingularValue);
    }
    let orientation = det3(&raw.u) * det3(&raw.v);
    if !(orientation > 0.0) {
        return Err(Error::ImproperFactors(orientation));
    }
    let vt = [raw.v.col(0), raw.v.col(1), raw.v.col(2)];
    let ut = [raw.u.col(0), raw.u.col(1), raw.u.col(2)];

    let mut remaining = vec![0usize, 1, 2];
    let mut picks = [(0usize, 1.0f64); 3];
    for k in 0..2 {
        let w = reference.w[k];
        let mut best = remaining[0];
        for &i in &remaining[1..] {
            if dot(w, vt[i]).abs() > dot(w, vt[best]).abs() {
                best = i;
            }
        }
        let d = dot(w, vt[best]);
        let sign = if d < 0.0 || (d == 0.0 && first_nonzero(vt[best]) < 0.0) {
            -1.0
        } else {
            1.0
        };
        picks[k] = (best, sign);
        remaining.retain(|&i| i != best);
    }
    let j3 = remaining[0];
    let v1 = vt[picks[0].0].map(|x| picks[0].1 * x);
    let v2 = vt[picks[1].0].map(|x| picks[1].1 * x);
    let s3 = if dot(cross(v1, v2), vt[j3]) < 0.0 { -1.0 } else { 1.0 };
    picks[2] = (j3, s3);

    let v = Tensor3::from_cols(picks.map(|(j, s)| vt[j].map(|x| s * x)));
    let u = Tensor3::from_cols(picks.map(|(j, s)| ut[j].map(|x| s * x)));
    let sigma = picks.map(|(j, _)| raw.sigma[j]);
    let q_u = rotation_to_quaternion(&u)?;
    let q_v = rotation_to_quaternion(&v)?;
    Ok(AlignedSvd {
        u,
        sigma,
        v,
        q_u,
        q_v,
    })
}

fn first_nonzero(x: [f64; 3]) -> f64 {
    x.into_iter().find(|c| *c != 0.0).unwrap_or(0.0)
}
