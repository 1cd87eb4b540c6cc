//! Synthetic displacement fields with analytic gradients.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldxfer::TensorField;
use crate::pointcloud::{Point3, PointSet};
use crate::tensor::Tensor3;

const RANDOM_MODES: usize = 8;

fn default_rate() -> f64 {
    1.0
}

fn default_axis_center() -> [f64; 2] {
    [0.5, 0.5]
}

fn default_lambda() -> f64 {
    1.2
}

fn default_shear() -> f64 {
    0.3
}

fn default_split() -> f64 {
    0.5
}

fn default_amplitude() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    /// Rotation about the vertical axis through `center`, by an angle
    /// `rate * (z - 0.5)`.
    Twist {
        #[serde(default = "default_rate")]
        rate: f64,
        #[serde(default = "default_axis_center")]
        center: [f64; 2],
    },
    /// Diagonal stretch `1 + eps_k (1 + sin(2 pi x_k) / 4)` with
    /// `eps = (lambda - 1, lambda^-1/2 - 1, lambda^-1/2 - 1)`.
    Stretch {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// `d_1 = k y + 0.1 k sin(2 pi y)`.
    Shear {
        #[serde(default = "default_shear")]
        k: f64,
    },
    /// Identity for `x < split`, a half turn about the vertical axis beyond.
    Rotblend {
        #[serde(default = "default_split")]
        split: f64,
    },
    /// Sum of random Fourier modes with spectral gradient bound `amplitude`.
    Randsmooth {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

impl FieldKind {
    pub const NAMES: [&'static str; 5] = ["twist", "stretch", "shear", "rotblend", "randsmooth"];

    pub fn with_defaults(name: &str) -> Result<Self> {
        match name {
            "twist" => Ok(FieldKind::Twist {
                rate: default_rate(),
                center: default_axis_center(),
            }),
            "stretch" => Ok(FieldKind::Stretch { lambda: default_lambda() }),
            "shear" => Ok(FieldKind::Shear { k: default_shear() }),
            "rotblend" => Ok(FieldKind::Rotblend { split: default_split() }),
            "randsmooth" => Ok(FieldKind::Randsmooth {
                amplitude: default_amplitude(),
            }),
            _ => Err(Error::InvalidConfig(format!(
                "unknown field kind {name:?} (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Twist { .. } => "twist",
            FieldKind::Stretch { .. } => "stretch",
            FieldKind::Shear { .. } => "shear",
            FieldKind::Rotblend { .. } => "rotblend",
            FieldKind::Randsmooth { .. } => "randsmooth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match *self {
            FieldKind::Twist { rate, center } if !rate.is_finite() || !center.iter().all(|c| c.is_finite()) => {
                bad("twist parameters must be finite".into())
            }
            FieldKind::Stretch { lambda } if !(lambda > 0.0) || !lambda.is_finite() => {
                bad(format!("stretch lambda must be positive, got {lambda}"))
            }
            FieldKind::Shear { k } if !k.is_finite() => bad("shear k must be finite".into()),
            FieldKind::Rotblend { split } if !split.is_finite() => bad("rotblend split must be finite".into()),
            FieldKind::Randsmooth { amplitude } if !(0.0..1.0).contains(&amplitude) => {
                bad(format!("randsmooth amplitude must lie in [0, 1), got {amplitude}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mode {
    b: [f64; 3],
    kappa: [f64; 3],
    phase: f64,
}

/// A field kind with its random modes drawn; evaluates the displacement and
/// its exact gradient anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticField {
    kind: FieldKind,
    modes: Vec<Mode>,
}

impl SyntheticField {
    pub fn new(kind: FieldKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        let modes = match kind {
            FieldKind::Randsmooth { amplitude } => random_modes(amplitude, seed),
            _ => Vec::new(),
        };
        Ok(Self { kind, modes })
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn displacement(&self, p: &Point3) -> [f64; 3] {
        let x = p.to_array();
        match self.kind {
            FieldKind::Twist { rate, center } => {
                let theta = rate * (x[2] - 0.5);
                let (s, c) = theta.sin_cos();
                let r = [x[0] - center[0], x[1] - center[1]];
                [c * r[0] - s * r[1] - r[0], s * r[0] + c * r[1] - r[1], 0.0]
            }
            FieldKind::Stretch { lambda } => {
                let eps = stretch_eps(lambda);
                std::array::from_fn(|k| eps[k] * (x[k] - 0.25 * (TAU * x[k]).cos() / TAU))
            }
            FieldKind::Shear { k } => [k * x[1] + 0.1 * k * (TAU * x[1]).sin(), 0.0, 0.0],
            FieldKind::Rotblend { split } => {
                if x[0] < split {
                    [0.0; 3]
                } else {
                    // half turn about the line x = split, y = 0.5
                    [-2.0 * (x[0] - split), -2.0 * (x[1] - 0.5), 0.0]
                }
            }
            FieldKind::Randsmooth { .. } => {
                let mut d = [0.0; 3];
                for m in &self.modes {
                    let s = (TAU * dot(m.kappa, x) + m.phase).sin();
                    for k in 0..3 {
                        d[k] += m.b[k] * s;
                    }
                }
                d
            }
        }
    }

    /// `F = I + grad d`.
    pub fn gradient(&self, p: &Point3) -> Tensor3 {
        let x = p.to_array();
        match self.kind {
            FieldKind::Twist { rate, center } => {
                let theta = rate * (x[2] - 0.5);
                let (s, c) = theta.sin_cos();
                let r = [x[0] - center[0], x[1] - center[1]];
                Tensor3::from_rows([
                    [c, -s, rate * (-s * r[0] - c * r[1])],
                    [s, c, rate * (c * r[0] - s * r[1])],
                    [0.0, 0.0, 1.0],
                ])
            }
            FieldKind::Stretch { lambda } => {
                let eps = stretch_eps(lambda);
                Tensor3::diag(std::array::from_fn(|k| 1.0 + eps[k] * (1.0 + 0.25 * (TAU * x[k]).sin())))
            }
            FieldKind::Shear { k } => {
                let mut f = Tensor3::IDENTITY;
                f.set(0, 1, k + 0.2 * PI * k * (TAU * x[1]).cos());
                f
            }
            FieldKind::Rotblend { split } => {
                if x[0] < split {
                    Tensor3::IDENTITY
                } else {
                    Tensor3::diag([-1.0, -1.0, 1.0])
                }
            }
            FieldKind::Randsmooth { .. } => {
                let mut f = Tensor3::IDENTITY;
                for m in &self.modes {
                    let c = TAU * (TAU * dot(m.kappa, x) + m.phase).cos();
                    for k in 0..3 {
                        for l in 0..3 {
                            f.set(k, l, f.get(k, l) + m.b[k] * m.kappa[l] * c);
                        }
                    }
                }
                f
            }
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn stretch_eps(lambda: f64) -> [f64; 3] {
    let t = 1.0 / lambda.sqrt() - 1.0;
    [lambda - 1.0, t, t]
}

/// Modes scaled so that `sum 2 pi |b| |kappa| = amplitude`, which bounds the
/// spectral norm of `grad d` and keeps `det(I + grad d) > 0`.
fn random_modes(amplitude: f64, seed: u64) -> Vec<Mode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes: Vec<Mode> = (0..RANDOM_MODES)
        .map(|_| {
            let kappa = loop {
                let k = [0, 1, 2].map(|_| rng.gen_range(-2i32..=2) as f64);
                if k != [0.0; 3] {
                    break k;
                }
            };
            Mode {
                b: [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0)),
                kappa,
                phase: rng.gen_range(0.0..TAU),
            }
        })
        .collect();
    let total: f64 = modes.iter().map(|m| TAU * dot(m.b, m.b).sqrt() * dot(m.kappa, m.kappa).sqrt()).sum();
    let s = if total > 0.0 { amplitude / total } else { 0.0 };
    for m in &mut modes {
        m.b = m.b.map(|v| v * s);
    }
    modes
}

/// Samples of a synthetic field on a cloud.
#[derive(Debug, Clone)]
pub struct GeneratedField {
    pub displacement: Vec<[f64; 3]>,
    pub tensors: TensorField,
    pub truth: SyntheticField,
}

/// Samples `kind` on `ps`. Every sample must have `det F > 0`, except for
/// the half-turn blend whose samples are rotations by construction.
pub fn generate_field(kind: &FieldKind, ps: &Arc<PointSet>, seed: u64) -> Result<GeneratedField> {
    let truth = SyntheticField::new(*kind, seed)?;
    let displacement: Vec<[f64; 3]> = ps.iter().map(|p| truth.displacement(p)).collect();
    let values: Vec<Tensor3> = ps.iter().map(|p| truth.gradient(p)).collect();
    if !matches!(kind, FieldKind::Rotblend { .. }) {
        for (index, t) in values.iter().enumerate() {
            let det = t.det();
            if !(det > 0.0) {
                return Err(Error::NonPositiveDeterminant { index, det });
            }
        }
    }
    Ok(GeneratedField {
        displacement,
        tensors: TensorField::new(Arc::clone(ps), values)?,
        truth,
    })
}
