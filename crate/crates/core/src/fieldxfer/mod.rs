//! Transfer of scalar, vector and deformation-gradient fields from a source
//! cloud to a destination cloud through one reusable operator.

mod operator;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{PointSet, RadiusConfig};
use crate::sparse::SolveStats;
use crate::tensor::Tensor3;

pub use operator::{build_operator, OperatorConfig, ReferenceFrames, TransferOperator};

/// Source quaternions with scalar part below this are counted as close to a
/// half turn, where the hemisphere convention is discontinuous.
pub const HALF_TURN_WARNING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    /// Interpolate the displacement, then differentiate the interpolant.
    #[serde(rename = "rbf-d")]
    RbfDGrad,
    /// Interpolate the nine tensor components independently.
    #[serde(rename = "rbf-f-e")]
    RbfFE,
    /// Interpolate aligned singular factors as quaternions and log-singular
    /// values.
    #[serde(rename = "rbf-f-svd")]
    RbfFSvd,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::RbfDGrad, MethodKind::RbfFE, MethodKind::RbfFSvd];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::RbfDGrad => "rbf-d",
            MethodKind::RbfFE => "rbf-f-e",
            MethodKind::RbfFSvd => "rbf-f-svd",
        }
    }

    pub fn default_radius(self) -> RadiusConfig {
        match self {
            MethodKind::RbfDGrad => RadiusConfig::DISPLACEMENT,
            MethodKind::RbfFE | MethodKind::RbfFSvd => RadiusConfig::DEFORMATION_GRADIENT,
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?} (expected rbf-d, rbf-f-e or rbf-f-svd)")))
    }
}

/// Tensor samples attached one-to-one to the points of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    points: Arc<PointSet>,
    values: Vec<Tensor3>,
}

impl TensorField {
    pub fn new(points: Arc<PointSet>, values: Vec<Tensor3>) -> Result<Self> {
        if values.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|t| !t.is_finite()) {
            return Err(Error::Format(format!("tensor {index} has a non-finite component")));
        }
        Ok(Self { points, values })
    }

    pub fn points(&self) -> &Arc<PointSet> {
        &self.points
    }

    pub fn values(&self) -> &[Tensor3] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dets(&self) -> Vec<f64> {
        self.values.iter().map(Tensor3::det).collect()
    }

    pub fn into_values(self) -> Vec<Tensor3> {
        self.values
    }
}

/// Values at the destination plus the GMRES statistics of every
/// interpolation solve that produced them.
#[derive(Debug, Clone)]
pub struct Transfer<T> {
    pub values: Vec<T>,
    pub stats: Vec<SolveStats>,
}

#[derive(Debug, Clone)]
pub struct TensorTransfer {
    pub field: TensorField,
    pub stats: Vec<SolveStats>,
}

#[derive(Debug, Clone)]
pub struct SvdTransfer {
    pub field: TensorField,
    /// Interpolated `ln sigma` at every destination; `det F` equals
    /// `exp` of their sum.
    pub log_sigma: Vec<[f64; 3]>,
    pub stats: Vec<SolveStats>,
    /// Source points whose left or right rotation is within
    /// [`HALF_TURN_WARNING`] of a half turn.
    pub near_half_turn: usize,
}
