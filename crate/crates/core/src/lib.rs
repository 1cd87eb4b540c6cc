//! Rescaled localized radial basis function transfer of scalar, vector and
//! deformation-gradient fields between unrelated point clouds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fieldxfer;
pub mod harness;
pub mod io;
pub mod pointcloud;
pub mod rbf;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
