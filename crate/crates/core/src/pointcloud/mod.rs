//! Point clouds, neighbour search, adaptive support radii and quadrature
//! point generation on box grids.

mod kdtree;

use std::collections::HashMap;
use std::ops::Index;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kdtree::NeighborIndex;
pub(crate) use kdtree::dist2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        dist2(&self.to_array(), &other.to_array()).sqrt()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::from_array(a)
    }
}

/// An ordered, non-empty list of finite points.
///
/// Source clouds are built with [`PointSet::new_source`], which additionally
/// rejects coincident points; destination clouds may contain duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point3>,
}

impl PointSet {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint { index });
        }
        Ok(Self { points })
    }

    pub fn new_source(points: Vec<Point3>) -> Result<Self> {
        let ps = Self::new(points)?;
        ps.check_distinct()?;
        Ok(ps)
    }

    /// Fails with the first pair of coincident points, if any.
    pub fn check_distinct(&self) -> Result<()> {
        // -0.0 and 0.0 are the same coordinate
        let key = |p: &Point3| p.to_array().map(|c| (c + 0.0).to_bits());
        let mut seen: HashMap<[u64; 3], usize> = HashMap::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            if let Some(&first) = seen.get(&key(p)) {
                return Err(Error::DuplicatePoint { first, second: i });
            }
            seen.insert(key(p), i);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn build_index(&self) -> Result<NeighborIndex> {
        NeighborIndex::build(self)
    }
}

impl Index<usize> for PointSet {
    type Output = Point3;

    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

/// Parameters of the adaptive support radius `r_j = alpha * rbar_j`, where
/// `rbar_j` is the smallest radius whose closed ball around point `j`
/// contains at least `m` other points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusConfig {
    pub m: usize,
    pub alpha: f64,
}

impl RadiusConfig {
    /// Scalar data on degrees of freedom (the calcium transfer setting).
    pub const SCALAR: RadiusConfig = RadiusConfig { m: 1, alpha: 2.5 };
    /// Displacement transfer.
    pub const DISPLACEMENT: RadiusConfig = RadiusConfig { m: 5, alpha: 3.0 };
    /// Deformation gradient, both componentwise and SVD-based.
    pub const DEFORMATION_GRADIENT: RadiusConfig = RadiusConfig { m: 2, alpha: 2.0 };

    pub fn new(m: usize, alpha: f64) -> Result<Self> {
        let cfg = Self { m, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "alpha must be a finite value > 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Per-point support radii. Requires at least `m + 1` points.
pub fn adaptive_radii(ps: &PointSet, cfg: RadiusConfig) -> Result<Vec<f64>> {
    adaptive_radii_with(ps, &ps.build_index()?, cfg)
}

/// [`adaptive_radii`] reusing an index already built over `ps`.
pub fn adaptive_radii_with(
    ps: &PointSet,
    index: &NeighborIndex,
    cfg: RadiusConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if ps.len() < cfg.m + 1 {
        return Err(Error::TooFewPoints {
            needed: cfg.m + 1,
            got: ps.len(),
        });
    }
    if index.len() != ps.len() {
        return Err(Error::DimensionMismatch {
            expected: ps.len(),
            got: index.len(),
        });
    }
    ps.points()
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            // the point itself is the unique zero-distance neighbour
            let nn = index.nearest(*p, cfg.m + 1);
            let rbar = nn
                .iter()
                .filter(|&&(i, _)| i != j)
                .nth(cfg.m - 1)
                .map(|&(_, d)| d)
                .unwrap_or(0.0);
            if rbar <= 0.0 {
                return Err(Error::DuplicatePoint {
                    first: j.min(nn[0].0),
                    second: j.max(nn[0].0),
                });
            }
            Ok(cfg.alpha * rbar)
        })
        .collect()
}

/// An axis-aligned box split into `nx * ny * nz` equal cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub cells: [usize; 3],
}

impl StructuredGrid {
    pub fn unit_cube(n: usize) -> Self {
        Self {
            min: [0.0; 3],
            max: [1.0; 3],
            cells: [n; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.max[a] > self.min[a]) || !self.min[a].is_finite() || !self.max[a].is_finite()
            {
                return Err(Error::InvalidConfig(format!(
                    "grid extent along axis {a} must be positive and finite"
                )));
            }
            if self.cells[a] == 0 {
                return Err(Error::InvalidConfig(format!(
                    "grid needs at least one cell along axis {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn cell_size(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.max[a] - self.min[a]) / self.cells[a] as f64)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    /// Lower and upper corners of the cell with integer coordinates `c`.
    pub fn cell_bounds(&self, c: [usize; 3]) -> ([f64; 3], [f64; 3]) {
        let h = self.cell_size();
        let lo: [f64; 3] = std::array::from_fn(|a| self.min[a] + c[a] as f64 * h[a]);
        let hi: [f64; 3] = std::array::from_fn(|a| {
            if c[a] + 1 == self.cells[a] {
                self.max[a]
            } else {
                self.min[a] + (c[a] + 1) as f64 * h[a]
            }
        });
        (lo, hi)
    }
}

/// Gauss-Legendre abscissae on [-1, 1].
fn gauss_legendre_nodes(q: usize) -> Result<Vec<f64>> {
    match q {
        1 => Ok(vec![0.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            Ok(vec![-a, a])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            Ok(vec![-a, 0.0, a])
        }
        _ => Err(Error::UnsupportedQuadrature(q)),
    }
}

/// Tensor-product Gauss points of every cell. Cells are enumerated with x
/// fastest, and within a cell the nodes are enumerated with x fastest.
pub fn gauss_points(grid: &StructuredGrid, q: usize) -> Result<PointSet> {
    grid.validate()?;
    let nodes = gauss_legendre_nodes(q)?;
    let [nx, ny, nz] = grid.cells;
    let mut pts = Vec::with_capacity(grid.cell_count() * q * q * q);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let (lo, hi) = grid.cell_bounds([i, j, k]);
                let map = |a: usize, xi: f64| lo[a] + 0.5 * (1.0 + xi) * (hi[a] - lo[a]);
                for &zc in &nodes {
                    for &yc in &nodes {
                        for &xc in &nodes {
                            pts.push(Point3::new(map(0, xc), map(1, yc), map(2, zc)));
                        }
                    }
                }
            }
        }
    }
    PointSet::new(pts)
}
