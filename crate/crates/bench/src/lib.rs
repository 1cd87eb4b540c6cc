//! Benchmark fixtures.

use std::sync::Arc;

use rbfxfer::fieldxfer::TensorField;
use rbfxfer::harness::{generate_field, FieldKind};
use rbfxfer::pointcloud::{gauss_points, PointSet, StructuredGrid};

pub fn cloud(cells: usize, q: usize) -> Arc<PointSet> {
    Arc::new(gauss_points(&StructuredGrid::unit_cube(cells), q).expect("valid grid"))
}

pub fn twist_field(points: &Arc<PointSet>) -> TensorField {
    let kind = FieldKind::Twist {
        rate: 1.0,
        center: [0.5, 0.5],
    };
    generate_field(&kind, points, 0).expect("twist has positive determinants").tensors
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        let p = cloud(3, 2);
        assert_eq!(p.len(), 216);
        assert_eq!(twist_field(&p).len(), 216);
    }
}
