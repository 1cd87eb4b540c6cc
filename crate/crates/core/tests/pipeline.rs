use std::fs;
use std::sync::Arc;

use proptest::prelude::*;
use rbfxfer::fieldxfer::MethodKind;
use rbfxfer::harness::{emit_report, run_experiment, CloudSpec, ExperimentConfig, FieldKind, TransferReport};
use rbfxfer::io::{read_field, read_points, write_field, write_points, FieldData};
use rbfxfer::pointcloud::{Point3, PointSet, StructuredGrid};
use rbfxfer::tensor::Tensor3;

fn config(field: FieldKind) -> ExperimentConfig {
    ExperimentConfig {
        source: CloudSpec {
            grid: StructuredGrid::unit_cube(5),
            q: 1,
        },
        destination: CloudSpec {
            grid: StructuredGrid::unit_cube(4),
            q: 2,
        },
        field,
        seed: 11,
        ..Default::default()
    }
}

fn csv_total(text: &str) -> usize {
    text.lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum()
}

#[test]
fn report_round_trips_through_json() {
    let report = run_experiment(&config(FieldKind::Shear { k: 0.4 })).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = emit_report(&report, dir.path()).unwrap();
    let back: TransferReport = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.methods.len(), 3);
    let names: Vec<&str> = back.methods.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["rbf-d", "rbf-f-e", "rbf-f-svd"]);
}

#[test]
fn histogram_files_count_every_point() {
    let report = run_experiment(&config(FieldKind::Stretch { lambda: 1.4 })).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let src = fs::read_to_string(dir.path().join("hist_source.csv")).unwrap();
    assert_eq!(src.lines().count(), 61);
    assert_eq!(csv_total(&src), report.source_points);
    for m in &report.methods {
        let file = m.histogram_file.as_ref().unwrap();
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(csv_total(&text), report.destination_points, "{file}");
        assert!(text.starts_with("bin_lo,bin_hi,count\n"));
    }
}

#[test]
fn errors_shrink_with_the_source_spacing() {
    let mut coarse = config(FieldKind::Stretch { lambda: 1.2 });
    coarse.methods = vec![MethodKind::RbfFSvd];
    let mut fine = coarse.clone();
    fine.source.grid = StructuredGrid::unit_cube(10);
    let e = |c: &ExperimentConfig| run_experiment(c).unwrap().methods[0].err_max.unwrap();
    assert!(e(&fine) < e(&coarse));
}

#[test]
fn fields_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ps = PointSet::new(vec![Point3::new(0.1, 0.2, 0.3), Point3::new(1.0 / 3.0, -2.5e-17, 7.0)]).unwrap();
    write_points(dir.path().join("p.csv"), &ps).unwrap();
    assert_eq!(read_points(dir.path().join("p.csv")).unwrap(), ps);
    let fields = [
        FieldData::Scalar(vec![1.0 / 7.0, -0.0]),
        FieldData::Displacement(vec![[0.1, 0.2, 0.3], [f64::MIN_POSITIVE, 1e300, -1e-300]]),
        FieldData::Tensor(vec![Tensor3::IDENTITY, Tensor3::from_fn(|i, j| (i * 3 + j) as f64 / 9.0)]),
    ];
    for f in &fields {
        let path = dir.path().join("f.csv");
        write_field(&path, f).unwrap();
        assert_eq!(&read_field(&path).unwrap(), f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tensor_csv_is_bitwise(values in prop::collection::vec(prop::array::uniform9(-1e6f64..1e6), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let tensors: Vec<Tensor3> = values.into_iter().map(Tensor3::from_row_major).collect();
        let path = dir.path().join("t.csv");
        write_field(&path, &FieldData::Tensor(tensors.clone())).unwrap();
        match read_field(&path).unwrap() {
            FieldData::Tensor(back) => {
                for (a, b) in back.iter().zip(&tensors) {
                    prop_assert!(a.m.iter().zip(&b.m).all(|(x, y)| x.to_bits() == y.to_bits()));
                }
            }
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }
}

#[test]
fn points_shared_between_operator_and_field() {
    let src = Arc::new(PointSet::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap());
    let f = rbfxfer::fieldxfer::TensorField::new(Arc::clone(&src), vec![Tensor3::IDENTITY]).unwrap();
    assert!(Arc::ptr_eq(f.points(), &src));
    assert!(rbfxfer::fieldxfer::TensorField::new(src, vec![]).is_err());
}
