//! CSV readers and writers for point clouds and fields.
//!
//! Points use the header `x,y,z`; scalar fields `value`; displacements
//! `dx,dy,dz`; tensors `F11,...,F33` row-major.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointSet};
use crate::tensor::Tensor3;

pub const POINT_HEADER: [&str; 3] = ["x", "y", "z"];
pub const SCALAR_HEADER: [&str; 1] = ["value"];
pub const DISPLACEMENT_HEADER: [&str; 3] = ["dx", "dy", "dz"];
pub const TENSOR_HEADER: [&str; 9] = ["F11", "F12", "F13", "F21", "F22", "F23", "F31", "F32", "F33"];

/// A field file, its kind taken from the header.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Scalar(Vec<f64>),
    Displacement(Vec<[f64; 3]>),
    Tensor(Vec<Tensor3>),
}

impl FieldData {
    pub fn len(&self) -> usize {
        match self {
            FieldData::Scalar(v) => v.len(),
            FieldData::Displacement(v) => v.len(),
            FieldData::Tensor(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read_rows<R: Read, const N: usize>(reader: R, header: &[&str; N]) -> Result<Vec<[f64; N]>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if got != header.as_slice() {
        return Err(Error::Format(format!("expected header {}, found {}", header.join(","), got.join(","))));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != N {
            return Err(Error::Format(format!("row {}: expected {N} columns, found {}", line + 1, rec.len())));
        }
        let mut row = [0.0; N];
        for (slot, field) in row.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {}: cannot parse {field:?} as a number", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("row {}: non-finite value {field:?}", line + 1)));
            }
            *slot = v;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn write_rows<W: Write, const N: usize>(writer: W, header: &[&str; N], rows: impl Iterator<Item = [f64; N]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_from<R: Read>(reader: R) -> Result<PointSet> {
    let rows = read_rows(reader, &POINT_HEADER)?;
    PointSet::new(rows.into_iter().map(Point3::from_array).collect())
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointSet> {
    read_points_from(File::open(path)?)
}

pub fn write_points(path: impl AsRef<Path>, ps: &PointSet) -> Result<()> {
    write_rows(File::create(path)?, &POINT_HEADER, ps.iter().map(Point3::to_array))
}

/// Reads a scalar, displacement or tensor file, detected from its header.
pub fn read_field_from<R: Read>(mut reader: R) -> Result<FieldData> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let first = text.lines().next().unwrap_or("");
    let cols: Vec<&str> = first.split(',').map(str::trim).collect();
    if cols == SCALAR_HEADER {
        let rows = read_rows(text.as_bytes(), &SCALAR_HEADER)?;
        Ok(FieldData::Scalar(rows.into_iter().map(|r| r[0]).collect()))
    } else if cols == DISPLACEMENT_HEADER {
        Ok(FieldData::Displacement(read_rows(text.as_bytes(), &DISPLACEMENT_HEADER)?))
    } else if cols == TENSOR_HEADER {
        let rows = read_rows(text.as_bytes(), &TENSOR_HEADER)?;
        Ok(FieldData::Tensor(rows.into_iter().map(Tensor3::from_row_major).collect()))
    } else {
        Err(Error::Format(format!(
            "unrecognised field header {first:?} (expected value, dx,dy,dz or F11,...,F33)"
        )))
    }
}

pub fn read_field(path: impl AsRef<Path>) -> Result<FieldData> {
    read_field_from(File::open(path)?)
}

pub fn write_field(path: impl AsRef<Path>, field: &FieldData) -> Result<()> {
    let f = File::create(path)?;
    match field {
        FieldData::Scalar(v) => write_rows(f, &SCALAR_HEADER, v.iter().map(|x| [*x])),
        FieldData::Displacement(v) => write_rows(f, &DISPLACEMENT_HEADER, v.iter().copied()),
        FieldData::Tensor(v) => write_rows(f, &TENSOR_HEADER, v.iter().map(|t| t.m)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let ps = PointSet::new(vec![Point3::new(0.1, -2.5e-17, 3.0), Point3::new(1.0 / 3.0, 7.0, -0.0)]).unwrap();
        write_points(&path, &ps).unwrap();
        assert_eq!(read_points(&path).unwrap(), ps);
    }

    #[test]
    fn point_header_required() {
        assert!(read_points_from("0,0,0\n1,1,1\n".as_bytes()).is_err());
        assert!(read_points_from("x,y\n0,0\n".as_bytes()).is_err());
        let ps = read_points_from("x, y, z\n0, 1, 2\n".as_bytes()).unwrap();
        assert_eq!(ps[0], Point3::new(0.0, 1.0, 2.0));
    }

    #[test]
    fn rejects_non_finite_and_garbage() {
        for bad in ["x,y,z\nNaN,0,0\n", "x,y,z\ninf,0,0\n", "x,y,z\n0,abc,0\n", "x,y,z\n0,0\n"] {
            assert!(read_points_from(bad.as_bytes()).is_err(), "{bad}");
        }
        assert!(matches!(read_points_from("x,y,z\n".as_bytes()), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn field_kinds_detected() {
        assert_eq!(read_field_from("value\n1.5\n2\n".as_bytes()).unwrap(), FieldData::Scalar(vec![1.5, 2.0]));
        assert_eq!(
            read_field_from("dx,dy,dz\n1,2,3\n".as_bytes()).unwrap(),
            FieldData::Displacement(vec![[1.0, 2.0, 3.0]])
        );
        let t = read_field_from("F11,F12,F13,F21,F22,F23,F31,F32,F33\n1,0,0,0,1,0,0,0,1\n".as_bytes()).unwrap();
        assert_eq!(t, FieldData::Tensor(vec![Tensor3::IDENTITY]));
        assert!(read_field_from("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn fields_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        for f in [
            FieldData::Scalar(vec![0.1, 0.2]),
            FieldData::Displacement(vec![[0.1, 1e-300, -4.0]]),
            FieldData::Tensor(vec![Tensor3::from_fn(|k, l| (k * 3 + l) as f64 / 7.0)]),
        ] {
            write_field(&path, &f).unwrap();
            assert_eq!(read_field(&path).unwrap(), f);
        }
    }
}
