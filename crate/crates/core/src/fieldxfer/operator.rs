use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SvdTransfer, TensorField, TensorTransfer, Transfer, HALF_TURN_WARNING};
use crate::error::{Error, Result};
use crate::pointcloud::{adaptive_radii_with, NeighborIndex, PointSet, RadiusConfig};
use crate::rbf::{
    assemble_eval_gradient, assemble_eval_matrix_with, assemble_interp_matrix_with, build_cardinal_preconditioner,
    check_denominators, CardinalConfig, InterpolationSystem, Interpolant, RescaledInterpolant,
};
use crate::sparse::{CsrMatrix, SolveStats, SolverConfig};
use crate::tensor::{align_svd, quaternion_to_rotation, svd3, Quaternion, ReferenceTriplet, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub radius: RadiusConfig,
    pub solver: SolverConfig,
    pub cardinal: CardinalConfig,
    /// Use the approximate cardinal function preconditioner.
    pub precondition: bool,
}

impl OperatorConfig {
    pub fn new(radius: RadiusConfig) -> Self {
        Self {
            radius,
            solver: SolverConfig::OUTER,
            cardinal: CardinalConfig::default(),
            precondition: true,
        }
    }
}

/// Reference triplets for singular-vector alignment.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceFrames {
    Uniform(ReferenceTriplet),
    /// One triplet per source point.
    PerPoint(Arc<[ReferenceTriplet]>),
}

impl ReferenceFrames {
    fn at(&self, i: usize) -> &ReferenceTriplet {
        match self {
            ReferenceFrames::Uniform(t) => t,
            ReferenceFrames::PerPoint(ts) => &ts[i],
        }
    }
}

#[derive(Debug)]
struct GradientData {
    phi_grad: [CsrMatrix; 3],
    denom_grad: [Vec<f64>; 3],
}

/// Source-to-destination transfer operator. Built once; every transfer
/// reuses its matrices, preconditioner and the interpolant of the constant 1.
#[derive(Debug)]
pub struct TransferOperator {
    dst: Arc<PointSet>,
    dst_index: NeighborIndex,
    system: InterpolationSystem,
    phi_eval: CsrMatrix,
    ones: Arc<Interpolant>,
    denom: Vec<f64>,
    frames: ReferenceFrames,
    gradient: OnceLock<GradientData>,
    assemblies: AtomicUsize,
    preconditioner_dropped: bool,
}

pub fn build_operator(
    src: Arc<PointSet>,
    dst: Arc<PointSet>,
    radius: RadiusConfig,
    solver: SolverConfig,
    reference: ReferenceTriplet,
) -> Result<TransferOperator> {
    let cfg = OperatorConfig {
        solver,
        ..OperatorConfig::new(radius)
    };
    TransferOperator::build(src, dst, &cfg, ReferenceFrames::Uniform(reference))
}

impl TransferOperator {
    pub fn build(src: Arc<PointSet>, dst: Arc<PointSet>, cfg: &OperatorConfig, frames: ReferenceFrames) -> Result<Self> {
        cfg.radius.validate()?;
        cfg.solver.validate()?;
        src.check_distinct()?;
        if let ReferenceFrames::PerPoint(ts) = &frames {
            if ts.len() != src.len() {
                return Err(Error::DimensionMismatch {
                    expected: src.len(),
                    got: ts.len(),
                });
            }
        }
        let assemblies = AtomicUsize::new(0);
        let src_index = src.build_index()?;
        let radii: Arc<[f64]> = adaptive_radii_with(&src, &src_index, cfg.radius)?.into();

        let phi_int = assemble_interp_matrix_with(&src, &src_index, &radii)?;
        assemblies.fetch_add(1, Ordering::Relaxed);
        let precond = if cfg.precondition {
            let p = build_cardinal_preconditioner(&phi_int, &src, &radii, &cfg.cardinal)?;
            assemblies.fetch_add(1, Ordering::Relaxed);
            Some(p)
        } else {
            None
        };
        let dst_index = dst.build_index()?;
        let phi_eval = assemble_eval_matrix_with(&dst, &dst_index, &src, &radii)?;
        assemblies.fetch_add(1, Ordering::Relaxed);

        let mut system = InterpolationSystem::new(src, radii, phi_int, precond, cfg.solver)?;
        let unit = vec![1.0; system.source().len()];
        let mut preconditioner_dropped = false;
        let ones = match system.build_interpolant(&unit) {
            Err(Error::NotConverged { .. }) if system.preconditioner().is_some() => {
                system = system.without_preconditioner();
                preconditioner_dropped = true;
                system.build_interpolant(&unit)?
            }
            r => r?,
        };
        let ones = Arc::new(ones);
        let denom = ones.evaluate(&phi_eval)?;
        check_denominators(&denom)?;
        Ok(Self {
            dst,
            dst_index,
            system,
            phi_eval,
            ones,
            denom,
            frames,
            gradient: OnceLock::new(),
            assemblies,
            preconditioner_dropped,
        })
    }

    pub fn source(&self) -> &Arc<PointSet> {
        self.system.source()
    }

    pub fn destination(&self) -> &Arc<PointSet> {
        &self.dst
    }

    pub fn radii(&self) -> &[f64] {
        self.system.radii()
    }

    pub fn phi_int(&self) -> &CsrMatrix {
        self.system.phi_int()
    }

    pub fn phi_eval(&self) -> &CsrMatrix {
        &self.phi_eval
    }

    /// True when the preconditioned solve of the constant 1 did not converge
    /// and every solve runs unpreconditioned instead.
    pub fn preconditioner_dropped(&self) -> bool {
        self.preconditioner_dropped
    }

    pub fn preconditioner(&self) -> Option<&CsrMatrix> {
        self.system.preconditioner()
    }

    pub fn system(&self) -> &InterpolationSystem {
        &self.system
    }

    /// The interpolant of the constant 1.
    pub fn ones(&self) -> &Arc<Interpolant> {
        &self.ones
    }

    /// `Phi_eval gamma_g` at every destination.
    pub fn denominators(&self) -> &[f64] {
        &self.denom
    }

    pub fn build_stats(&self) -> &SolveStats {
        self.ones.stats()
    }

    pub fn frames(&self) -> &ReferenceFrames {
        &self.frames
    }

    /// Number of sparse matrices assembled so far.
    pub fn assembly_count(&self) -> usize {
        self.assemblies.load(Ordering::Relaxed)
    }

    pub fn scalar_interpolant(&self, values: &[f64]) -> Result<RescaledInterpolant> {
        Ok(RescaledInterpolant::new(
            self.system.build_interpolant(values)?,
            Arc::clone(&self.ones),
        ))
    }

    fn check_source_len(&self, got: usize) -> Result<()> {
        if got != self.source().len() {
            return Err(Error::DimensionMismatch {
                expected: self.source().len(),
                got,
            });
        }
        Ok(())
    }

    /// Solves and evaluates one rescaled interpolant per column, in parallel.
    fn interpolate_columns(&self, columns: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<SolveStats>)> {
        let out = columns
            .par_iter()
            .map(|col| {
                let f = self.system.build_interpolant(col)?;
                let mut num = f.evaluate(&self.phi_eval)?;
                for (n, d) in num.iter_mut().zip(&self.denom) {
                    *n /= d;
                }
                Ok((num, *f.stats()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(out.into_iter().unzip())
    }

    pub fn transfer_scalar(&self, values: &[f64]) -> Result<Transfer<f64>> {
        self.check_source_len(values.len())?;
        let (mut v, stats) = self.interpolate_columns(std::slice::from_ref(&values.to_vec()))?;
        Ok(Transfer {
            values: v.pop().unwrap_or_default(),
            stats,
        })
    }

    pub fn transfer_vector(&self, values: &[[f64; 3]]) -> Result<Transfer<[f64; 3]>> {
        self.check_source_len(values.len())?;
        let columns: Vec<Vec<f64>> = (0..3).map(|c| values.iter().map(|v| v[c]).collect()).collect();
        let (out, stats) = self.interpolate_columns(&columns)?;
        Ok(Transfer {
            values: (0..self.dst.len()).map(|i| [out[0][i], out[1][i], out[2][i]]).collect(),
            stats,
        })
    }

    /// Componentwise (Euclidean) tensor transfer.
    pub fn transfer_tensor_euclidean(&self, field: &TensorField) -> Result<TensorTransfer> {
        self.check_source_len(field.len())?;
        let columns: Vec<Vec<f64>> = (0..9).map(|c| field.values().iter().map(|t| t.m[c]).collect()).collect();
        let (out, stats) = self.interpolate_columns(&columns)?;
        let values = (0..self.dst.len())
            .map(|i| Tensor3::from_row_major(std::array::from_fn(|c| out[c][i])))
            .collect();
        Ok(TensorTransfer {
            field: TensorField::new(Arc::clone(&self.dst), values)?,
            stats,
        })
    }

    /// Positivity-preserving transfer through aligned singular factors:
    /// quaternions of `U` and `V` and `ln sigma` are interpolated and
    /// recombined as `U diag(exp(ln sigma)) V^T`.
    pub fn transfer_tensor_svd(&self, field: &TensorField) -> Result<SvdTransfer> {
        self.check_source_len(field.len())?;
        for (index, t) in field.values().iter().enumerate() {
            let det = t.det();
            if !(det > 0.0) {
                return Err(Error::NonPositiveDeterminant { index, det });
            }
        }
        let aligned = field
            .values()
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                align_svd(&svd3(t), self.frames.at(i)).map_err(|e| Error::AtSource {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let near_half_turn = aligned
            .iter()
            .filter(|a| a.q_u.a < HALF_TURN_WARNING || a.q_v.a < HALF_TURN_WARNING)
            .count();

        let mut columns: Vec<Vec<f64>> = (0..11).map(|_| Vec::with_capacity(aligned.len())).collect();
        for a in &aligned {
            let row = a.q_u.to_array().into_iter().chain(a.q_v.to_array()).chain(a.log_sigma());
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        let (out, stats) = self.interpolate_columns(&columns)?;

        let (values, log_sigma): (Vec<Tensor3>, Vec<[f64; 3]>) = (0..self.dst.len())
            .into_par_iter()
            .map(|i| {
                let at = |e: Error| Error::AtDestination {
                    index: i,
                    source: Box::new(e),
                };
                let u = quaternion_to_rotation(&Quaternion::new(out[0][i], out[1][i], out[2][i], out[3][i])).map_err(at)?;
                let v = quaternion_to_rotation(&Quaternion::new(out[4][i], out[5][i], out[6][i], out[7][i])).map_err(at)?;
                let ls = [out[8][i], out[9][i], out[10][i]];
                let sigma = ls.map(f64::exp);
                let f = Tensor3::from_fn(|k, l| (0..3).map(|p| u.get(k, p) * sigma[p] * v.get(l, p)).sum());
                Ok((f, ls))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(SvdTransfer {
            field: TensorField::new(Arc::clone(&self.dst), values)?,
            log_sigma,
            stats,
            near_half_turn,
        })
    }

    fn gradient_data(&self) -> Result<&GradientData> {
        if let Some(g) = self.gradient.get() {
            return Ok(g);
        }
        let phi_grad = assemble_eval_gradient(&self.dst, &self.dst_index, self.source(), self.radii())?;
        let denom_grad = [
            phi_grad[0].spmv(self.ones.coefficients())?,
            phi_grad[1].spmv(self.ones.coefficients())?,
            phi_grad[2].spmv(self.ones.coefficients())?,
        ];
        let data = GradientData { phi_grad, denom_grad };
        if self.gradient.set(data).is_ok() {
            self.assemblies.fetch_add(1, Ordering::Relaxed);
        }
        Ok(self.gradient.get().expect("gradient data initialised"))
    }

    /// Gradient of the rescaled interpolant of `values` at every destination,
    /// by the quotient rule on the analytic kernel gradient.
    pub fn transfer_scalar_gradient(&self, values: &[f64]) -> Result<Transfer<[f64; 3]>> {
        self.check_source_len(values.len())?;
        let g = self.gradient_data()?;
        let f = self.system.build_interpolant(values)?;
        let num = f.evaluate(&self.phi_eval)?;
        let dnum = [
            g.phi_grad[0].spmv(f.coefficients())?,
            g.phi_grad[1].spmv(f.coefficients())?,
            g.phi_grad[2].spmv(f.coefficients())?,
        ];
        let values = (0..self.dst.len())
            .map(|i| {
                let d = self.denom[i];
                std::array::from_fn(|k| (dnum[k][i] * d - num[i] * g.denom_grad[k][i]) / (d * d))
            })
            .collect();
        Ok(Transfer {
            values,
            stats: vec![*f.stats()],
        })
    }

    /// `F = I + grad d` with `d` the rescaled interpolant of the source
    /// displacements.
    pub fn transfer_displacement_gradient(&self, displacement: &[[f64; 3]]) -> Result<TensorTransfer> {
        self.check_source_len(displacement.len())?;
        let grads = (0..3)
            .into_par_iter()
            .map(|c| {
                let comp: Vec<f64> = displacement.iter().map(|d| d[c]).collect();
                self.transfer_scalar_gradient(&comp)
            })
            .collect::<Result<Vec<_>>>()?;
        let values = (0..self.dst.len())
            .map(|i| Tensor3::from_fn(|c, k| if c == k { 1.0 } else { 0.0 } + grads[c].values[i][k]))
            .collect();
        Ok(TensorTransfer {
            field: TensorField::new(Arc::clone(&self.dst), values)?,
            stats: grads.into_iter().flat_map(|g| g.stats).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{gauss_points, Point3, StructuredGrid};
    use crate::tensor::det3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Arc<PointSet> {
        Arc::new(PointSet::new((0..n).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect()).unwrap())
    }

    fn op(src: Arc<PointSet>, dst: Arc<PointSet>, radius: RadiusConfig) -> TransferOperator {
        build_operator(src, dst, radius, SolverConfig::OUTER, ReferenceTriplet::CANONICAL).unwrap()
    }

    #[test]
    fn same_cloud_transfer_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = random_cloud(&mut rng, 300);
        let o = op(Arc::clone(&src), Arc::clone(&src), RadiusConfig::SCALAR);
        let data: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = o.transfer_scalar(&data).unwrap();
        for (a, b) in out.values.iter().zip(&data) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn stalled_preconditioner_is_dropped() {
        let src = Arc::new(gauss_points(&StructuredGrid::unit_cube(16), 1).unwrap());
        let o = op(Arc::clone(&src), src, RadiusConfig::DISPLACEMENT);
        assert!(o.preconditioner_dropped());
        assert!(o.preconditioner().is_none());
        assert!(o.build_stats().converged);
        let out = o.transfer_scalar(&vec![3.0; o.source().len()]).unwrap();
        assert!(out.values.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn working_preconditioner_is_kept() {
        let src = Arc::new(gauss_points(&StructuredGrid::unit_cube(10), 1).unwrap());
        let o = op(Arc::clone(&src), src, RadiusConfig::DEFORMATION_GRADIENT);
        assert!(!o.preconditioner_dropped());
        assert!(o.preconditioner().is_some());
    }

    #[test]
    fn coarse_to_fine_covers_every_destination() {
        let src = Arc::new(gauss_points(&StructuredGrid::unit_cube(10), 1).unwrap());
        let dst = Arc::new(gauss_points(&StructuredGrid::unit_cube(20), 1).unwrap());
        let o = op(src, dst, RadiusConfig::DEFORMATION_GRADIENT);
        assert!(o.denominators().iter().all(|d| *d >= crate::rbf::DENOMINATOR_FLOOR));
        assert_eq!(o.assembly_count(), 3);
    }

    #[test]
    fn uncovered_destination_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = random_cloud(&mut rng, 50);
        let mut far = src.points().to_vec();
        far.push(Point3::new(10.0, 10.0, 10.0));
        let err = build_operator(
            src,
            Arc::new(PointSet::new(far).unwrap()),
            RadiusConfig::SCALAR,
            SolverConfig::OUTER,
            ReferenceTriplet::CANONICAL,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Uncovered { index: 50, .. }));
    }

    #[test]
    fn sine_field_transfers_accurately() {
        let src = Arc::new(gauss_points(&StructuredGrid::unit_cube(12), 1).unwrap());
        let dst = Arc::new(gauss_points(&StructuredGrid::unit_cube(7), 2).unwrap());
        let o = op(Arc::clone(&src), Arc::clone(&dst), RadiusConfig::SCALAR);
        let data: Vec<f64> = src.iter().map(|p| p.x.sin()).collect();
        let out = o.transfer_scalar(&data).unwrap();
        let err = dst
            .iter()
            .zip(&out.values)
            .map(|(p, v)| (p.x.sin() - v).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.05, "max error {err}");
    }

    #[test]
    fn euclidean_equals_nine_scalar_transfers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_cloud(&mut rng, 200);
        let dst = random_cloud(&mut rng, 150);
        let o = op(Arc::clone(&src), dst, RadiusConfig::DEFORMATION_GRADIENT);
        let values: Vec<Tensor3> = (0..200).map(|_| Tensor3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
        let field = TensorField::new(src, values.clone()).unwrap();
        let e = o.transfer_tensor_euclidean(&field).unwrap();
        for c in 0..9 {
            let comp: Vec<f64> = values.iter().map(|t| t.m[c]).collect();
            let s = o.transfer_scalar(&comp).unwrap();
            for (t, v) in e.field.values().iter().zip(&s.values) {
                assert_eq!(t.m[c].to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn half_turn_pair_contrasts_methods() {
        let src = Arc::new(PointSet::new_source(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)]).unwrap());
        let dst = Arc::new(PointSet::new(vec![Point3::new(0.5, 0.0, 0.0)]).unwrap());
        let o = op(Arc::clone(&src), dst, RadiusConfig::new(1, 2.0).unwrap());
        let rz = Tensor3::diag([-1.0, -1.0, 1.0]);
        let field = TensorField::new(src, vec![Tensor3::IDENTITY, rz]).unwrap();

        // symmetric weights: the componentwise blend is diag(0, 0, 1)
        let e = o.transfer_tensor_euclidean(&field).unwrap();
        let t = e.field.values()[0];
        assert!((t - Tensor3::diag([0.0, 0.0, 1.0])).max_abs() < 1e-12);
        assert!(det3(&t).abs() < 1e-12);

        let s = o.transfer_tensor_svd(&field).unwrap();
        assert_eq!(s.log_sigma[0], [0.0, 0.0, 0.0]);
        assert!((det3(&s.field.values()[0]) - 1.0).abs() < 1e-15);
        assert_eq!(s.near_half_turn, 1);
    }

    #[test]
    fn svd_rejects_non_positive_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = random_cloud(&mut rng, 30);
        let o = op(Arc::clone(&src), Arc::clone(&src), RadiusConfig::DEFORMATION_GRADIENT);
        let mut values = vec![Tensor3::IDENTITY; 30];
        values[17] = Tensor3::diag([1.0, 1.0, -2.0]);
        let field = TensorField::new(src, values).unwrap();
        assert!(matches!(
            o.transfer_tensor_svd(&field),
            Err(Error::NonPositiveDeterminant { index: 17, .. })
        ));
        assert!(o.transfer_tensor_euclidean(&field).is_ok());
    }

    #[test]
    fn wrong_field_length_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = random_cloud(&mut rng, 20);
        let o = op(Arc::clone(&src), Arc::clone(&src), RadiusConfig::SCALAR);
        assert!(matches!(o.transfer_scalar(&[1.0; 19]), Err(Error::DimensionMismatch { .. })));
        assert!(o.transfer_displacement_gradient(&[[0.0; 3]; 21]).is_err());
    }

    #[test]
    fn gradient_matrices_assembled_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let src = random_cloud(&mut rng, 100);
        let dst = random_cloud(&mut rng, 80);
        let o = op(src, dst, RadiusConfig::DISPLACEMENT);
        assert_eq!(o.assembly_count(), 3);
        for _ in 0..5 {
            o.transfer_displacement_gradient(&vec![[0.1, 0.2, 0.3]; 100]).unwrap();
        }
        assert_eq!(o.assembly_count(), 4);
    }

    #[test]
    fn per_point_frames_length_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let src = random_cloud(&mut rng, 20);
        let frames = ReferenceFrames::PerPoint(vec![ReferenceTriplet::CANONICAL; 19].into());
        let cfg = OperatorConfig::new(RadiusConfig::SCALAR);
        assert!(TransferOperator::build(Arc::clone(&src), src, &cfg, frames).is_err());
    }
}
