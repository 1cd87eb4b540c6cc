//! Synthetic experiments comparing the transfer methods, with determinant
//! histograms, error norms, iteration counts and timings.

mod fields;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldxfer::{MethodKind, OperatorConfig, ReferenceFrames, TensorField, TransferOperator};
use crate::io::FieldData;
use crate::pointcloud::{gauss_points, PointSet, RadiusConfig, StructuredGrid};
use crate::rbf::CardinalConfig;
use crate::sparse::{SolveStats, SolverConfig};
use crate::tensor::{ReferenceTriplet, Tensor3};

pub use fields::{generate_field, FieldKind, GeneratedField, SyntheticField};
pub use report::{
    emit_report, DetStats, ErrorNorms, GmresIters, Histogram, MethodReport, ScalingSample, SourceStats, Timings,
    TransferReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudSpec {
    pub grid: StructuredGrid,
    pub q: usize,
}

impl CloudSpec {
    pub fn points(&self) -> Result<PointSet> {
        gauss_points(&self.grid, self.q)
    }
}

fn default_methods() -> Vec<MethodKind> {
    MethodKind::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

fn default_threads() -> usize {
    1
}

fn default_bins() -> usize {
    60
}

fn default_scaling_method() -> MethodKind {
    MethodKind::RbfFSvd
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: CloudSpec,
    pub destination: CloudSpec,
    pub field: FieldKind,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodKind>,
    /// Overrides of the per-method radius parameters.
    #[serde(default)]
    pub radius: BTreeMap<MethodKind, RadiusConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_true")]
    pub precondition: bool,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Thread counts for the scaling measurement; empty skips it.
    #[serde(default)]
    pub scaling_threads: Vec<usize>,
    #[serde(default = "default_scaling_method")]
    pub scaling_method: MethodKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: CloudSpec {
                grid: StructuredGrid::unit_cube(8),
                q: 1,
            },
            destination: CloudSpec {
                grid: StructuredGrid::unit_cube(16),
                q: 2,
            },
            field: FieldKind::Stretch { lambda: 1.2 },
            methods: default_methods(),
            radius: BTreeMap::new(),
            solver: SolverConfig::OUTER,
            precondition: true,
            threads: 1,
            seed: 0,
            output: None,
            bins: default_bins(),
            scaling_threads: Vec::new(),
            scaling_method: default_scaling_method(),
        }
    }
}

impl ExperimentConfig {
    pub fn radius_for(&self, method: MethodKind) -> RadiusConfig {
        self.radius.get(&method).copied().unwrap_or_else(|| method.default_radius())
    }

    pub fn operator_config(&self, method: MethodKind) -> OperatorConfig {
        OperatorConfig {
            radius: self.radius_for(method),
            solver: self.solver,
            cardinal: CardinalConfig::default(),
            precondition: self.precondition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.grid.validate()?;
        self.destination.grid.validate()?;
        for q in [self.source.q, self.destination.q] {
            if !(1..=3).contains(&q) {
                return Err(Error::UnsupportedQuadrature(q));
            }
        }
        self.field.validate()?;
        self.solver.validate()?;
        for r in self.radius.values() {
            r.validate()?;
        }
        if self.bins == 0 {
            return Err(Error::InvalidConfig("bins must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one method on one field.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: MethodKind,
    pub output: FieldData,
    pub build_stats: SolveStats,
    pub field_stats: Vec<SolveStats>,
    pub time_ms: Timings,
    pub near_half_turn: Option<usize>,
    /// False when the cardinal preconditioner was disabled or dropped.
    pub preconditioned: bool,
}

impl MethodRun {
    pub fn tensors(&self) -> Option<&[Tensor3]> {
        match &self.output {
            FieldData::Tensor(t) => Some(t),
            _ => None,
        }
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Builds an operator and transfers `input`. Displacements go through the
/// gradient method and tensors through the componentwise or SVD method;
/// scalars are transferred directly whatever the method.
pub fn run_transfer(
    src: &Arc<PointSet>,
    dst: &Arc<PointSet>,
    input: &FieldData,
    method: MethodKind,
    cfg: &OperatorConfig,
) -> Result<MethodRun> {
    match (input, method) {
        (FieldData::Scalar(_), _)
        | (FieldData::Displacement(_), MethodKind::RbfDGrad)
        | (FieldData::Tensor(_), MethodKind::RbfFE | MethodKind::RbfFSvd) => {}
        (FieldData::Displacement(_), _) => {
            return Err(Error::InvalidConfig(format!("method {method} needs a tensor field, got displacements")))
        }
        (FieldData::Tensor(_), _) => {
            return Err(Error::InvalidConfig(format!("method {method} needs a displacement field, got tensors")))
        }
    }
    let t0 = Instant::now();
    let op = TransferOperator::build(
        Arc::clone(src),
        Arc::clone(dst),
        cfg,
        ReferenceFrames::Uniform(ReferenceTriplet::CANONICAL),
    )?;
    let init = elapsed_ms(t0);

    let t1 = Instant::now();
    let mut near_half_turn = None;
    let (output, field_stats) = match input {
        FieldData::Scalar(v) => {
            let t = op.transfer_scalar(v)?;
            (FieldData::Scalar(t.values), t.stats)
        }
        FieldData::Displacement(d) => {
            let t = op.transfer_displacement_gradient(d)?;
            (FieldData::Tensor(t.field.into_values()), t.stats)
        }
        FieldData::Tensor(values) => {
            let field = TensorField::new(Arc::clone(src), values.clone())?;
            if method == MethodKind::RbfFSvd {
                let t = op.transfer_tensor_svd(&field)?;
                near_half_turn = Some(t.near_half_turn);
                (FieldData::Tensor(t.field.into_values()), t.stats)
            } else {
                let t = op.transfer_tensor_euclidean(&field)?;
                (FieldData::Tensor(t.field.into_values()), t.stats)
            }
        }
    };
    let evaluate = elapsed_ms(t1);
    Ok(MethodRun {
        method,
        output,
        build_stats: *op.build_stats(),
        field_stats,
        time_ms: Timings { init, evaluate },
        near_half_turn,
        preconditioned: op.preconditioner().is_some(),
    })
}

/// Max and RMS error per component and of the determinant.
pub fn error_norms(got: &[Tensor3], truth: &[Tensor3]) -> ErrorNorms {
    let n = got.len().max(1) as f64;
    let mut component_max = [0.0f64; 9];
    let mut sq = [0.0f64; 9];
    let mut det_max = 0.0f64;
    let mut det_sq = 0.0;
    for (g, t) in got.iter().zip(truth) {
        for c in 0..9 {
            let e = (g.m[c] - t.m[c]).abs();
            component_max[c] = component_max[c].max(e);
            sq[c] += e * e;
        }
        let e = (g.det() - t.det()).abs();
        det_max = det_max.max(e);
        det_sq += e * e;
    }
    ErrorNorms {
        component_max,
        component_rms: sq.map(|s| (s / n).sqrt()),
        det_max,
        det_rms: (det_sq / n).sqrt(),
    }
}

/// Report entry for a run; `truth` enables the error norms.
pub fn method_report(run: &MethodRun, cfg: &OperatorConfig, truth: Option<&[Tensor3]>) -> MethodReport {
    let mut r = MethodReport {
        name: run.method.name().to_string(),
        m: cfg.radius.m,
        alpha: cfg.radius.alpha,
        det_min: None,
        det_max: None,
        det_mean: None,
        nonpositive_dets: None,
        histogram_file: None,
        histogram: None,
        err_max: None,
        err_rms: None,
        errors: None,
        gmres_iters: GmresIters {
            build: run.build_stats.iterations,
            per_field: run.field_stats.iter().map(|s| s.iterations).collect(),
        },
        time_ms: run.time_ms,
        near_half_turn: run.near_half_turn,
        preconditioned: Some(run.preconditioned),
        error: None,
    };
    if let Some(t) = run.tensors() {
        let dets: Vec<f64> = t.iter().map(Tensor3::det).collect();
        let s = DetStats::new(&dets);
        r.det_min = Some(s.det_min);
        r.det_max = Some(s.det_max);
        r.det_mean = Some(s.det_mean);
        r.nonpositive_dets = Some(s.nonpositive);
        if let Some(truth) = truth {
            let e = error_norms(t, truth);
            let total = overall_rms(&e);
            r.err_max = Some(e.component_max.iter().copied().fold(0.0, f64::max));
            r.err_rms = Some(total);
            r.errors = Some(e);
        }
    }
    r
}

fn overall_rms(e: &ErrorNorms) -> f64 {
    (e.component_rms.iter().map(|v| v * v).sum::<f64>() / 9.0).sqrt()
}

fn method_failure(method: MethodKind, cfg: &OperatorConfig, err: &Error) -> MethodReport {
    MethodReport {
        name: method.name().to_string(),
        m: cfg.radius.m,
        alpha: cfg.radius.alpha,
        det_min: None,
        det_max: None,
        det_mean: None,
        nonpositive_dets: None,
        histogram_file: None,
        histogram: None,
        err_max: None,
        err_rms: None,
        errors: None,
        gmres_iters: GmresIters::default(),
        time_ms: Timings::default(),
        near_half_turn: None,
        preconditioned: None,
        error: Some(err.to_string()),
    }
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {threads} worker threads: {e}")))
}

/// Input of `method` for a generated field.
pub fn method_input(method: MethodKind, field: &GeneratedField) -> FieldData {
    match method {
        MethodKind::RbfDGrad => FieldData::Displacement(field.displacement.clone()),
        MethodKind::RbfFE | MethodKind::RbfFSvd => FieldData::Tensor(field.tensors.values().to_vec()),
    }
}

/// Runs every configured method on the synthetic field. A method that fails
/// is recorded in its report entry and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TransferReport> {
    cfg.validate()?;
    let pool = thread_pool(cfg.threads)?;
    let threads = pool.current_num_threads();
    pool.install(|| {
        let src = Arc::new(cfg.source.points()?);
        let dst = Arc::new(cfg.destination.points()?);
        let field = generate_field(&cfg.field, &src, cfg.seed)?;
        let truth: Vec<Tensor3> = dst.iter().map(|p| field.truth.gradient(p)).collect();
        let src_dets = field.tensors.dets();

        let mut methods = Vec::with_capacity(cfg.methods.len());
        let mut all_dets = src_dets.clone();
        let mut method_dets = Vec::with_capacity(cfg.methods.len());
        for &m in &cfg.methods {
            let op_cfg = cfg.operator_config(m);
            match run_transfer(&src, &dst, &method_input(m, &field), m, &op_cfg) {
                Ok(run) => {
                    let dets: Vec<f64> = run.tensors().unwrap_or_default().iter().map(Tensor3::det).collect();
                    all_dets.extend(dets.iter().copied().filter(|d| d.is_finite()));
                    methods.push(method_report(&run, &op_cfg, Some(&truth)));
                    method_dets.push(Some(dets));
                }
                Err(e) => {
                    methods.push(method_failure(m, &op_cfg, &e));
                    method_dets.push(None);
                }
            }
        }

        let lo = all_dets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = all_dets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut source_stats = SourceStats {
            dets: DetStats::new(&src_dets),
            histogram_file: None,
            histogram: None,
        };
        if !cfg.methods.is_empty() {
            source_stats.histogram = Some(Histogram::new(&src_dets, lo, hi, cfg.bins));
            source_stats.histogram_file = Some("hist_source.csv".into());
        }
        for (r, dets) in methods.iter_mut().zip(&method_dets) {
            if let Some(d) = dets {
                r.histogram = Some(Histogram::new(d, lo, hi, cfg.bins));
                r.histogram_file = Some(format!("hist_{}.csv", r.name));
            }
        }

        let scaling = if cfg.scaling_threads.is_empty() {
            Vec::new()
        } else {
            measure_scaling(cfg, &src, &dst, &field)?
        };

        Ok(TransferReport {
            config: cfg.clone(),
            threads,
            source_points: src.len(),
            destination_points: dst.len(),
            source_stats,
            methods,
            scaling,
        })
    })
}

/// Init and evaluate wall times of `cfg.scaling_method` for every thread
/// count in `cfg.scaling_threads`.
pub fn measure_scaling(
    cfg: &ExperimentConfig,
    src: &Arc<PointSet>,
    dst: &Arc<PointSet>,
    field: &GeneratedField,
) -> Result<Vec<ScalingSample>> {
    let m = cfg.scaling_method;
    let op_cfg = cfg.operator_config(m);
    let input = method_input(m, field);
    cfg.scaling_threads
        .iter()
        .map(|&t| {
            let run = thread_pool(t)?.install(|| run_transfer(src, dst, &input, m, &op_cfg))?;
            Ok(ScalingSample {
                threads: t,
                method: m.name().to_string(),
                destinations: dst.len(),
                time_ms: run.time_ms,
            })
        })
        .collect()
}
