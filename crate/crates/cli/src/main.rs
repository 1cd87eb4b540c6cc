use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rbfxfer::fieldxfer::{MethodKind, OperatorConfig};
use rbfxfer::harness::{
    emit_report, generate_field, method_report, run_experiment, run_transfer, thread_pool, ExperimentConfig, FieldKind,
    Histogram,
};
use rbfxfer::io::{read_field, read_points, write_field, write_points, FieldData};
use rbfxfer::pointcloud::{gauss_points, RadiusConfig, StructuredGrid};
use rbfxfer::sparse::SolverConfig;
use rbfxfer::Error;

const NUMERICAL_FAILURE: u8 = 2;
const USAGE_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "xfer", version, about = "Transfer fields between point clouds with rescaled RBF interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; overrides the config's `threads`.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Transfer a field given as CSV files.
    Transfer {
        #[arg(long)]
        src: PathBuf,
        #[arg(long = "src-field")]
        src_field: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        #[arg(long)]
        method: MethodKind,
        /// Neighbours enclosed by the unscaled support radius.
        #[arg(long = "M")]
        m: Option<usize>,
        /// Support radius safety factor (> 1).
        #[arg(long)]
        alpha: Option<f64>,
        /// Relative tolerance of the interpolation solves.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a synthetic field at Gauss points of a unit-cube grid.
    Gen {
        #[arg(long)]
        kind: String,
        /// Cells per axis as `nx,ny,nz`.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 1)]
        q: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE_FAILURE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run { config, out, threads } => cmd_run(&config, out, threads),
        Command::Transfer {
            src,
            src_field,
            dst,
            method,
            m,
            alpha,
            tol,
            threads,
            out,
        } => cmd_transfer(&src, &src_field, &dst, method, m, alpha, tol, threads, &out),
        Command::Gen {
            kind,
            grid,
            q,
            seed,
            out,
        } => cmd_gen(&kind, &grid, q, seed, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Format(_)
            | Error::InvalidConfig(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptyPointSet
            | Error::NonFinitePoint { .. }
            | Error::DuplicatePoint { .. }
            | Error::TooFewPoints { .. }
            | Error::UnsupportedQuadrature(_),
        )
        | None => USAGE_FAILURE,
        Some(_) => NUMERICAL_FAILURE,
    }
}

fn cmd_run(config: &Path, out: Option<PathBuf>, threads: Option<usize>) -> anyhow::Result<u8> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("xfer-out"));
    let report = run_experiment(&cfg)?;
    let path = emit_report(&report, &dir)?;
    println!(
        "{} source points, {} destination points, {} thread(s)",
        report.source_points, report.destination_points, report.threads
    );
    let mut code = 0;
    for m in &report.methods {
        match &m.error {
            Some(err) => println!("{:<10} failed: {err}", m.name),
            None => println!(
                "{:<10} det in [{:.6e}, {:.6e}]  err_max {:.3e}  init {:.1} ms  evaluate {:.1} ms",
                m.name,
                m.det_min.unwrap_or(f64::NAN),
                m.det_max.unwrap_or(f64::NAN),
                m.err_max.unwrap_or(f64::NAN),
                m.time_ms.init,
                m.time_ms.evaluate
            ),
        }
        if m.preconditioned == Some(false) && cfg.precondition {
            println!("{:<10} solved without preconditioner (preconditioned solve stalled)", m.name);
        }
        if m.is_numerical_failure() {
            code = NUMERICAL_FAILURE;
        }
    }
    for s in &report.scaling {
        println!(
            "scaling {} threads: init {:.1} ms, evaluate {:.1} ms",
            s.threads, s.time_ms.init, s.time_ms.evaluate
        );
    }
    println!("report written to {}", path.display());
    Ok(code)
}

#[allow(clippy::too_many_arguments)]
fn cmd_transfer(
    src: &Path,
    src_field: &Path,
    dst: &Path,
    method: MethodKind,
    m: Option<usize>,
    alpha: Option<f64>,
    tol: f64,
    threads: usize,
    out: &Path,
) -> anyhow::Result<u8> {
    let src_pts = Arc::new(read_points(src).with_context(|| format!("reading {}", src.display()))?);
    let dst_pts = Arc::new(read_points(dst).with_context(|| format!("reading {}", dst.display()))?);
    let input = read_field(src_field).with_context(|| format!("reading {}", src_field.display()))?;
    if input.len() != src_pts.len() {
        bail!(Error::Format(format!(
            "{} has {} rows but {} has {} points",
            src_field.display(),
            input.len(),
            src.display(),
            src_pts.len()
        )));
    }
    let defaults = match input {
        FieldData::Scalar(_) => RadiusConfig::SCALAR,
        _ => method.default_radius(),
    };
    let radius = RadiusConfig::new(m.unwrap_or(defaults.m), alpha.unwrap_or(defaults.alpha))?;
    let solver = SolverConfig {
        tol,
        ..SolverConfig::OUTER
    };
    solver.validate()?;
    let op_cfg = OperatorConfig {
        solver,
        ..OperatorConfig::new(radius)
    };
    let pool = thread_pool(threads)?;
    let run = pool.install(|| run_transfer(&src_pts, &dst_pts, &input, method, &op_cfg))?;

    fs::create_dir_all(out)?;
    write_field(out.join("field.csv"), &run.output)?;
    let mut report = method_report(&run, &op_cfg, None);
    if let (FieldData::Tensor(src_t), Some(dst_t)) = (&input, run.tensors()) {
        let dets: Vec<f64> = dst_t.iter().map(|t| t.det()).collect();
        let all = src_t.iter().map(|t| t.det()).chain(dets.iter().copied()).filter(|d| d.is_finite());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(d), h.max(d)));
        let hist = Histogram::new(&dets, lo, hi, 60);
        let file = format!("hist_{}.csv", method.name());
        fs::write(out.join(&file), hist.to_csv())?;
        report.histogram_file = Some(file);
        report.histogram = Some(hist);
    }
    let json = serde_json::json!({
        "source_points": src_pts.len(),
        "destination_points": dst_pts.len(),
        "threads": threads,
        "methods": [report],
    });
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&json)?)?;
    match (report.det_min, report.det_max) {
        (Some(lo), Some(hi)) => println!("{method}: det in [{lo:.6e}, {hi:.6e}]"),
        _ => println!("{method}: {} values transferred", dst_pts.len()),
    }
    println!("output written to {}", out.display());
    Ok(if report.is_numerical_failure() { NUMERICAL_FAILURE } else { 0 })
}

fn cmd_gen(kind: &str, grid: &str, q: usize, seed: u64, out: &Path) -> anyhow::Result<u8> {
    let kind = FieldKind::with_defaults(kind)?;
    let cells: Vec<usize> = grid
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidConfig(format!("grid must be nx,ny,nz, got {grid:?}")))?;
    let [nx, ny, nz] = cells[..] else {
        bail!(Error::InvalidConfig(format!("grid must be nx,ny,nz, got {grid:?}")));
    };
    let g = StructuredGrid {
        cells: [nx, ny, nz],
        ..StructuredGrid::unit_cube(1)
    };
    let pts = Arc::new(gauss_points(&g, q)?);
    let field = generate_field(&kind, &pts, seed)?;
    fs::create_dir_all(out)?;
    write_points(out.join("points.csv"), &pts)?;
    write_field(out.join("displacement.csv"), &FieldData::Displacement(field.displacement))?;
    write_field(out.join("tensor.csv"), &FieldData::Tensor(field.tensors.into_values()))?;
    println!("{} points of a {} field written to {}", pts.len(), kind.name(), out.display());
    Ok(0)
}
