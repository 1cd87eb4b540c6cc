use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::Result;

/// Uniform bins over `[lo, hi]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let mut counts = vec![0; bins];
        for v in values {
            let t = ((v - lo) / (hi - lo) * bins as f64).floor();
            let b = if t.is_nan() { 0 } else { (t.max(0.0) as usize).min(bins - 1) };
            counts[b] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|k| if k == n { self.hi } else { self.lo + (self.hi - self.lo) * k as f64 / n as f64 })
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let e = self.edges();
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{:?},{:?},{}\n", e[k], e[k + 1], c));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetStats {
    pub count: usize,
    pub det_min: f64,
    pub det_max: f64,
    pub det_mean: f64,
    pub nonpositive: usize,
}

impl DetStats {
    pub fn new(dets: &[f64]) -> Self {
        let finite = || dets.iter().copied().filter(|d| d.is_finite());
        let n = dets.len().max(1);
        Self {
            count: dets.len(),
            det_min: finite().fold(f64::INFINITY, f64::min),
            det_max: finite().fold(f64::NEG_INFINITY, f64::max),
            det_mean: finite().sum::<f64>() / n as f64,
            nonpositive: dets.iter().filter(|d| !(**d > 0.0)).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    #[serde(flatten)]
    pub dets: DetStats,
    pub histogram_file: Option<String>,
    pub histogram: Option<Histogram>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub init: f64,
    pub evaluate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GmresIters {
    pub build: usize,
    pub per_field: Vec<usize>,
}

/// Error norms against the analytic gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub component_max: [f64; 9],
    pub component_rms: [f64; 9],
    pub det_max: f64,
    pub det_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub m: usize,
    pub alpha: f64,
    pub det_min: Option<f64>,
    pub det_max: Option<f64>,
    pub det_mean: Option<f64>,
    pub nonpositive_dets: Option<usize>,
    pub histogram_file: Option<String>,
    pub histogram: Option<Histogram>,
    pub err_max: Option<f64>,
    pub err_rms: Option<f64>,
    pub errors: Option<ErrorNorms>,
    pub gmres_iters: GmresIters,
    pub time_ms: Timings,
    /// Source points near a half turn (SVD method only).
    pub near_half_turn: Option<usize>,
    #[serde(default)]
    pub preconditioned: Option<bool>,
    pub error: Option<String>,
}

impl MethodReport {
    /// Failed outright, or produced a destination with `det F <= 0`.
    pub fn is_numerical_failure(&self) -> bool {
        self.error.is_some() || self.nonpositive_dets.unwrap_or(0) > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub threads: usize,
    pub method: String,
    pub destinations: usize,
    pub time_ms: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub config: ExperimentConfig,
    pub threads: usize,
    pub source_points: usize,
    pub destination_points: usize,
    pub source_stats: SourceStats,
    pub methods: Vec<MethodReport>,
    #[serde(default)]
    pub scaling: Vec<ScalingSample>,
}

/// Writes `report.json` and every histogram CSV named in the report into
/// `dir`; returns the JSON path.
pub fn emit_report(report: &TransferReport, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let hist = std::iter::once((&report.source_stats.histogram_file, &report.source_stats.histogram))
        .chain(report.methods.iter().map(|m| (&m.histogram_file, &m.histogram)));
    for (file, h) in hist {
        if let (Some(file), Some(h)) = (file, h) {
            fs::write(dir.join(file), h.to_csv())?;
        }
    }
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_every_value() {
        let v = [0.0, 0.25, 0.5, 1.0, 1.0, -3.0, 7.0];
        let h = Histogram::new(&v, 0.0, 1.0, 4);
        assert_eq!(h.counts, vec![2, 1, 1, 3]);
        assert_eq!(h.total(), v.len());
        assert_eq!(h.edges(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn degenerate_range_widened() {
        let h = Histogram::new(&[1.0; 5], 1.0, 1.0, 60);
        assert!(h.hi > h.lo);
        assert_eq!(h.total(), 5);
    }

    #[test]
    fn det_stats() {
        let s = DetStats::new(&[1.0, 2.0, -1.0, 0.0]);
        assert_eq!((s.det_min, s.det_max, s.det_mean, s.nonpositive), (-1.0, 2.0, 0.5, 2));
    }

    #[test]
    fn csv_layout() {
        let h = Histogram::new(&[0.5], 0.0, 1.0, 2);
        assert_eq!(h.to_csv(), "bin_lo,bin_hi,count\n0.0,0.5,0\n0.5,1.0,1\n");
    }
}
