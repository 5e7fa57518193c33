//! Result files: JSON design records and audits, the run manifest and CSV
//! tables. Timestamps and timings appear only in the manifest, so every
//! other file is reproducible byte for byte.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use randaw_core::antiwindup::AntiWindupGain;
use randaw_core::Mat;
use serde::{Deserialize, Serialize};

use crate::settings::SolverConfig;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_owned(), source }
}

/// Synthesis goal and its level parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "goal", rename_all = "lowercase")]
pub enum GoalSpec {
    L2 { s: f64 },
    Area { s_lo: f64, s_hi: f64, degree: usize },
    Doa { cap: Option<f64> },
    Reach { s: f64 },
}

impl GoalSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GoalSpec::L2 { .. } => "l2",
            GoalSpec::Area { .. } => "area",
            GoalSpec::Doa { .. } => "doa",
            GoalSpec::Reach { .. } => "reach",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Nominal parameters only.
    Nominal,
    /// One scenario program over a fixed number of samples.
    Swc,
    /// Sequential design/validation iterations.
    Sequential,
}

pub fn matrix_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(Mat::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

/// A certified design as written by `synth` and read by `validate`,
/// `curve` and `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub format_version: u32,
    #[serde(flatten)]
    pub goal: GoalSpec,
    pub mode: Mode,
    pub model: String,
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub n_theta: usize,
    pub n_xc: usize,
    /// Row-major `D_aw`.
    pub d_aw: Vec<Vec<f64>>,
    /// Optimal value of the program's objective.
    pub objective: f64,
    /// Values of the design variables in declaration order.
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qbar: Option<Vec<Vec<f64>>>,
    /// Number of samples in the final design program.
    pub design_samples: u64,
    /// First sample index not used for design (or sequential validation).
    pub next_index: u64,
}

impl DesignRecord {
    pub fn gain(&self) -> Option<AntiWindupGain> {
        AntiWindupGain::new(matrix_from_rows(&self.d_aw)?, self.n_xc).ok()
    }

    pub fn qbar_matrix(&self) -> Option<Mat> {
        self.qbar.as_deref().and_then(matrix_from_rows)
    }

    pub fn read(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let rec: Self = serde_json::from_str(&text)
            .map_err(|e| ReportError::Format { path: path.to_owned(), message: e.to_string() })?;
        if rec.format_version != RECORD_VERSION {
            return Err(ReportError::Format {
                path: path.to_owned(),
                message: format!("unsupported record version {}", rec.format_version),
            });
        }
        if rec.gain().is_none() {
            return Err(ReportError::Format { path: path.to_owned(), message: "malformed d_aw".into() });
        }
        Ok(rec)
    }
}

/// Reproducibility metadata for one command invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub model: Option<String>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub n_theta: Option<usize>,
    pub seed: Option<u64>,
    pub solver: SolverConfig,
    pub outputs: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(solver: SolverConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            model: None,
            epsilon: None,
            delta: None,
            n_theta: None,
            seed: None,
            solver,
            outputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0.0,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| ReportError::Format { path: path.to_owned(), message: e.to_string() })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes a CSV table with a header row. Non-finite values are written as
/// `inf`, `-inf` or `nan`.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), ReportError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let fmt_err = |e: csv::Error| ReportError::Format { path: path.to_owned(), message: e.to_string() };
    w.write_record(header).map_err(fmt_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_value(*v))).map_err(fmt_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn create_dir(path: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

/// Prints a line to stdout, ignoring broken pipes.
pub fn say(line: impl AsRef<str>) {
    let _ = writeln!(std::io::stdout(), "{}", line.as_ref());
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> DesignRecord {
        DesignRecord {
            format_version: RECORD_VERSION,
            goal: GoalSpec::L2 { s: 0.003 },
            mode: Mode::Nominal,
            model: "m.toml".into(),
            seed: 0,
            epsilon: 0.01,
            delta: 1e-6,
            n_theta: 5,
            n_xc: 2,
            d_aw: vec![vec![-0.0855], vec![0.0011], vec![0.9887]],
            objective: 2.31,
            theta: vec![2.31, 0.1, 0.2, 0.3, 0.4],
            gamma2: Some(2.31),
            coefficients: None,
            qbar: None,
            design_samples: 1,
            next_index: 0,
        }
    }

    #[test]
    fn record_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        let mut r = record();
        r.theta[1] = 0.1 + 0.2;
        write_json(&p, &r).unwrap();
        let back = DesignRecord::read(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.gain().unwrap().matrix()[(2, 0)], 0.9887);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"goal\": \"l2\""));
    }

    #[test]
    fn csv_sentinels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_csv(&p, &["s".into(), "gamma".into()], &[vec![0.1, 2.0], vec![0.2, f64::INFINITY]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "s,gamma\n0.1,2\n0.2,inf\n");
    }
}
