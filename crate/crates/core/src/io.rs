//! File formats: dense CSV matrices, JSON run configs and result envelopes.
//!
//! Matrices are comma-separated and row-major with an optional header line.
//! Numbers go through `str::parse::<f64>` and `Display`, which round-trip
//! exactly and ignore the locale.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearModel, SscpPair};
use crate::sim::{ExperimentSpec, Settings, SCHEMA_VERSION};

/// Parses a dense CSV matrix. `name` labels error messages.
///
/// The first data line is a header when any of its fields fails to parse as
/// a number. Blank lines and lines starting with `#` are skipped; every other
/// line must have the same number of fields.
pub fn parse_matrix_csv(text: &str, name: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && width.is_none() && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            width = Some(fields.len());
            continue;
        }
        if let Some(w) = width {
            if fields.len() != w {
                return Err(Error::Parse(format!(
                    "{name}: line {line_no} has {} fields, expected {w}",
                    fields.len()
                )));
            }
        }
        let mut row = Vec::with_capacity(fields.len());
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                Error::Parse(format!("{name}: line {line_no}, column {}: cannot parse {f:?} as a number", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("{name}: line {line_no}, column {}: value is not finite", col + 1)));
            }
            row.push(v);
        }
        width = Some(row.len());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{name}: no data rows")));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix_csv(&text, &path.display().to_string())
}

/// Headerless CSV with shortest round-trip formatting.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 20);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Paths of the three matrices of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub y: PathBuf,
    pub x: PathBuf,
    pub c: PathBuf,
}

impl DatasetPaths {
    /// `Y.csv`, `X.csv`, `C.csv` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            y: dir.join("Y.csv"),
            x: dir.join("X.csv"),
            c: dir.join("C.csv"),
        }
    }
}

pub fn read_dataset(paths: &DatasetPaths) -> Result<LinearModel<f64>> {
    let y = read_matrix_csv(&paths.y)?;
    let x = read_matrix_csv(&paths.x)?;
    let c = read_matrix_csv(&paths.c)?;
    LinearModel::new(y, x, c)
}

/// Writes `Y`, `X`, `C`, each preceded by the `#` comment lines of `preamble`.
pub fn write_dataset(paths: &DatasetPaths, model: &LinearModel<f64>, preamble: &str) -> Result<()> {
    for (path, m) in [(&paths.y, &model.y), (&paths.x, &model.x), (&paths.c, &model.c)] {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, format!("{preamble}{}", matrix_to_csv(m)))?;
    }
    Ok(())
}

/// Reads and validates an experiment spec.
pub fn read_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Test,
    Estimate,
    SelectLambda,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyName {
    #[serde(rename = "fixed")]
    Fixed,
    #[serde(rename = "data-driven-I")]
    DataDrivenI,
    #[serde(rename = "data-driven-Sigma")]
    DataDrivenSigma,
}

/// Fully resolved configuration of one CLI run, stored with every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub dataset: Option<DatasetPaths>,
    pub spec: Option<PathBuf>,
    pub lambda_policy: Option<PolicyName>,
    pub lambda: Option<f64>,
    pub alphas: Vec<f64>,
    pub settings: Settings,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Range checks on the numeric fields.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.lambda.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            bad.push("lambda (must be positive)");
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            bad.push("alpha (must lie in (0, 1))");
        }
        let s = &self.settings;
        if s.k == 0 || s.grid_i == 0 || s.ode_steps == 0 || s.lambda_grid == 0 {
            bad.push("K, I, ode-steps, lambda-grid (must be positive)");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(bad.join(", ")))
        }
    }
}

/// Every JSON output: schema version, resolved config, payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<R> {
    pub schema_version: u32,
    pub config: RunConfig,
    pub result: R,
}

impl<R> Envelope<R> {
    pub fn new(config: RunConfig, result: R) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            result,
        }
    }
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Comment lines recording the schema version and the resolved config.
pub fn csv_preamble<C: Serialize>(config: &C) -> String {
    let json = serde_json::to_string(config).unwrap_or_default();
    format!("# schema_version={SCHEMA_VERSION}\n# config={json}\n")
}

/// Writes `preamble` followed by `body`.
pub fn write_csv(path: &Path, preamble: &str, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, format!("{preamble}{body}"))?;
    Ok(())
}

/// Row-major copy of the SSCP pair for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SscpDump {
    pub n1: usize,
    pub n2: usize,
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<Vec<f64>>,
    pub w2_eigs: Vec<f64>,
}

impl From<&SscpPair<f64>> for SscpDump {
    fn from(s: &SscpPair<f64>) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Self {
            n1: s.n1,
            n2: s.n2,
            w1: rows(&s.w1),
            w2: rows(&s.w2),
            w2_eigs: s.w2_eigs.clone(),
        }
    }
}
