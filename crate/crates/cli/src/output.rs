//! Verdicts, CSV tables and the JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use secular_core::quadrature::fit_growth_exponent;
use secular_core::GrowthFit;

use crate::config::{Experiment, ScanConfig};
use crate::CliError;

pub const GROWTH_EXPONENT: f64 = 0.2;
pub const GROWTH_R_SQUARED: f64 = 0.95;
pub const BOUNDED_EXPONENT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Growth(f64),
    Bounded,
    Cancelled(f64),
    Inconclusive,
}

impl Verdict {
    /// GROWTH iff γ > 0.2 with r² > 0.95, BOUNDED iff γ ≤ 0.1.
    pub fn from_fit(fit: &GrowthFit) -> Self {
        if fit.exponent > GROWTH_EXPONENT && fit.r_squared > GROWTH_R_SQUARED {
            Self::Growth(fit.exponent)
        } else if fit.exponent <= BOUNDED_EXPONENT {
            Self::Bounded
        } else {
            Self::Inconclusive
        }
    }

    pub fn from_residual(worst: f64, threshold: f64) -> Self {
        if worst < threshold {
            Self::Cancelled(worst)
        } else {
            Self::Inconclusive
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Growth(g) => format!("GROWTH({g:.4})"),
            Self::Bounded => "BOUNDED".into(),
            Self::Cancelled(r) => format!("CANCELLED({r:.3e})"),
            Self::Inconclusive => "INCONCLUSIVE".into(),
        }
    }
}

/// Fit over the whole scan; an identically zero signal is bounded without a fit.
pub fn verdict_from_scan(rows: &[(f64, f64)]) -> Result<(Verdict, Option<GrowthFit>), CliError> {
    if rows.iter().all(|r| r.1 == 0.0) {
        return Ok((Verdict::Bounded, None));
    }
    let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let fit = fit_growth_exponent(rows, (lo, hi))?;
    Ok((Verdict::from_fit(&fit), Some(fit)))
}

/// Table cell; floats carry 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl Cell {
    fn render(self) -> String {
        match self {
            Self::Int(i) => i.to_string(),
            Self::Float(x) => format!("{x:.16e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub experiment: Experiment,
    pub table: Table,
    pub verdict: Verdict,
    pub fit: Option<GrowthFit>,
    pub details: Value,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    experiment: &'static str,
    verdict: Verdict,
    label: String,
    exponent: Option<f64>,
    coefficient: Option<f64>,
    r_squared: Option<f64>,
    fit_window: Option<(f64, f64)>,
    columns: &'a [&'static str],
    rows: usize,
    config_hash: String,
    seed: u64,
    config: &'a ScanConfig,
    details: &'a Value,
    runtime_seconds: f64,
}

/// SHA-256 of the resolved configuration, serialized as JSON.
pub fn config_hash(config: &ScanConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("configuration serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sidecar_json(result: &ScanResult, config: &ScanConfig, runtime_seconds: f64) -> Result<Vec<u8>, CliError> {
    let fit = result.fit.as_ref();
    let side = Sidecar {
        experiment: result.experiment.stem(),
        verdict: result.verdict,
        label: result.verdict.label(),
        exponent: fit.map(|f| f.exponent),
        coefficient: fit.map(|f| f.coefficient),
        r_squared: fit.map(|f| f.r_squared),
        fit_window: fit.map(|f| f.window),
        columns: &result.table.columns,
        rows: result.table.rows.len(),
        config_hash: config_hash(config),
        seed: config.seed,
        config,
        details: &result.details,
        runtime_seconds,
    };
    let mut out = serde_json::to_vec_pretty(&side)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes both files through temporary names, so a failure leaves neither behind.
pub fn write_outputs(dir: &Path, stem: &str, csv: &[u8], json: &[u8]) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let tmp_csv = dir.join(format!(".{stem}.csv.partial"));
    let tmp_json = dir.join(format!(".{stem}.json.partial"));
    let staged = fs::write(&tmp_csv, csv).and_then(|_| fs::write(&tmp_json, json));
    if let Err(e) = staged {
        let _ = fs::remove_file(&tmp_csv);
        let _ = fs::remove_file(&tmp_json);
        return Err(e.into());
    }
    fs::rename(&tmp_csv, &csv_path)?;
    fs::rename(&tmp_json, &json_path)?;
    Ok((csv_path, json_path))
}
