//! Batch driver: JSON configuration in, CSV table plus JSON verdict out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{Experiment, ScanConfig};
pub use output::{ScanResult, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Numeric(#[from] secular_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::ConfigInvalid(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) | Self::Csv(_) | Self::Json(_) => 4,
        }
    }
}

/// Command-line overrides applied on top of the file configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rel_tol: Option<f64>,
}

pub fn load_config(path: Option<&Path>, exp: Experiment, over: Overrides) -> Result<ScanConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", p.display())))?;
            ScanConfig::from_json(&text)?
        }
        None => ScanConfig::default(),
    };
    if let Some(s) = over.seed {
        cfg.seed = s;
    }
    if let Some(t) = over.rel_tol {
        cfg.rel_tol = t;
    }
    cfg.resolve(exp)
}

/// Runs the experiment and writes `<stem>.csv` and `<stem>.json` into `out`.
pub fn execute(exp: Experiment, cfg: &ScanConfig, out: &Path) -> Result<(ScanResult, PathBuf, PathBuf), CliError> {
    let start = Instant::now();
    let result = run::run(exp, cfg)?;
    let csv = result.table.to_csv()?;
    let json = output::sidecar_json(&result, cfg, start.elapsed().as_secs_f64())?;
    let (c, j) = output::write_outputs(out, exp.stem(), &csv, &json)?;
    Ok((result, c, j))
}
