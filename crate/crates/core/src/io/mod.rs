//! Plain-text file formats: affinity grids, trial lists, checkpoints,
//! datasets and the metrics log. Every parser takes `&str` and reports the
//! 1-based line of the first problem.

mod checkpoint;
mod dataset;
mod grid;
mod metrics;
mod trials;

use std::fs;
use std::path::Path;

use crate::error::{GclError, Result};

pub use checkpoint::{parse_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_HEADER};
pub use dataset::{parse_dataset, write_dataset, DATASET_HEADER};
pub use grid::{parse_affinity_grid, write_affinity_grid};
pub use metrics::{metrics_header, metrics_row, parse_metrics, MetricsRow, METRICS_COLUMNS, METRICS_MAGIC};
pub use trials::{parse_trials, write_trials};

/// Largest tensor or table a parser will allocate for.
pub const MAX_ELEMENTS: usize = 1 << 24;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GclError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| GclError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| GclError::io(path, e))
}

pub(crate) fn parse_f64(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| GclError::parse(line, format!("invalid number {token:?}")))?;
    if !v.is_finite() {
        return Err(GclError::parse(line, format!("non-finite value {token:?}")));
    }
    Ok(v)
}

pub(crate) fn parse_usize(token: &str, line: usize) -> Result<usize> {
    token
        .parse()
        .map_err(|_| GclError::parse(line, format!("invalid count {token:?}")))
}

/// Shortest representation that parses back to the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}
