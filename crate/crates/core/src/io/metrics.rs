use crate::error::{GclError, Result};
use crate::train::StepMetrics;

use super::{fmt_f64, parse_f64, parse_usize};

pub const METRICS_MAGIC: &str = "# gcl-metrics v1";
pub const METRICS_COLUMNS: &str = "run_id,step,mode,loss,mean_ratio,grad_norm,unlabeled_per_batch,eer_on_val";

/// First two lines of a metrics file; the timestamp is confined to line one.
pub fn metrics_header(generated: &str) -> String {
    format!("{METRICS_MAGIC} generated={generated}\n{METRICS_COLUMNS}\n")
}

pub fn metrics_row(run_id: &str, m: &StepMetrics) -> String {
    format!(
        "{run_id},{},{},{},{},{},{},{}\n",
        m.step,
        m.mode.name(),
        fmt_f64(m.loss),
        fmt_f64(m.mean_ratio),
        fmt_f64(m.grad_norm),
        m.unlabeled_per_batch,
        m.eer_on_val.map(fmt_f64).unwrap_or_default()
    )
}

/// A parsed metrics line; loss-related fields are empty on evaluation rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub step: usize,
    pub mode: String,
    pub loss: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub grad_norm: Option<f64>,
    pub unlabeled_per_batch: Option<usize>,
    pub eer_on_val: Option<f64>,
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.starts_with(METRICS_MAGIC) => {}
        Some((line, other)) => return Err(GclError::parse(line, format!("bad header {other:?}"))),
        None => return Err(GclError::parse(0, "empty metrics file")),
    }
    match lines.next() {
        Some((_, METRICS_COLUMNS)) => {}
        Some((line, _)) => return Err(GclError::parse(line, "unexpected column line")),
        None => return Err(GclError::parse(1, "missing column line")),
    }
    let opt_f = |t: &str, line| if t.is_empty() { Ok(None) } else { parse_f64(t, line).map(Some) };
    let mut rows = Vec::new();
    for (line, row) in lines {
        if row.is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 8 {
            return Err(GclError::parse(line, format!("expected 8 fields, got {}", f.len())));
        }
        rows.push(MetricsRow {
            run_id: f[0].to_string(),
            step: parse_usize(f[1], line)?,
            mode: f[2].to_string(),
            loss: opt_f(f[3], line)?,
            mean_ratio: opt_f(f[4], line)?,
            grad_norm: opt_f(f[5], line)?,
            unlabeled_per_batch: if f[6].is_empty() { None } else { Some(parse_usize(f[6], line)?) },
            eer_on_val: opt_f(f[7], line)?,
        });
    }
    Ok(rows)
}
