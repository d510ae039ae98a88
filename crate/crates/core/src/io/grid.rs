use crate::affinity::AffinityMatrix;
use crate::error::{GclError, Result};

use super::{fmt_f64, parse_f64, MAX_ELEMENTS};

/// One row per line, entries separated by whitespace. Blank lines and `#`
/// comments are skipped.
pub fn parse_affinity_grid(text: &str) -> Result<AffinityMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row = content
            .split_whitespace()
            .map(|t| parse_f64(t, line))
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => {
                if row.len().saturating_mul(row.len()) > MAX_ELEMENTS {
                    return Err(GclError::parse(line, format!("grid width {} too large", row.len())));
                }
                width = Some(row.len());
            }
            Some(w) if w != row.len() => {
                return Err(GclError::parse(line, format!("row has {} entries, expected {w}", row.len())));
            }
            _ => {}
        }
        if rows.len() == width.unwrap_or(0) {
            return Err(GclError::parse(line, "more rows than columns"));
        }
        rows.push(row);
    }
    let n = rows.len();
    if width.is_some_and(|w| w != n) {
        return Err(GclError::parse(text.lines().count(), format!("grid is {n} x {}", width.unwrap_or(0))));
    }
    AffinityMatrix::from_rows(rows).map_err(|e| GclError::parse(0, e.to_string()))
}

pub fn write_affinity_grid(aff: &AffinityMatrix) -> String {
    let mut out = String::new();
    for row in aff.rows() {
        let cells: Vec<String> = row
            .iter()
            .map(|v| if v.fract() == 0.0 { format!("{v}") } else { fmt_f64(*v) })
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}
