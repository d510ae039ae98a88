use crate::error::{GclError, Result};
use crate::eval::Trial;

use super::parse_usize;

/// `label idA idB` per line with `label` in {0, 1}.
pub fn parse_trials(text: &str) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [label, a, b] = fields[..] else {
            return Err(GclError::parse(line, format!("expected 3 fields, got {}", fields.len())));
        };
        let target = match label {
            "1" => true,
            "0" => false,
            other => return Err(GclError::parse(line, format!("label must be 0 or 1, got {other:?}"))),
        };
        out.push(Trial {
            target,
            a: parse_usize(a, line)?,
            b: parse_usize(b, line)?,
        });
    }
    Ok(out)
}

pub fn write_trials(trials: &[Trial]) -> String {
    trials
        .iter()
        .map(|t| format!("{} {} {}\n", u8::from(t.target), t.a, t.b))
        .collect()
}
