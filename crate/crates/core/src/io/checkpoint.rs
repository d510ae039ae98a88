//! Text tensor dump:
//!
//! ```text
//! # gcl-checkpoint v1
//! meta input 32
//! meta kernel affine-cosine
//! ...
//! tensor encoder 1 3184
//! <values>
//! end
//! ```
//!
//! Each tensor line is followed by `rows` lines of `cols` values.

use std::collections::BTreeMap;

use crate::error::{GclError, Result};
use crate::kernel::{KernelKind, KernelParams, Projection};
use crate::train::{Encoder, EncoderShape};

use super::{fmt_f64, parse_f64, parse_usize, MAX_ELEMENTS};

pub const CHECKPOINT_HEADER: &str = "# gcl-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: Encoder,
    pub kernel: KernelParams,
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> String {
    let shape = ckpt.encoder.shape();
    let k = &ckpt.kernel;
    let mut out = format!("{CHECKPOINT_HEADER}\n");
    out.push_str(&format!("meta input {}\n", shape.input));
    out.push_str(&format!("meta hidden {}\n", shape.hidden));
    out.push_str(&format!("meta output {}\n", shape.output));
    out.push_str(&format!("meta kernel {}\n", k.kind.name()));
    out.push_str(&format!("meta tau {}\n", fmt_f64(k.tau)));
    out.push_str(&format!("meta gamma {}\n", fmt_f64(k.gamma)));
    out.push_str(&format!("meta beta {}\n", fmt_f64(k.beta)));
    push_tensor(&mut out, "encoder", 1, ckpt.encoder.params());
    if let Some(p) = &k.proj {
        push_tensor(&mut out, "projection", p.out_dim, &p.weights);
    }
    out.push_str("end\n");
    out
}

fn push_tensor(out: &mut String, name: &str, rows: usize, values: &[f64]) {
    let cols = values.len().checked_div(rows).unwrap_or(0);
    out.push_str(&format!("tensor {name} {rows} {cols}\n"));
    for r in 0..rows {
        let row: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, CHECKPOINT_HEADER)) => {}
        Some((line, other)) => return Err(GclError::parse(line, format!("bad header {other:?}"))),
        None => return Err(GclError::parse(0, "empty checkpoint")),
    }
    let mut meta: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut tensors: BTreeMap<String, (usize, usize, Vec<f64>)> = BTreeMap::new();
    let mut last_line = 1;
    let mut ended = false;
    while let Some((line, content)) = lines.next() {
        last_line = line;
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        if ended {
            return Err(GclError::parse(line, "content after end"));
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        match fields[..] {
            ["end"] => ended = true,
            ["meta", key, value] => {
                if meta.insert(key.to_string(), (line, value.to_string())).is_some() {
                    return Err(GclError::parse(line, format!("duplicate meta {key}")));
                }
            }
            ["tensor", name, rows, cols] => {
                let rows = parse_usize(rows, line)?;
                let cols = parse_usize(cols, line)?;
                if rows.checked_mul(cols).is_none_or(|n| n > MAX_ELEMENTS) {
                    return Err(GclError::parse(line, format!("tensor {name} of {rows} x {cols} is too large")));
                }
                let mut values = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (row_line, row) = lines
                        .next()
                        .ok_or_else(|| GclError::parse(line, format!("tensor {name} truncated")))?;
                    last_line = row_line;
                    let before = values.len();
                    for t in row.split_whitespace() {
                        values.push(parse_f64(t, row_line)?);
                    }
                    if values.len() - before != cols {
                        return Err(GclError::parse(
                            row_line,
                            format!("expected {cols} values, got {}", values.len() - before),
                        ));
                    }
                }
                if tensors.insert(name.to_string(), (rows, cols, values)).is_some() {
                    return Err(GclError::parse(line, format!("duplicate tensor {name}")));
                }
            }
            _ => return Err(GclError::parse(line, format!("unrecognized line {content:?}"))),
        }
    }
    if !ended {
        return Err(GclError::parse(last_line, "missing end marker"));
    }

    let get = |key: &str| -> Result<&(usize, String)> {
        meta.get(key)
            .ok_or_else(|| GclError::parse(last_line, format!("missing meta {key}")))
    };
    let count = |key: &str| -> Result<usize> {
        let (line, v) = get(key)?;
        parse_usize(v, *line)
    };
    let real = |key: &str| -> Result<f64> {
        let (line, v) = get(key)?;
        parse_f64(v, *line)
    };
    let shape = EncoderShape {
        input: count("input")?,
        hidden: count("hidden")?,
        output: count("output")?,
    };
    let (kline, kname) = get("kernel")?;
    let kind = KernelKind::from_name(kname).ok_or_else(|| GclError::parse(*kline, format!("unknown kernel {kname:?}")))?;
    let (_, _, params) = tensors
        .remove("encoder")
        .ok_or_else(|| GclError::parse(last_line, "missing tensor encoder"))?;
    let expected = shape
        .input
        .checked_mul(shape.hidden)
        .zip(shape.output.checked_mul(shape.hidden))
        .and_then(|(a, b)| a.checked_add(b)?.checked_add(shape.hidden)?.checked_add(shape.output));
    if expected != Some(params.len()) {
        return Err(GclError::parse(last_line, "encoder tensor does not match the declared shape"));
    }
    let encoder = Encoder::from_params(shape, params)?;
    let proj = match tensors.remove("projection") {
        Some((rows, cols, w)) => Some(Projection::new(rows, cols, w)?),
        None => None,
    };
    if let Some(name) = tensors.keys().next() {
        return Err(GclError::parse(last_line, format!("unexpected tensor {name}")));
    }
    let kernel = KernelParams {
        kind,
        tau: real("tau")?,
        gamma: real("gamma")?,
        beta: real("beta")?,
        proj,
    };
    kernel.validate()?;
    Ok(Checkpoint { encoder, kernel })
}
