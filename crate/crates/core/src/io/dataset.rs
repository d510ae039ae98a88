use crate::error::{GclError, Result};
use crate::train::{Dataset, Split};

use super::{fmt_f64, parse_f64, parse_usize, MAX_ELEMENTS};

pub const DATASET_HEADER: &str = "# gcl-dataset v1";

/// CSV with columns `utt,speaker,split,x0..x{F-1}`; `utt` is the row index.
pub fn write_dataset(data: &Dataset) -> String {
    let mut out = format!("{DATASET_HEADER}\nutt,speaker,split");
    for d in 0..data.feature_dim() {
        out.push_str(&format!(",x{d}"));
    }
    out.push('\n');
    for (i, x) in data.features.iter().enumerate() {
        out.push_str(&format!("{i},{},{}", data.speakers[i], data.splits[i].name()));
        for v in x {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, DATASET_HEADER)) => {}
        Some((line, other)) => return Err(GclError::parse(line, format!("bad header {other:?}"))),
        None => return Err(GclError::parse(0, "empty dataset")),
    }
    let (line, columns) = lines.next().ok_or_else(|| GclError::parse(1, "missing column line"))?;
    let cols: Vec<&str> = columns.split(',').collect();
    if cols.len() < 4 || cols[..3] != ["utt", "speaker", "split"] {
        return Err(GclError::parse(line, "expected columns utt,speaker,split,x0,..."));
    }
    let dim = cols.len() - 3;
    for (d, c) in cols[3..].iter().enumerate() {
        if *c != format!("x{d}") {
            return Err(GclError::parse(line, format!("column {} should be x{d}, got {c:?}", d + 3)));
        }
    }
    let mut data = Dataset {
        features: Vec::new(),
        speakers: Vec::new(),
        splits: Vec::new(),
    };
    for (line, row) in lines {
        if row.is_empty() {
            continue;
        }
        if (data.len() + 1).saturating_mul(dim) > MAX_ELEMENTS {
            return Err(GclError::parse(line, "dataset too large"));
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(GclError::parse(line, format!("expected {} fields, got {}", dim + 3, fields.len())));
        }
        if parse_usize(fields[0], line)? != data.len() {
            return Err(GclError::parse(line, format!("utterance id {} out of sequence", fields[0])));
        }
        let split = match fields[2] {
            "train" => Split::Train,
            "eval" => Split::Eval,
            other => return Err(GclError::parse(line, format!("unknown split {other:?}"))),
        };
        data.speakers.push(parse_usize(fields[1], line)?);
        data.splits.push(split);
        data.features.push(
            fields[3..]
                .iter()
                .map(|t| parse_f64(t, line))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    if data.is_empty() {
        return Err(GclError::parse(line, "dataset has no rows"));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{synth_dataset, SyntheticConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let d = synth_dataset(&SyntheticConfig {
            n_speakers: 4,
            utterances_per_speaker: 3,
            feature_dim: 5,
            eval_speakers: 1,
            ..Default::default()
        })
        .unwrap();
        let text = write_dataset(&d);
        assert_eq!(text.lines().count(), 2 + 12);
        assert_eq!(parse_dataset(&text).unwrap(), d);
    }

    #[test]
    fn malformed() {
        let ok = format!("{DATASET_HEADER}\nutt,speaker,split,x0\n0,3,train,1.5\n");
        assert_eq!(parse_dataset(&ok).unwrap().speakers, vec![3]);
        for bad in [
            ok.replace("0,3,train", "1,3,train"),
            ok.replace("train", "test"),
            ok.replace("x0", "y0"),
            ok.replace("1.5", "1.5,2"),
            ok.replace("1.5", "inf"),
            ok.replace("v1", "v0"),
            ok.replace("0,3,train,1.5\n", ""),
        ] {
            assert!(matches!(parse_dataset(&bad), Err(GclError::Parse { .. })), "{bad}");
        }
    }
}
