//! The four commands behind the binary. Each reads and writes plain files in
//! the run directory:
//!
//! | file             | written by   |
//! |------------------|--------------|
//! | `dataset.csv`    | synth        |
//! | `trials.txt`     | synth        |
//! | `checkpoint.txt` | train        |
//! | `metrics.csv`    | train, eval  |

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::error::{GclError, Result};
use crate::eval::{build_trials, evaluate_encoder, EerResult};
use crate::io::{
    metrics_header, metrics_row, parse_checkpoint, parse_dataset, parse_trials, read_text, write_checkpoint,
    write_dataset, write_text, write_trials, Checkpoint,
};
use crate::rng::{stream, StreamName};
use crate::train::{synth_dataset, train_with, Split};
use crate::verify::{run_all, Gcl, SuiteResult};

#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dataset: PathBuf,
    pub trials: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            dataset: dir.join("dataset.csv"),
            trials: dir.join("trials.txt"),
            checkpoint: dir.join("checkpoint.txt"),
            metrics: dir.join("metrics.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub utterances: usize,
    pub trials: usize,
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    cfg.validate()?;
    let paths = RunPaths::new(&cfg.out);
    let data = synth_dataset(&cfg.synthetic())?;
    let trials = build_trials(&data, Split::Eval, cfg.trials, &mut stream(cfg.seed, StreamName::Trials))?;
    write_text(&paths.dataset, &write_dataset(&data))?;
    write_text(&paths.trials, &write_trials(&trials))?;
    Ok(SynthSummary {
        utterances: data.len(),
        trials: trials.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub final_eer: Option<f64>,
}

fn timestamp() -> String {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
        .to_string()
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let paths = RunPaths::new(&cfg.out);
    let data = parse_dataset(&read_text(&paths.dataset)?)?;
    let trials = if cfg.eval_every > 0 {
        parse_trials(&read_text(&paths.trials)?)?
    } else {
        Vec::new()
    };
    let outcome = train_with(&data, &cfg.training(), |step, encoder| {
        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            Ok(Some(evaluate_encoder(encoder, &data, &trials)?.eer))
        } else {
            Ok(None)
        }
    })?;
    let run_id = cfg.run_id();
    let mut csv = metrics_header(&timestamp());
    for m in &outcome.log {
        csv.push_str(&metrics_row(&run_id, m));
    }
    write_text(&paths.metrics, &csv)?;
    write_text(
        &paths.checkpoint,
        &write_checkpoint(&Checkpoint {
            encoder: outcome.encoder,
            kernel: outcome.kernel,
        }),
    )?;
    Ok(TrainSummary {
        steps: outcome.log.len(),
        final_loss: outcome.log.last().map(|m| m.loss),
        final_eer: outcome.log.iter().rev().find_map(|m| m.eer_on_val),
    })
}

/// Scores the trial list with the checkpoint and appends the EER to the
/// metrics log as an evaluation row (loss columns empty).
pub fn cmd_eval(cfg: &RunConfig) -> Result<EerResult> {
    let paths = RunPaths::new(&cfg.out);
    let data = parse_dataset(&read_text(&paths.dataset)?)?;
    let trials = parse_trials(&read_text(&paths.trials)?)?;
    let ckpt = parse_checkpoint(&read_text(&paths.checkpoint)?)?;
    let result = evaluate_encoder(&ckpt.encoder, &data, &trials)?;

    let mut text = String::new();
    if !paths.metrics.exists() {
        text.push_str(&metrics_header(&timestamp()));
    }
    text.push_str(&format!(
        "{},{},{},,,,,{:e}\n",
        cfg.run_id(),
        cfg.train.steps,
        cfg.train.mode.name(),
        result.eer
    ));
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&paths.metrics)
        .map_err(|e| GclError::io(&paths.metrics, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| GclError::io(&paths.metrics, e))?;
    Ok(result)
}

/// Runs every verification suite; the bool is true iff all passed.
pub fn cmd_verify(seed: u64) -> (Vec<SuiteResult>, bool) {
    let results = run_all(&Gcl, seed);
    let ok = results.iter().all(|r| r.passed);
    (results, ok)
}
