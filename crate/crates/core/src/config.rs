//! Run configuration: one `key = value` per line, dotted keys, `#` comments.
//!
//! ```text
//! seed = 7
//! data.n_speakers = 64
//! train.mode = semi
//! train.labeled_speakers = 16
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use crate::affinity::UnlabeledBlock;
use crate::error::{GclError, Result};
use crate::kernel::KernelKind;
use crate::loss::RatioTransform;
use crate::train::{Mode, SupervisedAffinity, SyntheticConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: SyntheticConfig,
    pub train: TrainConfig,
    /// Trial pairs drawn from the held-out speakers.
    pub trials: usize,
    /// Held-out EER every this many steps; 0 disables it.
    pub eval_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("run"),
            data: SyntheticConfig::default(),
            train: TrainConfig::default(),
            trials: 10000,
            eval_every: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "out",
    "data.n_speakers",
    "data.utterances_per_speaker",
    "data.feature_dim",
    "data.intra_spread",
    "data.inter_spread",
    "data.shared_offset",
    "data.max_gain",
    "data.eval_speakers",
    "model.hidden_dim",
    "model.embedding_dim",
    "train.mode",
    "train.labeled_speakers",
    "train.unlabeled_fraction",
    "train.batch_slots",
    "train.samples_per_class",
    "train.steps",
    "train.lr",
    "train.momentum",
    "train.supervised_affinity",
    "train.unlabeled_block",
    "loss.kernel",
    "loss.tau",
    "loss.gamma",
    "loss.beta",
    "loss.transform",
    "loss.epsilon",
    "augment.noise_sigma",
    "augment.gain_min",
    "augment.gain_max",
    "augment.dropout_rate",
    "eval.trials",
    "eval.every",
];

fn transform_name(t: RatioTransform) -> &'static str {
    match t {
        RatioTransform::NegatedRatio => "ratio",
        RatioTransform::NegatedLogRatio => "log-ratio",
    }
}

fn block_name(b: UnlabeledBlock) -> &'static str {
    match b {
        UnlabeledBlock::Verbatim => "verbatim",
        UnlabeledBlock::Relaxed => "relaxed",
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid value {v:?}"))
}

fn real(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = num(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("non-finite value {v:?}"))
    }
}

fn choice<T>(v: &str, parsed: Option<T>, allowed: &str) -> std::result::Result<T, String> {
    parsed.ok_or_else(|| format!("{v:?} is not one of {allowed}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| GclError::parse(line, format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(GclError::parse(line, format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(GclError::parse(line, format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|msg| GclError::parse(line, format!("{key}: {msg}")))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let d = &mut self.data;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = num(v)?,
            "out" => self.out = PathBuf::from(v),
            "data.n_speakers" => d.n_speakers = num(v)?,
            "data.utterances_per_speaker" => d.utterances_per_speaker = num(v)?,
            "data.feature_dim" => d.feature_dim = num(v)?,
            "data.intra_spread" => d.intra_spread = real(v)?,
            "data.inter_spread" => d.inter_spread = real(v)?,
            "data.shared_offset" => d.shared_offset = real(v)?,
            "data.max_gain" => d.max_gain = real(v)?,
            "data.eval_speakers" => d.eval_speakers = num(v)?,
            "model.hidden_dim" => t.hidden_dim = num(v)?,
            "model.embedding_dim" => t.embedding_dim = num(v)?,
            "train.mode" => t.mode = choice(v, Mode::from_name(v), "supervised|semi|unsupervised")?,
            "train.labeled_speakers" => t.labeled_speakers = if v == "all" { None } else { Some(num(v)?) },
            "train.unlabeled_fraction" => t.unlabeled_fraction = real(v)?,
            "train.batch_slots" => t.batch_slots = num(v)?,
            "train.samples_per_class" => t.samples_per_class = num(v)?,
            "train.steps" => t.steps = num(v)?,
            "train.lr" => t.lr = real(v)?,
            "train.momentum" => t.momentum = real(v)?,
            "train.supervised_affinity" => {
                t.supervised_affinity = choice(v, SupervisedAffinity::from_name(v), "episode|ntxent")?
            }
            "train.unlabeled_block" => {
                let parsed = [UnlabeledBlock::Verbatim, UnlabeledBlock::Relaxed]
                    .into_iter()
                    .find(|b| block_name(*b) == v);
                t.unlabeled_block = choice(v, parsed, "verbatim|relaxed")?
            }
            "loss.kernel" => t.kernel = choice(v, KernelKind::from_name(v), "sq-euclid|cosine-temp|affine-cosine")?,
            "loss.tau" => t.tau = real(v)?,
            "loss.gamma" => t.gamma_init = real(v)?,
            "loss.beta" => t.beta_init = real(v)?,
            "loss.transform" => {
                let parsed = [RatioTransform::NegatedRatio, RatioTransform::NegatedLogRatio]
                    .into_iter()
                    .find(|x| transform_name(*x) == v);
                t.transform = choice(v, parsed, "ratio|log-ratio")?
            }
            "loss.epsilon" => t.epsilon = real(v)?,
            "augment.noise_sigma" => t.augmentation.noise_sigma = real(v)?,
            "augment.gain_min" => t.augmentation.gain_range.0 = real(v)?,
            "augment.gain_max" => t.augmentation.gain_range.1 = real(v)?,
            "augment.dropout_rate" => t.augmentation.dropout_rate = real(v)?,
            "eval.trials" => self.trials = num(v)?,
            "eval.every" => self.eval_every = num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let d = &self.data;
        let t = &self.train;
        match key {
            "seed" => self.seed.to_string(),
            "out" => self.out.display().to_string(),
            "data.n_speakers" => d.n_speakers.to_string(),
            "data.utterances_per_speaker" => d.utterances_per_speaker.to_string(),
            "data.feature_dim" => d.feature_dim.to_string(),
            "data.intra_spread" => format!("{:?}", d.intra_spread),
            "data.inter_spread" => format!("{:?}", d.inter_spread),
            "data.shared_offset" => format!("{:?}", d.shared_offset),
            "data.max_gain" => format!("{:?}", d.max_gain),
            "data.eval_speakers" => d.eval_speakers.to_string(),
            "model.hidden_dim" => t.hidden_dim.to_string(),
            "model.embedding_dim" => t.embedding_dim.to_string(),
            "train.mode" => t.mode.name().into(),
            "train.labeled_speakers" => t.labeled_speakers.map_or("all".into(), |p| p.to_string()),
            "train.unlabeled_fraction" => format!("{:?}", t.unlabeled_fraction),
            "train.batch_slots" => t.batch_slots.to_string(),
            "train.samples_per_class" => t.samples_per_class.to_string(),
            "train.steps" => t.steps.to_string(),
            "train.lr" => format!("{:?}", t.lr),
            "train.momentum" => format!("{:?}", t.momentum),
            "train.supervised_affinity" => t.supervised_affinity.name().into(),
            "train.unlabeled_block" => block_name(t.unlabeled_block).into(),
            "loss.kernel" => t.kernel.name().into(),
            "loss.tau" => format!("{:?}", t.tau),
            "loss.gamma" => format!("{:?}", t.gamma_init),
            "loss.beta" => format!("{:?}", t.beta_init),
            "loss.transform" => transform_name(t.transform).into(),
            "loss.epsilon" => format!("{:?}", t.epsilon),
            "augment.noise_sigma" => format!("{:?}", t.augmentation.noise_sigma),
            "augment.gain_min" => format!("{:?}", t.augmentation.gain_range.0),
            "augment.gain_max" => format!("{:?}", t.augmentation.gain_range.1),
            "augment.dropout_rate" => format!("{:?}", t.augmentation.dropout_rate),
            "eval.trials" => self.trials.to_string(),
            "eval.every" => self.eval_every.to_string(),
            _ => unreachable!("key list and getter out of sync: {key}"),
        }
    }

    /// Every key with its current value, in a form [`RunConfig::parse`] accepts.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    /// Synthetic-data settings with the global seed and embedding size applied.
    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            embedding_dim: self.train.embedding_dim,
            ..self.data.clone()
        }
    }

    /// Training settings with the global seed applied.
    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic().validate()?;
        self.training().validate()?;
        if let Some(p) = self.train.labeled_speakers {
            let train_speakers = self.data.n_speakers - self.data.eval_speakers;
            if p > train_speakers {
                return Err(GclError::Config(format!(
                    "{p} labeled speakers but only {train_speakers} training speakers"
                )));
            }
        }
        Ok(())
    }

    /// Run identifier written into every metrics row.
    pub fn run_id(&self) -> String {
        format!("{}-seed{}", self.train.mode.name(), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        assert_eq!(text.lines().count(), KEYS.len());
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn non_default_values_round_trip() {
        let text = "seed = 9\ntrain.mode = semi # inline\ntrain.labeled_speakers = 16\nloss.transform = log-ratio\n\
                    loss.kernel = cosine-temp\ntrain.unlabeled_block = relaxed\nloss.epsilon = 1e-9\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.mode, Mode::Semi);
        assert_eq!(cfg.train.labeled_speakers, Some(16));
        assert_eq!(cfg.train.epsilon, 1e-9);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(matches!(RunConfig::parse("seed = 1\ntrain.foo = 2\n"), Err(GclError::Parse { line: 2, .. })));
        assert!(RunConfig::parse("seed = 1\nseed = 2\n").is_err());
        assert!(RunConfig::parse("seed 1\n").is_err());
        assert!(RunConfig::parse("train.mode = both\n").is_err());
        assert!(RunConfig::parse("train.lr = nan\n").is_err());
    }

    #[test]
    fn single_speaker_is_refused() {
        let cfg = RunConfig::parse("data.n_speakers = 1\ndata.eval_speakers = 0\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse("train.labeled_speakers = 60\n").unwrap();
        assert!(matches!(cfg.validate(), Err(GclError::Config(_))));
    }
}
