//! Synthetic speaker data.
//!
//! Each speaker has a mean vector drawn from `N(0, inter_spread^2 I)`.
//! An utterance is `gain * (offset + mean + N(0, intra_spread^2 I))`, where
//! `offset` is a direction shared by every speaker and `gain` is a per-utterance
//! log-uniform scale. The shared offset and the gain are nuisance factors a
//! good embedding has to discard.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::batch::LabeledSet;
use crate::error::{GclError, Result};
use crate::rng::{stream, StreamName};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub intra_spread: f64,
    pub inter_spread: f64,
    /// Norm of the offset shared by all speakers.
    pub shared_offset: f64,
    /// Utterance gains are drawn log-uniformly from `[1/max_gain, max_gain]`.
    pub max_gain: f64,
    /// Speakers reserved for verification trials and never seen in training.
    pub eval_speakers: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_speakers: 64,
            utterances_per_speaker: 20,
            feature_dim: 32,
            embedding_dim: 16,
            intra_spread: 0.5,
            inter_spread: 1.0,
            shared_offset: 3.0,
            max_gain: 2.0,
            eval_speakers: 16,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 2 {
            return Err(GclError::Param(format!(
                "at least 2 speakers required, got {}",
                self.n_speakers
            )));
        }
        if self.utterances_per_speaker < 2 || self.feature_dim == 0 || self.embedding_dim == 0 {
            return Err(GclError::Param(
                "need >= 2 utterances per speaker and non-zero dimensions".into(),
            ));
        }
        if !(self.intra_spread > 0.0 && self.inter_spread > 0.0) {
            return Err(GclError::Param("spreads must be positive".into()));
        }
        if !(self.max_gain >= 1.0) || !(self.shared_offset >= 0.0) {
            return Err(GclError::Param("max_gain must be >= 1 and shared_offset >= 0".into()));
        }
        if self.eval_speakers > self.n_speakers {
            return Err(GclError::Param(format!(
                "{} evaluation speakers out of {}",
                self.eval_speakers, self.n_speakers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

/// Utterance features with speaker labels and a train/eval speaker split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub speakers: Vec<usize>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Utterance ids belonging to `split`.
    pub fn ids(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|i| self.splits[*i] == split).collect()
    }

    pub fn speakers_in(&self, split: Split) -> Vec<usize> {
        let mut s: Vec<usize> = self.ids(split).into_iter().map(|i| self.speakers[i]).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn subset(&self, split: Split) -> Dataset {
        let ids = self.ids(split);
        Dataset {
            features: ids.iter().map(|i| self.features[*i].clone()).collect(),
            speakers: ids.iter().map(|i| self.speakers[*i]).collect(),
            splits: vec![split; ids.len()],
        }
    }
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            scale * v
        })
        .collect()
}

pub fn synth_dataset(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = stream(config.seed, StreamName::Data);
    let f = config.feature_dim;
    let raw_offset = normal_vec(&mut rng, f, 1.0);
    let offset_norm = raw_offset.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let offset: Vec<f64> = raw_offset
        .iter()
        .map(|v| v * config.shared_offset / offset_norm)
        .collect();
    let log_gain = config.max_gain.ln();

    let first_eval = config.n_speakers - config.eval_speakers;
    let mut data = Dataset {
        features: Vec::with_capacity(config.n_speakers * config.utterances_per_speaker),
        speakers: Vec::new(),
        splits: Vec::new(),
    };
    for speaker in 0..config.n_speakers {
        let mean = normal_vec(&mut rng, f, config.inter_spread);
        for _ in 0..config.utterances_per_speaker {
            let noise = normal_vec(&mut rng, f, config.intra_spread);
            let gain = if log_gain > 0.0 {
                rng.random_range(-log_gain..=log_gain).exp()
            } else {
                1.0
            };
            let x = (0..f).map(|d| gain * (offset[d] + mean[d] + noise[d])).collect();
            data.features.push(x);
            data.speakers.push(speaker);
            data.splits.push(if speaker < first_eval { Split::Train } else { Split::Eval });
        }
    }
    Ok(data)
}

/// Training speakers split into a labeled subset of `labeled_speakers`
/// speakers and the unlabeled utterances of everyone else.
#[derive(Debug, Clone)]
pub struct LabelSplit {
    pub labeled: LabeledSet,
    pub unlabeled: Vec<Vec<f64>>,
    pub labeled_speakers: Vec<usize>,
}

/// Keeps labels for `labeled_speakers` randomly chosen training speakers and
/// strips them from the rest. Evaluation speakers are excluded.
pub fn hide_labels<R: Rng + ?Sized>(data: &Dataset, labeled_speakers: usize, rng: &mut R) -> Result<LabelSplit> {
    let speakers = data.speakers_in(Split::Train);
    if labeled_speakers > speakers.len() {
        return Err(GclError::Param(format!(
            "{labeled_speakers} labeled speakers requested, {} available",
            speakers.len()
        )));
    }
    let mut chosen: Vec<usize> = index::sample(rng, speakers.len(), labeled_speakers)
        .into_iter()
        .map(|i| speakers[i])
        .collect();
    chosen.sort_unstable();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut unlabeled = Vec::new();
    for id in data.ids(Split::Train) {
        let s = data.speakers[id];
        if chosen.binary_search(&s).is_ok() {
            features.push(data.features[id].clone());
            labels.push(s);
        } else {
            unlabeled.push(data.features[id].clone());
        }
    }
    Ok(LabelSplit {
        labeled: LabeledSet::new(features, labels)?,
        unlabeled,
        labeled_speakers: chosen,
    })
}
