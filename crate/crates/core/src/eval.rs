//! Verification trials and equal error rate.

use rand::seq::{index, IndexedRandom};
use rand::Rng;

use crate::error::{GclError, Result};
use crate::kernel::cosine;
use crate::train::{Dataset, Encoder, Split};

/// One enrollment/test pair by utterance id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub target: bool,
    pub a: usize,
    pub b: usize,
}

/// Embedded trial pairs ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub pairs: Vec<(Vec<f64>, Vec<f64>, bool)>,
}

impl TrialSet {
    pub fn embed(trials: &[Trial], embeddings: &[Vec<f64>]) -> Result<Self> {
        let get = |i: usize| {
            embeddings
                .get(i)
                .cloned()
                .ok_or_else(|| GclError::Shape(format!("trial references utterance {i} of {}", embeddings.len())))
        };
        let pairs = trials
            .iter()
            .map(|t| Ok((get(t.a)?, get(t.b)?, t.target)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pairs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTrial {
    pub score: f64,
    pub target: bool,
}

/// Cosine score per pair; a zero-norm embedding scores 0.
pub fn score_trials(trials: &TrialSet) -> Result<Vec<ScoredTrial>> {
    trials
        .pairs
        .iter()
        .map(|(a, b, target)| {
            if a.len() != b.len() {
                return Err(GclError::Shape(format!("trial embeddings of length {} and {}", a.len(), b.len())));
            }
            Ok(ScoredTrial {
                score: cosine(a, b),
                target: *target,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    /// Score at the operating point closest to the crossing.
    pub threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

/// Equal error rate with trials accepted when `score >= threshold`.
///
/// Operating points are visited from the strictest threshold (nothing
/// accepted: FAR 0, FRR 1) down through every distinct score; the EER is
/// read off where FAR - FRR changes sign, interpolating linearly between
/// the two neighbouring points.
pub fn eer(scored: &[ScoredTrial]) -> Result<EerResult> {
    if scored.iter().any(|s| !s.score.is_finite()) {
        return Err(GclError::Numeric("trial score".into()));
    }
    let n_target = scored.iter().filter(|s| s.target).count();
    let n_nontarget = scored.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(GclError::Param(format!(
            "EER needs both classes, got {n_target} target and {n_nontarget} non-target trials"
        )));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|x, y| y.score.total_cmp(&x.score));

    let (nt, nn) = (n_target as f64, n_nontarget as f64);
    let mut accepted_t = 0usize;
    let mut accepted_n = 0usize;
    let mut prev = (0.0, 1.0, f64::INFINITY);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].target {
                accepted_t += 1;
            } else {
                accepted_n += 1;
            }
            i += 1;
        }
        let far = accepted_n as f64 / nn;
        let frr = (n_target - accepted_t) as f64 / nt;
        if far >= frr {
            let (far0, frr0, t0) = prev;
            let d0 = frr0 - far0;
            let d1 = frr - far;
            let alpha = if d0 - d1 > 0.0 { d0 / (d0 - d1) } else { 1.0 };
            let eer = far0 + alpha * (far - far0);
            return Ok(EerResult {
                eer,
                threshold: if alpha < 0.5 && t0.is_finite() { t0 } else { threshold },
                n_target,
                n_nontarget,
            });
        }
        prev = (far, frr, threshold);
    }
    unreachable!("the last operating point accepts everything, so FAR = 1 >= FRR = 0")
}

/// Balanced trial list over the utterances of `split`: `n_pairs / 2`
/// same-speaker pairs, the rest different-speaker pairs.
pub fn build_trials<R: Rng + ?Sized>(data: &Dataset, split: Split, n_pairs: usize, rng: &mut R) -> Result<Vec<Trial>> {
    let ids = data.ids(split);
    let speakers = data.speakers_in(split);
    if speakers.len() < 2 {
        return Err(GclError::Capacity(format!(
            "{} speakers in the {} split, trials need 2",
            speakers.len(),
            split.name()
        )));
    }
    let by_speaker: Vec<Vec<usize>> = speakers
        .iter()
        .map(|s| ids.iter().copied().filter(|i| data.speakers[*i] == *s).collect())
        .collect();
    let multi: Vec<&Vec<usize>> = by_speaker.iter().filter(|u| u.len() >= 2).collect();
    let n_target = n_pairs / 2;
    if n_target > 0 && multi.is_empty() {
        return Err(GclError::Capacity("no speaker has two utterances for a target trial".into()));
    }
    let mut trials = Vec::with_capacity(n_pairs);
    for _ in 0..n_target {
        let utts = multi.choose(rng).expect("non-empty");
        let pick = index::sample(rng, utts.len(), 2);
        trials.push(Trial {
            target: true,
            a: utts[pick.index(0)],
            b: utts[pick.index(1)],
        });
    }
    for _ in n_target..n_pairs {
        let pick = index::sample(rng, by_speaker.len(), 2);
        let (sa, sb) = (&by_speaker[pick.index(0)], &by_speaker[pick.index(1)]);
        trials.push(Trial {
            target: false,
            a: *sa.choose(rng).expect("speaker has utterances"),
            b: *sb.choose(rng).expect("speaker has utterances"),
        });
    }
    Ok(trials)
}

/// Embeds every utterance of `data` with `encoder`.
pub fn embed_dataset(encoder: &Encoder, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    data.features.iter().map(|x| encoder.encode(x)).collect()
}

pub fn evaluate_encoder(encoder: &Encoder, data: &Dataset, trials: &[Trial]) -> Result<EerResult> {
    let set = TrialSet::embed(trials, &embed_dataset(encoder, data)?)?;
    eer(&score_trials(&set)?)
}

/// Separability oracle on raw features: every utterance is assigned to the
/// nearest (by cosine) speaker mean of the trial speakers, and a trial scores
/// the cosine between the two assigned means.
pub fn nearest_mean_eer(data: &Dataset, trials: &[Trial]) -> Result<EerResult> {
    let mut involved: Vec<usize> = trials.iter().flat_map(|t| [t.a, t.b]).collect();
    involved.sort_unstable();
    involved.dedup();
    if involved.last().is_some_and(|i| *i >= data.len()) {
        return Err(GclError::Shape("trial references a missing utterance".into()));
    }
    let mut speakers: Vec<usize> = involved.iter().map(|i| data.speakers[*i]).collect();
    speakers.sort_unstable();
    speakers.dedup();
    let dim = data.feature_dim();
    let means: Vec<Vec<f64>> = speakers
        .iter()
        .map(|s| {
            let rows: Vec<&Vec<f64>> = (0..data.len())
                .filter(|i| data.speakers[*i] == *s)
                .map(|i| &data.features[i])
                .collect();
            (0..dim)
                .map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / rows.len() as f64)
                .collect()
        })
        .collect();
    let assign = |x: &[f64]| -> &Vec<f64> {
        means
            .iter()
            .max_by(|a, b| cosine(x, a).total_cmp(&cosine(x, b)))
            .expect("at least one mean")
    };
    let scored: Vec<ScoredTrial> = trials
        .iter()
        .map(|t| ScoredTrial {
            score: cosine(assign(&data.features[t.a]), assign(&data.features[t.b])),
            target: t.target,
        })
        .collect();
    eer(&scored)
}
