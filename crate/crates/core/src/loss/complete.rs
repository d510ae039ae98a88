//! General row-wise form: `L = (1/M) sum_a sigma * Psi(sum_b score(z_a, z_b; alpha_ab))`.
//!
//! With suitable scorers and `Psi` this reproduces margin losses such as the
//! triplet loss (type 2 affinity) and the pairwise Siamese contrastive loss
//! (type 1 affinity).

use std::fmt;
use std::sync::Arc;

use crate::affinity::{validate, AffinityMatrix, AffinityValues};
use crate::batch::RepresentationBatch;
use crate::error::{GclError, Result};

use super::LossReport;

pub type ScoreFn = dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum Scorer {
    /// `alpha * ||z - z'||^2`
    WeightedSqDistance,
    /// `alpha * d^2` for `alpha > 0`, `|alpha| * max(0, margin - d)^2` for
    /// `alpha < 0`, with `d` the Euclidean distance.
    Hadsell { margin: f64 },
    Custom(Arc<ScoreFn>),
}

impl fmt::Debug for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scorer::WeightedSqDistance => f.write_str("WeightedSqDistance"),
            Scorer::Hadsell { margin } => write!(f, "Hadsell {{ margin: {margin} }}"),
            Scorer::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Scorer {
    fn score(&self, a: &[f64], b: &[f64], alpha: f64) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self {
            Scorer::WeightedSqDistance => alpha * sq,
            Scorer::Hadsell { margin } => {
                if alpha > 0.0 {
                    alpha * sq
                } else {
                    let gap = (margin - sq.sqrt()).max(0.0);
                    -alpha * gap * gap
                }
            }
            Scorer::Custom(f) => f(a, b, alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psi {
    Identity,
    /// `max(0, x + margin)`
    RampMargin(f64),
    /// `-ln x`
    NegativeLog,
}

impl Psi {
    fn apply(self, x: f64) -> Result<f64> {
        match self {
            Psi::Identity => Ok(x),
            Psi::RampMargin(m) => Ok((x + m).max(0.0)),
            Psi::NegativeLog if x > 0.0 => Ok(-x.ln()),
            Psi::NegativeLog => Err(GclError::Numeric(format!("-ln of non-positive row value {x}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Row values are costs and are minimized as-is.
    Cost,
    /// Row values are rewards; the loss negates them.
    Reward,
}

#[derive(Debug, Clone)]
pub struct CompleteFormSpec {
    pub scorer: Scorer,
    pub psi: Psi,
    pub orientation: Orientation,
}

impl CompleteFormSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.psi, self.orientation) {
            (Psi::RampMargin(m), _) if !(m >= 0.0 && m.is_finite()) => {
                Err(GclError::Param(format!("margin must be non-negative, got {m}")))
            }
            (Psi::RampMargin(_) | Psi::NegativeLog, Orientation::Reward) => Err(GclError::Param(
                "margin and log transforms require cost orientation".into(),
            )),
            _ => match &self.scorer {
                Scorer::Hadsell { margin } if !(*margin >= 0.0 && margin.is_finite()) => {
                    Err(GclError::Param(format!("margin must be non-negative, got {margin}")))
                }
                _ => Ok(()),
            },
        }
    }
}

/// Anchors are all rows with at least one non-zero affinity; `M` is their count.
pub fn complete_form(
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    spec: &CompleteFormSpec,
) -> Result<LossReport> {
    spec.validate()?;
    validate(affinity, batch, AffinityValues::General)?;
    let n = batch.len();
    let sigma = match spec.orientation {
        Orientation::Cost => 1.0,
        Orientation::Reward => -1.0,
    };
    let mut per_anchor = vec![None; n];
    let mut total = 0.0;
    let mut active = 0;
    for (a, row) in affinity.rows().enumerate() {
        if row.iter().all(|v| *v == 0.0) {
            continue;
        }
        let za = batch.embedding(a);
        let mut sum = 0.0;
        for (b, alpha) in row.iter().enumerate() {
            if *alpha != 0.0 {
                sum += spec.scorer.score(za, batch.embedding(b), *alpha);
            }
        }
        let value = sigma * spec.psi.apply(sum)?;
        per_anchor[a] = Some(value);
        total += value;
        active += 1;
    }
    let loss = if active == 0 { 0.0 } else { total / active as f64 };
    if !loss.is_finite() {
        return Err(GclError::Numeric(format!("complete-form loss {loss}")));
    }
    Ok(LossReport {
        loss,
        mean_ratio: loss,
        per_anchor,
        active_anchors: active,
        degenerate: active == 0,
        grad_z: None,
        grad_kernel: None,
    })
}
