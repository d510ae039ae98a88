//! Per-sample view augmentations for unlabeled utterances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::batch::ViewTransform;
use crate::error::{GclError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationSpec {
    /// Standard deviation of additive Gaussian noise; 0 disables it.
    pub noise_sigma: f64,
    /// Gain drawn uniformly from `[lo, hi]`; `(1, 1)` disables it.
    pub gain_range: (f64, f64),
    /// Probability of zeroing each coordinate; 0 disables it.
    pub dropout_rate: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            noise_sigma: 0.5,
            gain_range: (0.5, 2.0),
            dropout_rate: 0.1,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.gain_range;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(GclError::Param(format!("noise sigma {}", self.noise_sigma)));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(GclError::Param(format!("gain range ({lo}, {hi})")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(GclError::Param(format!("dropout rate {}", self.dropout_rate)));
        }
        Ok(())
    }

    /// Draws one transform: a scheme is picked uniformly among the enabled
    /// ones, then its parameters are sampled for an input of length `dim`.
    pub fn draw<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Transform {
        let mut schemes = Vec::with_capacity(3);
        if self.noise_sigma > 0.0 {
            schemes.push(0);
        }
        if self.gain_range != (1.0, 1.0) {
            schemes.push(1);
        }
        if self.dropout_rate > 0.0 {
            schemes.push(2);
        }
        if schemes.is_empty() {
            return Transform::Identity;
        }
        match schemes[rng.random_range(0..schemes.len())] {
            0 => Transform::Noise(
                (0..dim)
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(rng);
                        self.noise_sigma * v
                    })
                    .collect(),
            ),
            1 => {
                let (lo, hi) = self.gain_range;
                Transform::Gain(if lo == hi { lo } else { rng.random_range(lo..=hi) })
            }
            _ => Transform::Dropout((0..dim).map(|_| rng.random_bool(self.dropout_rate)).collect()),
        }
    }
}

/// A fully materialized transform; applying it is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    Noise(Vec<f64>),
    Gain(f64),
    /// `true` marks coordinates that are zeroed.
    Dropout(Vec<bool>),
}

impl ViewTransform for Transform {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Transform::Identity => x.to_vec(),
            Transform::Noise(n) => x.iter().zip(n).map(|(v, e)| v + e).collect(),
            Transform::Gain(g) => x.iter().map(|v| g * v).collect(),
            Transform::Dropout(mask) => x
                .iter()
                .zip(mask)
                .map(|(v, drop)| if *drop { 0.0 } else { *v })
                .collect(),
        }
    }
}
