//! Generalized contrastive loss.
//!
//! For every active anchor `a` the loss forms the ratio
//!
//! ```text
//! r_a = sum_b max(0, alpha_ab) * exp(e_ab) / (sum_b |alpha_ab| * exp(e_ab) + eps)
//! ```
//!
//! and reports `loss = -(1/M) * sum_a T(r_a)` where `T` is the identity or the
//! natural log. Each row is evaluated after subtracting its largest exponent
//! over the anchor's affinity support; `eps` guards that shifted denominator,
//! so the loss is invariant to adding a constant to an anchor's exponents.

mod complete;
mod gradcheck;
mod reference;

pub use complete::{complete_form, CompleteFormSpec, Orientation, Psi, Scorer};
pub use gradcheck::{
    check_gcl_gradients, extrapolated_gradient, finite_diff_check, numerical_gradient, GclParamLayout, GradCheck, Stencil,
};
pub use reference::{oracle_episode, oracle_ntxent};

use crate::affinity::{validate, AffinityMatrix, AffinityValues, AnchorMask};
use crate::batch::{Embedding, RepresentationBatch};
use crate::error::{GclError, Result};
use crate::kernel::{backprop, exponent_matrix, ExponentMatrix, KernelGrad, KernelParams};

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorNormalization {
    /// Divide by the number of active anchors.
    #[default]
    ActiveCount,
    /// Divide by the batch size `2(N + N')`, active or not.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatioTransform {
    /// `T(r) = r`
    #[default]
    NegatedRatio,
    /// `T(r) = ln r`
    NegatedLogRatio,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GclOptions {
    pub epsilon: f64,
    pub normalization: AnchorNormalization,
    pub transform: RatioTransform,
    pub values: AffinityValues,
}

impl Default for GclOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            normalization: AnchorNormalization::default(),
            transform: RatioTransform::default(),
            values: AffinityValues::default(),
        }
    }
}

impl GclOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(GclError::Param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// Mean of the un-negated per-anchor ratios under the same normalization.
    pub mean_ratio: f64,
    /// Ratio (or complete-form row value) per batch entry; `None` for inactive anchors.
    pub per_anchor: Vec<Option<f64>>,
    pub active_anchors: usize,
    /// Set when no anchor was active and the loss defaulted to zero.
    pub degenerate: bool,
    pub grad_z: Option<Vec<Embedding>>,
    pub grad_kernel: Option<KernelGrad>,
}

impl LossReport {
    /// Euclidean norm over all embedding gradients; zero when absent.
    pub fn grad_norm(&self) -> f64 {
        self.grad_z
            .iter()
            .flatten()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

struct Evaluation {
    report: LossReport,
    grad_e: Option<Vec<f64>>,
}

/// Evaluates the ratio loss from precomputed exponents.
pub fn gcl_from_exponents(
    exps: &ExponentMatrix,
    affinity: &AffinityMatrix,
    mask: &AnchorMask,
    options: &GclOptions,
) -> Result<LossReport> {
    Ok(evaluate(exps, affinity, mask, options, false)?.report)
}

fn evaluate(
    exps: &ExponentMatrix,
    affinity: &AffinityMatrix,
    mask: &AnchorMask,
    options: &GclOptions,
    want_grad: bool,
) -> Result<Evaluation> {
    options.validate()?;
    let n = affinity.size();
    if exps.size() != n || mask.len() != n {
        return Err(GclError::Shape(format!(
            "exponents {} / mask {} / affinity {n}",
            exps.size(),
            mask.len()
        )));
    }
    let active = mask.active_count();
    let denom = match options.normalization {
        AnchorNormalization::ActiveCount => active,
        AnchorNormalization::Fixed => n,
    };
    let mut per_anchor = vec![None; n];
    let mut grad_e = want_grad.then(|| vec![0.0; n * n]);
    if active == 0 || denom == 0 {
        return Ok(Evaluation {
            report: LossReport {
                loss: 0.0,
                mean_ratio: 0.0,
                per_anchor,
                active_anchors: 0,
                degenerate: true,
                grad_z: None,
                grad_kernel: None,
            },
            grad_e,
        });
    }
    let scale = 1.0 / denom as f64;
    let eps = options.epsilon;

    let mut term_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut weights = vec![0.0; n];
    for a in 0..n {
        if !mask.is_active(a) {
            continue;
        }
        let alpha = affinity.row(a);
        let e = exps.row(a);
        let mut argmax = usize::MAX;
        let mut shift = f64::NEG_INFINITY;
        for b in 0..n {
            if alpha[b] != 0.0 && e[b] > shift {
                shift = e[b];
                argmax = b;
            }
        }
        let mut pos = 0.0;
        let mut all = 0.0;
        for b in 0..n {
            weights[b] = 0.0;
            if alpha[b] != 0.0 {
                let w = (e[b] - shift).exp();
                weights[b] = w;
                pos += alpha[b].max(0.0) * w;
                all += alpha[b].abs() * w;
            }
        }
        let den = all + eps;
        let r = pos / den;
        if !r.is_finite() || r <= 0.0 {
            return Err(GclError::Numeric(format!("anchor {a} ratio {r}")));
        }
        per_anchor[a] = Some(r);
        ratio_sum += r;
        let (term, d_term) = match options.transform {
            RatioTransform::NegatedRatio => (r, 1.0),
            RatioTransform::NegatedLogRatio => (r.ln(), 1.0 / r),
        };
        term_sum += term;

        if let Some(ge) = grad_e.as_mut() {
            let d_r = -scale * d_term;
            let row = &mut ge[a * n..(a + 1) * n];
            for b in 0..n {
                if alpha[b] != 0.0 {
                    row[b] = d_r * (alpha[b].max(0.0) - r * alpha[b].abs()) * weights[b] / den;
                }
            }
            // The shift only survives through eps.
            row[argmax] -= d_r * r * eps / den;
        }
    }
    let loss = -scale * term_sum;
    if !loss.is_finite() {
        return Err(GclError::Numeric(format!("loss {loss}")));
    }
    Ok(Evaluation {
        report: LossReport {
            loss,
            mean_ratio: scale * ratio_sum,
            per_anchor,
            active_anchors: active,
            degenerate: false,
            grad_z: None,
            grad_kernel: None,
        },
        grad_e,
    })
}

fn prepare(
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    params: &KernelParams,
    options: &GclOptions,
) -> Result<(ExponentMatrix, AnchorMask)> {
    options.validate()?;
    let mask = validate(affinity, batch, options.values)?;
    let exps = exponent_matrix(batch, params)?;
    Ok((exps, mask))
}

/// Loss value without gradients.
pub fn gcl(
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    params: &KernelParams,
    options: &GclOptions,
) -> Result<LossReport> {
    let (exps, mask) = prepare(batch, affinity, params, options)?;
    gcl_from_exponents(&exps, affinity, &mask, options)
}

/// Loss value plus gradients with respect to every batch embedding and the
/// trainable kernel parameters.
pub fn gcl_grad(
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    params: &KernelParams,
    options: &GclOptions,
) -> Result<LossReport> {
    let (exps, mask) = prepare(batch, affinity, params, options)?;
    let Evaluation { mut report, grad_e } = evaluate(&exps, affinity, &mask, options, true)?;
    let grad_e = grad_e.unwrap_or_default();
    // Offsets cancel exactly in every ratio.
    let (grad_z, grad_kernel) = backprop(batch, params, &grad_e, 0.0)?;
    report.grad_z = Some(grad_z);
    report.grad_kernel = Some(grad_kernel);
    Ok(report)
}

fn check_semi_layout(batch: &RepresentationBatch, affinity: &AffinityMatrix) -> Result<()> {
    if (affinity.n_labeled(), affinity.n_unlabeled()) != (batch.n_labeled(), batch.n_unlabeled()) {
        return Err(GclError::Composition(format!(
            "affinity groups ({}, {}) vs batch groups ({}, {})",
            affinity.n_labeled(),
            affinity.n_unlabeled(),
            batch.n_labeled(),
            batch.n_unlabeled()
        )));
    }
    Ok(())
}

/// Semi-supervised loss over a merged labeled + unlabeled batch. Identical to
/// [`gcl`] once the group layout of batch and affinity agree.
pub fn gcl_semi(
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    params: &KernelParams,
    options: &GclOptions,
) -> Result<LossReport> {
    check_semi_layout(batch, affinity)?;
    gcl(batch, affinity, params, options)
}

pub fn gcl_semi_grad(
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    params: &KernelParams,
    options: &GclOptions,
) -> Result<LossReport> {
    check_semi_layout(batch, affinity)?;
    gcl_grad(batch, affinity, params, options)
}
