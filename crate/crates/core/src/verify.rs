//! Self-check suites: oracle equivalence, semi-supervised reductions,
//! finite-difference gradients, complete-form reconstructions and EER.
//!
//! Loss-based suites take the implementation under test as a parameter so a
//! deliberately broken implementation can be shown to fail them.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::affinity::{
    semi_affinity, type1_affinity, type2_affinity, type3_affinity, type4_affinity, AffinityMatrix, UnlabeledBlock,
};
use crate::batch::{build_prototype_batch, merge_semi_batch, Group, RepresentationBatch};
use crate::error::Result;
use crate::eval::{eer, ScoredTrial};
use crate::kernel::{KernelKind, KernelParams, Projection};
use crate::loss::{
    complete_form, finite_diff_check, gcl_grad, oracle_episode, oracle_ntxent, CompleteFormSpec, GclOptions,
    GclParamLayout, LossReport, Orientation, Psi, RatioTransform, Scorer, Stencil,
};
use crate::rng::{stream, StreamName};

/// A GCL implementation: value plus embedding and kernel gradients.
pub trait LossUnderTest {
    fn evaluate(
        &self,
        batch: &RepresentationBatch,
        affinity: &AffinityMatrix,
        params: &KernelParams,
        options: &GclOptions,
    ) -> Result<LossReport>;
}

/// The crate's own [`gcl_grad`].
pub struct Gcl;

impl LossUnderTest for Gcl {
    fn evaluate(
        &self,
        batch: &RepresentationBatch,
        affinity: &AffinityMatrix,
        params: &KernelParams,
        options: &GclOptions,
    ) -> Result<LossReport> {
        gcl_grad(batch, affinity, params, options)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    /// Largest observed error.
    pub worst: f64,
    /// Errors must stay strictly below this.
    pub threshold: f64,
    pub passed: bool,
    pub elapsed: Duration,
    /// First failure, if any.
    pub detail: Option<String>,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} {:>4} cases  worst {:.3e} (limit {:.0e})  {:.1} ms",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.threshold,
            self.elapsed.as_secs_f64() * 1e3
        )?;
        if let Some(d) = &self.detail {
            write!(f, "  [{d}]")?;
        }
        Ok(())
    }
}

struct Tally {
    name: &'static str,
    threshold: f64,
    cases: usize,
    worst: f64,
    detail: Option<String>,
    start: Instant,
}

impl Tally {
    fn new(name: &'static str, threshold: f64) -> Self {
        Self {
            name,
            threshold,
            cases: 0,
            worst: 0.0,
            detail: None,
            start: Instant::now(),
        }
    }

    fn record(&mut self, case: usize, outcome: Result<f64>) {
        self.cases += 1;
        match outcome {
            Ok(err) => {
                let err = if err.is_nan() { f64::INFINITY } else { err };
                if err > self.worst {
                    self.worst = err;
                }
                if err >= self.threshold && self.detail.is_none() {
                    self.detail = Some(format!("case {case}: error {err:.3e}"));
                }
            }
            Err(e) => {
                self.worst = f64::INFINITY;
                if self.detail.is_none() {
                    self.detail = Some(format!("case {case}: {e}"));
                }
            }
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name,
            cases: self.cases,
            worst: self.worst,
            threshold: self.threshold,
            passed: self.worst < self.threshold && self.detail.is_none(),
            elapsed: self.start.elapsed(),
            detail: self.detail,
        }
    }
}

fn gauss<R: RngCore>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v
        })
        .collect()
}

fn random_pairs<R: RngCore>(rng: &mut R, n: usize, dim: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n).map(|_| (gauss(rng, dim), gauss(rng, dim))).collect()
}

fn random_projection<R: RngCore>(rng: &mut R, out_dim: usize, in_dim: usize) -> Projection {
    let scale = 1.0 / (in_dim as f64).sqrt();
    let w = gauss(rng, out_dim * in_dim).into_iter().map(|v| v * scale).collect();
    Projection::new(out_dim, in_dim, w).expect("shape matches")
}

/// `I + 0.3 G / sqrt(dim)`: a perturbed identity head. Dense Gaussian heads
/// can nearly annihilate an embedding, and cosine curvature near a zero
/// vector then swamps a central difference at h = 1e-4.
fn perturbed_identity<R: RngCore>(rng: &mut R, dim: usize) -> Projection {
    let scale = 0.3 / (dim as f64).sqrt();
    let mut w: Vec<f64> = gauss(rng, dim * dim).into_iter().map(|v| v * scale).collect();
    for i in 0..dim {
        w[i * dim + i] += 1.0;
    }
    Projection::new(dim, dim, w).expect("shape matches")
}

fn random_kernel<R: RngCore>(rng: &mut R, kind: KernelKind, dim: usize) -> KernelParams {
    match kind {
        KernelKind::SqEuclid => KernelParams::sq_euclid(),
        KernelKind::CosineTemp => KernelParams::cosine_temp(0.5, Some(perturbed_identity(rng, dim))),
        KernelKind::AffineCosine => KernelParams::affine_cosine(10.0, -5.0),
    }
}

/// Prototype batches with sq-euclid and type 3 against the direct episode loss.
pub fn episode_equivalence(imp: &dyn LossUnderTest, cases: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, StreamName::Data);
    let mut tally = Tally::new("episode-oracle", 1e-10);
    for case in 0..cases {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(2..=4);
        let d = rng.random_range(2..=16);
        let encoded: Vec<Vec<Vec<f64>>> = (0..n).map(|_| (0..k).map(|_| gauss(&mut rng, d)).collect()).collect();
        tally.record(
            case,
            (|| {
                let batch = build_prototype_batch(&encoded)?;
                let ours = imp
                    .evaluate(&batch, &type3_affinity(n)?, &KernelParams::sq_euclid(), &GclOptions::default())?
                    .loss;
                Ok((ours - oracle_episode(&batch)?).abs())
            })(),
        );
    }
    tally.finish()
}

/// Augmented-pair batches with cosine-temperature and type 4 against NT-Xent.
pub fn ntxent_equivalence(imp: &dyn LossUnderTest, cases: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, StreamName::Augment);
    let mut tally = Tally::new("ntxent-oracle", 1e-10);
    for case in 0..cases {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(2..=16);
        let tau = rng.random_range(0.1..=1.0);
        let proj = if rng.random_bool(0.5) {
            let out = rng.random_range(2..=16);
            Some(random_projection(&mut rng, out, d))
        } else {
            None
        };
        let pairs = random_pairs(&mut rng, n, d);
        tally.record(
            case,
            (|| {
                let batch = RepresentationBatch::from_pairs(Group::Unlabeled, pairs)?;
                let params = KernelParams::cosine_temp(tau, proj);
                let ours = imp
                    .evaluate(&batch, &type4_affinity(n)?, &params, &GclOptions::default())?
                    .loss;
                Ok((ours - oracle_ntxent(&batch, &params)?).abs())
            })(),
        );
    }
    tally.finish()
}

/// The semi-supervised affinity with one group empty must reproduce the
/// single-group loss bit for bit. The reported error is 0 or 1.
pub fn semi_reduction(imp: &dyn LossUnderTest, cases: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, StreamName::Split);
    let mut tally = Tally::new("semi-reduction", 0.5);
    for case in 0..cases {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(2..=8);
        let kind = KernelKind::ALL[case % 3];
        let params = random_kernel(&mut rng, kind, d);
        let labeled_side = case % 2 == 0;
        // The relaxed unlabeled block differs from NT-Xent by design, so it
        // only takes part when the unlabeled group is empty.
        let block = if labeled_side && rng.random_bool(0.5) {
            UnlabeledBlock::Relaxed
        } else {
            UnlabeledBlock::Verbatim
        };
        let options = GclOptions {
            transform: if case % 2 == 0 {
                RatioTransform::NegatedRatio
            } else {
                RatioTransform::NegatedLogRatio
            },
            ..Default::default()
        };
        let pairs = random_pairs(&mut rng, n, d);
        tally.record(
            case,
            (|| {
                let empty = RepresentationBatch::empty(d);
                let (single, merged, aff) = if labeled_side {
                    let z0 = RepresentationBatch::from_pairs(Group::Labeled, pairs)?;
                    let merged = merge_semi_batch(&z0, &empty)?;
                    (z0, merged, semi_affinity(n, 0, block)?)
                } else {
                    let z1 = RepresentationBatch::from_pairs(Group::Unlabeled, pairs)?;
                    let merged = merge_semi_batch(&empty, &z1)?;
                    (z1, merged, semi_affinity(0, n, block)?)
                };
                let via_semi = imp.evaluate(&merged, &aff, &params, &options)?;
                let direct = imp.evaluate(&single, &type4_affinity(n)?, &params, &options)?;
                let same_grad = via_semi.grad_z == direct.grad_z;
                Ok(if via_semi.loss.to_bits() == direct.loss.to_bits() && same_grad {
                    0.0
                } else {
                    1.0
                })
            })(),
        );
    }
    tally.finish()
}

fn gradient_error(
    imp: &dyn LossUnderTest,
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    params: &KernelParams,
    options: &GclOptions,
    h: f64,
    stencil: Stencil,
) -> Result<f64> {
    let report = imp.evaluate(batch, affinity, params, options)?;
    let mut analytic: Vec<f64> = report.grad_z.iter().flatten().flatten().copied().collect();
    let kg = report.grad_kernel.unwrap_or_default();
    match (params.kind, &params.proj) {
        (KernelKind::AffineCosine, _) => analytic.extend([kg.gamma, kg.beta]),
        (KernelKind::CosineTemp, Some(_)) => analytic.extend(kg.proj.unwrap_or_default()),
        _ => {}
    }
    let layout = GclParamLayout::new(batch, params);
    let check = finite_diff_check(
        |x| {
            let (b, p) = layout.unflatten(x)?;
            Ok(imp.evaluate(&b, affinity, &p, options)?.loss)
        },
        &layout.flatten(),
        &analytic,
        h,
        stencil,
    )?;
    Ok(check.max_rel_error)
}

/// Embedding standard deviation in the gradient suite. Together with
/// `gamma <= 5` it keeps ratios away from saturation, where gradients shrink
/// to the size of the finite-difference rounding noise.
pub const GRADIENT_SCALE: f64 = 0.7;

fn scaled_pairs<R: RngCore>(rng: &mut R, n: usize, dim: usize, scale: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    random_pairs(rng, n, dim)
        .into_iter()
        .map(|(a, b)| (a.iter().map(|v| v * scale).collect(), b.iter().map(|v| v * scale).collect()))
        .collect()
}

/// Affinity families exercised by the gradient suite.
pub const GRADIENT_AFFINITIES: [&str; 5] = ["type1", "type2", "type3", "type4", "semi"];

/// Finite differences with base step h = 1e-4 against analytic gradients for
/// every kernel x affinity x ratio-transform combination, embeddings and
/// kernel parameters included.
pub fn gradient_suite(imp: &dyn LossUnderTest, cases: usize, seed: u64, stencil: Stencil) -> SuiteResult {
    let mut rng = stream(seed, StreamName::Init);
    let mut tally = Tally::new("gradients", 1e-4);
    for case in 0..cases {
        let kind = KernelKind::ALL[case % 3];
        let family = GRADIENT_AFFINITIES[(case / 3) % GRADIENT_AFFINITIES.len()];
        let transform = if (case / 15) % 2 == 0 {
            RatioTransform::NegatedRatio
        } else {
            RatioTransform::NegatedLogRatio
        };
        let n = rng.random_range(2..=4);
        let d = rng.random_range(2..=5);
        let params = match kind {
            KernelKind::AffineCosine => KernelParams::affine_cosine(rng.random_range(1.0..=5.0), -5.0),
            other => random_kernel(&mut rng, other, d),
        };
        let n_unl = rng.random_range(1..=3);
        let lab = scaled_pairs(&mut rng, n, d, GRADIENT_SCALE);
        let unl = scaled_pairs(&mut rng, n_unl, d, GRADIENT_SCALE);
        let options = GclOptions {
            transform,
            ..Default::default()
        };
        tally.record(
            case,
            (|| {
                let (batch, aff) = match family {
                    "semi" => (
                        merge_semi_batch(
                            &RepresentationBatch::from_pairs(Group::Labeled, lab)?,
                            &RepresentationBatch::from_pairs(Group::Unlabeled, unl)?,
                        )?,
                        semi_affinity(n, n_unl, UnlabeledBlock::Verbatim)?,
                    ),
                    other => {
                        let aff = match other {
                            "type1" => type1_affinity(n)?,
                            "type2" => type2_affinity(n)?,
                            "type3" => type3_affinity(n)?,
                            _ => type4_affinity(n)?,
                        };
                        (RepresentationBatch::from_pairs(Group::Labeled, lab)?, aff)
                    }
                };
                gradient_error(imp, &batch, &aff, &params, &options, 1e-4, stencil)
            })(),
        );
    }
    tally.finish()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Direct triplet loss over the cyclic batch: anchor `z[i][k]`, positive
/// `z[i][1-k]`, negative `z[i+1][1-k]`.
pub fn direct_triplet(pairs: &[(Vec<f64>, Vec<f64>)], margin: f64) -> f64 {
    let n = pairs.len();
    let view = |i: usize, k: usize| if k == 0 { &pairs[i].0 } else { &pairs[i].1 };
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..2 {
            let pos = sq_dist(view(i, k), view(i, 1 - k));
            let neg = sq_dist(view(i, k), view((i + 1) % n, 1 - k));
            total += (pos - neg + margin).max(0.0);
        }
    }
    total / (2 * n) as f64
}

/// Direct Hadsell contrastive loss: genuine pairs `(z[i][0], z[i][1])`,
/// impostor pairs `(z[i][1], z[i+1][0])`.
pub fn direct_siamese(pairs: &[(Vec<f64>, Vec<f64>)], margin: f64) -> f64 {
    let n = pairs.len();
    let mut total = 0.0;
    for i in 0..n {
        total += sq_dist(&pairs[i].0, &pairs[i].1);
        let d = sq_dist(&pairs[i].1, &pairs[(i + 1) % n].0).sqrt();
        total += (margin - d).max(0.0).powi(2);
    }
    total / (2 * n) as f64
}

/// Triplet (type 2) and Siamese (type 1) reconstructions through the
/// complete form, `cases` random batches each.
pub fn complete_form_reductions(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, StreamName::Trials);
    let mut tally = Tally::new("complete-form", 1e-10);
    for case in 0..2 * cases {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(2..=16);
        let margin = rng.random_range(0.0..=(2.0 * d as f64));
        let pairs = random_pairs(&mut rng, n, d);
        tally.record(
            case,
            (|| {
                let batch = RepresentationBatch::from_pairs(Group::Labeled, pairs.clone())?;
                let (aff, spec, direct) = if case % 2 == 0 {
                    let spec = CompleteFormSpec {
                        scorer: Scorer::WeightedSqDistance,
                        psi: Psi::RampMargin(margin),
                        orientation: Orientation::Cost,
                    };
                    (type2_affinity(n)?, spec, direct_triplet(&pairs, margin))
                } else {
                    let m = margin.sqrt();
                    let spec = CompleteFormSpec {
                        scorer: Scorer::Hadsell { margin: m },
                        psi: Psi::Identity,
                        orientation: Orientation::Cost,
                    };
                    (type1_affinity(n)?, spec, direct_siamese(&pairs, m))
                };
                Ok((complete_form(&batch, &aff, &spec)?.loss - direct).abs())
            })(),
        );
    }
    tally.finish()
}

/// Worked EER examples plus invariance under increasing score transforms
/// and under swapping labels together with negating scores.
pub fn eer_suite(random_sets: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, StreamName::Trials);
    let mut tally = Tally::new("eer", 1e-12);
    let trials = |t: &[f64], n: &[f64]| -> Vec<ScoredTrial> {
        t.iter()
            .map(|s| ScoredTrial { score: *s, target: true })
            .chain(n.iter().map(|s| ScoredTrial { score: *s, target: false }))
            .collect()
    };
    let examples = [
        (trials(&[0.9, 0.8], &[0.1, 0.2]), 0.0),
        (trials(&[0.9, 0.2], &[0.8, 0.1]), 0.5),
    ];
    let mut case = 0;
    for (set, expected) in examples {
        tally.record(case, eer(&set).map(|r| (r.eer - expected).abs()));
        case += 1;
    }
    let shuffled: Vec<ScoredTrial> = (0..20000)
        .map(|_| ScoredTrial {
            score: rng.random::<f64>(),
            target: rng.random_bool(0.5),
        })
        .collect();
    // Sampling noise at n = 20000 is about 0.005; report excess beyond 0.03.
    tally.record(case, eer(&shuffled).map(|r| ((r.eer - 0.5).abs() - 0.03).max(0.0)));
    case += 1;

    let transforms: [fn(f64) -> f64; 4] = [|x| x.exp(), |x| x * x * x, |x| 3.0 * x - 7.0, |x| x.atan()];
    for set_idx in 0..random_sets {
        let n = rng.random_range(4..=60);
        let shift = rng.random_range(0.0..2.0);
        let set: Vec<ScoredTrial> = (0..n)
            .map(|i| {
                let target = if i < 2 { i == 0 } else { rng.random_bool(0.5) };
                let v: f64 = StandardNormal.sample(&mut rng);
                // Coarse rounding produces ties.
                let score = ((v + if target { shift } else { 0.0 }) * 4.0).round() / 4.0;
                ScoredTrial { score, target }
            })
            .collect();
        let base = eer(&set);
        let f = transforms[set_idx % transforms.len()];
        let mapped: Vec<ScoredTrial> = set
            .iter()
            .map(|s| ScoredTrial {
                score: f(s.score),
                target: s.target,
            })
            .collect();
        let mirrored: Vec<ScoredTrial> = set
            .iter()
            .map(|s| ScoredTrial {
                score: -s.score,
                target: !s.target,
            })
            .collect();
        tally.record(
            case,
            (|| {
                let e = base?.eer;
                Ok((eer(&mapped)?.eer - e).abs().max((eer(&mirrored)?.eer - e).abs()))
            })(),
        );
        case += 1;
    }
    tally.finish()
}

/// Case counts used by the command-line verifier.
pub const DEFAULT_CASES: usize = 100;

pub fn run_all(imp: &dyn LossUnderTest, seed: u64) -> Vec<SuiteResult> {
    vec![
        episode_equivalence(imp, DEFAULT_CASES, seed),
        ntxent_equivalence(imp, DEFAULT_CASES, seed),
        semi_reduction(imp, DEFAULT_CASES, seed),
        gradient_suite(imp, DEFAULT_CASES, seed, Stencil::Extrapolated),
        complete_form_reductions(50, seed),
        eer_suite(20, seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_losses_hand_values() {
        let pairs = vec![(vec![0.0, 0.0], vec![0.0, 1.0]), (vec![3.0, 0.0], vec![3.0, 0.5])];
        // Triplet rows: (1 - 9.25 + 10), (1 - 10 + 10), (0.25 - 10 + 10), (0.25 - 9.25 + 10).
        let t = direct_triplet(&pairs, 10.0);
        assert!((t - (1.75 + 1.0 + 0.25 + 1.0) / 4.0).abs() < 1e-12);
        // Genuine: 1 + 0.25; impostor: (0,1)-(3,0) has d = sqrt(10) > 1, (3,0.5)-(0,0) also.
        assert!((direct_siamese(&pairs, 1.0) - 1.25 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn suites_pass_on_small_counts() {
        for r in [
            episode_equivalence(&Gcl, 5, 1),
            ntxent_equivalence(&Gcl, 5, 1),
            semi_reduction(&Gcl, 6, 1),
            gradient_suite(&Gcl, 30, 1, Stencil::Extrapolated),
            complete_form_reductions(5, 1),
            eer_suite(4, 1),
        ] {
            assert!(r.passed, "{r}");
        }
    }
}



