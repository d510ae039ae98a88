use rand::seq::index;
use rand::Rng;

use crate::affinity::{semi_affinity, type3_affinity, type4_affinity, AffinityMatrix, UnlabeledBlock};
use crate::batch::{
    build_augmented_batch, build_prototype_batch, merge_semi_batch, scatter_prototype_grad, two_step_sample,
    LabeledMiniBatch, LabeledSet, RepresentationBatch, UnlabeledMiniBatch,
};
use crate::error::{GclError, Result};
use crate::kernel::{KernelKind, KernelParams, Projection, DEFAULT_BETA, DEFAULT_GAMMA, DEFAULT_TAU};
use crate::loss::{gcl_grad, gcl_semi_grad, GclOptions, LossReport, RatioTransform, DEFAULT_EPSILON};
use crate::rng::{stream, StreamName};

use super::augment::{AugmentationSpec, Transform};
use super::data::{hide_labels, Dataset};
use super::encoder::{Encoder, EncoderShape, ForwardCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Supervised,
    Semi,
    Unsupervised,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Supervised => "supervised",
            Mode::Semi => "semi",
            Mode::Unsupervised => "unsupervised",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Mode::Supervised, Mode::Semi, Mode::Unsupervised]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

/// Affinity used on labeled-only batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupervisedAffinity {
    Episode,
    NtXent,
}

impl SupervisedAffinity {
    pub fn name(self) -> &'static str {
        match self {
            SupervisedAffinity::Episode => "episode",
            SupervisedAffinity::NtXent => "ntxent",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [SupervisedAffinity::Episode, SupervisedAffinity::NtXent]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Number of training speakers that keep their labels; `None` keeps all.
    pub labeled_speakers: Option<usize>,
    /// Share of mini-batch slots given to unlabeled utterances in semi mode.
    pub unlabeled_fraction: f64,
    /// Utterances per mini-batch.
    pub batch_slots: usize,
    /// Utterances per labeled class before prototyping (1 query + K'-1 supports).
    pub samples_per_class: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub kernel: KernelKind,
    pub tau: f64,
    pub gamma_init: f64,
    pub beta_init: f64,
    pub supervised_affinity: SupervisedAffinity,
    pub unlabeled_block: UnlabeledBlock,
    pub transform: RatioTransform,
    pub epsilon: f64,
    pub augmentation: AugmentationSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Supervised,
            labeled_speakers: None,
            unlabeled_fraction: 0.10,
            batch_slots: 40,
            samples_per_class: 3,
            hidden_dim: 64,
            embedding_dim: 16,
            steps: 1500,
            lr: 0.05,
            momentum: 0.9,
            kernel: KernelKind::AffineCosine,
            tau: DEFAULT_TAU,
            gamma_init: DEFAULT_GAMMA,
            beta_init: DEFAULT_BETA,
            supervised_affinity: SupervisedAffinity::Episode,
            unlabeled_block: UnlabeledBlock::Verbatim,
            transform: RatioTransform::NegatedRatio,
            epsilon: DEFAULT_EPSILON,
            augmentation: AugmentationSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return Err(GclError::Param(format!("unlabeled fraction {}", self.unlabeled_fraction)));
        }
        if self.samples_per_class < 2 {
            return Err(GclError::Param("samples_per_class must be at least 2".into()));
        }
        if self.batch_slots == 0 || self.hidden_dim == 0 || self.embedding_dim == 0 {
            return Err(GclError::Param("batch, hidden and embedding sizes must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(GclError::Param(format!("lr {} / momentum {}", self.lr, self.momentum)));
        }
        self.augmentation.validate()?;
        self.initial_kernel().validate()
    }

    /// Unlabeled fraction actually applied for the configured mode.
    pub fn effective_fraction(&self) -> f64 {
        match self.mode {
            Mode::Supervised => 0.0,
            Mode::Semi => self.unlabeled_fraction,
            Mode::Unsupervised => 1.0,
        }
    }

    /// `(labeled classes N, unlabeled samples N')` per mini-batch.
    pub fn batch_layout(&self) -> (usize, usize) {
        let fraction = self.effective_fraction();
        let n_unlabeled = if fraction > 0.0 {
            ((fraction * self.batch_slots as f64).round() as usize).clamp(1, self.batch_slots)
        } else {
            0
        };
        ((self.batch_slots - n_unlabeled) / self.samples_per_class, n_unlabeled)
    }

    pub fn initial_kernel(&self) -> KernelParams {
        match self.kernel {
            KernelKind::SqEuclid => KernelParams::sq_euclid(),
            KernelKind::CosineTemp => {
                KernelParams::cosine_temp(self.tau, Some(Projection::identity(self.embedding_dim)))
            }
            KernelKind::AffineCosine => KernelParams::affine_cosine(self.gamma_init, self.beta_init),
        }
    }

    pub fn loss_options(&self) -> GclOptions {
        GclOptions {
            epsilon: self.epsilon,
            transform: self.transform,
            ..Default::default()
        }
    }
}

/// Draws one mini-batch: `round(fraction * slots)` unlabeled utterances (at
/// least one when the fraction is positive) and as many `K'`-sample labeled
/// classes as fit in the remaining slots.
pub fn compose_semi_minibatch<R: Rng + ?Sized>(
    labeled: &LabeledSet,
    unlabeled: &[Vec<f64>],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(LabeledMiniBatch, UnlabeledMiniBatch)> {
    let (n_classes, n_unlabeled) = config.batch_layout();
    let lab = if n_classes > 0 {
        two_step_sample(labeled, n_classes, config.samples_per_class, rng)?
    } else {
        LabeledMiniBatch {
            labels: Vec::new(),
            samples: Vec::new(),
        }
    };
    if n_unlabeled > unlabeled.len() {
        return Err(GclError::Capacity(format!(
            "{n_unlabeled} unlabeled samples requested, pool holds {}",
            unlabeled.len()
        )));
    }
    let samples = index::sample(rng, unlabeled.len(), n_unlabeled)
        .into_iter()
        .map(|i| unlabeled[i].clone())
        .collect();
    Ok((lab, UnlabeledMiniBatch { samples }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub mode: Mode,
    pub loss: f64,
    pub mean_ratio: f64,
    pub grad_norm: f64,
    pub labeled_per_batch: usize,
    pub unlabeled_per_batch: usize,
    /// Held-out EER measured after this step, when scheduled.
    pub eer_on_val: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub kernel: KernelParams,
    pub log: Vec<StepMetrics>,
}

/// One encoded input kept for backpropagation.
struct Trace {
    input: Vec<f64>,
    cache: ForwardCache,
}

/// Result of one forward/backward pass over a mini-batch.
pub struct StepGradients {
    pub report: LossReport,
    pub encoder: Vec<f64>,
    pub kernel: Vec<f64>,
}

fn kernel_vector(params: &KernelParams) -> Vec<f64> {
    match (params.kind, &params.proj) {
        (KernelKind::AffineCosine, _) => vec![params.gamma, params.beta],
        (KernelKind::CosineTemp, Some(p)) => p.weights.clone(),
        _ => Vec::new(),
    }
}

fn set_kernel_vector(params: &mut KernelParams, v: &[f64]) {
    match params.kind {
        KernelKind::AffineCosine => {
            params.gamma = v[0];
            params.beta = v[1];
            params.clamp_gamma();
        }
        KernelKind::CosineTemp => {
            if let Some(p) = params.proj.as_mut() {
                p.weights.copy_from_slice(v);
            }
        }
        KernelKind::SqEuclid => {}
    }
}

fn minibatch_affinity(config: &TrainConfig, n_labeled: usize, n_unlabeled: usize) -> Result<AffinityMatrix> {
    match config.mode {
        Mode::Semi => semi_affinity(n_labeled, n_unlabeled, config.unlabeled_block),
        Mode::Unsupervised => type4_affinity(n_unlabeled),
        Mode::Supervised => match config.supervised_affinity {
            SupervisedAffinity::Episode => type3_affinity(n_labeled),
            SupervisedAffinity::NtXent => type4_affinity(n_labeled),
        },
    }
}

/// Forward and backward pass for a fixed mini-batch and fixed view transforms.
pub fn minibatch_gradients(
    encoder: &Encoder,
    kernel: &KernelParams,
    config: &TrainConfig,
    labeled: &LabeledMiniBatch,
    unlabeled: &UnlabeledMiniBatch,
    first_views: &[Transform],
    second_views: &[Transform],
) -> Result<StepGradients> {
    let mut traces: Vec<Trace> = Vec::new();
    let mut encoded = Vec::with_capacity(labeled.n_classes());
    for row in &labeled.samples {
        let mut zs = Vec::with_capacity(row.len());
        for x in row {
            let (z, cache) = encoder.forward(x)?;
            traces.push(Trace {
                input: x.clone(),
                cache,
            });
            zs.push(z);
        }
        encoded.push(zs);
    }
    let n_labeled_traces = traces.len();
    let z0 = if encoded.is_empty() {
        RepresentationBatch::empty(encoder.shape().output)
    } else {
        build_prototype_batch(&encoded)?
    };
    let z1 = build_augmented_batch(unlabeled, first_views, second_views, |x| {
        let (z, cache) = encoder.forward(x)?;
        traces.push(Trace {
            input: x.to_vec(),
            cache,
        });
        Ok(z)
    })?;
    let batch = merge_semi_batch(&z0, &z1)?;
    let affinity = minibatch_affinity(config, z0.n_labeled(), z1.n_unlabeled())?;
    let options = config.loss_options();
    let report = match config.mode {
        Mode::Semi => gcl_semi_grad(&batch, &affinity.with_groups(z0.n_labeled(), z1.n_unlabeled())?, kernel, &options)?,
        _ => gcl_grad(&batch, &affinity, kernel, &options)?,
    };

    let grad_z = report.grad_z.clone().unwrap_or_default();
    let cut = 2 * z0.n_labeled();
    let mut per_input: Vec<Vec<f64>> = Vec::with_capacity(traces.len());
    if cut > 0 {
        for row in scatter_prototype_grad(&grad_z[..cut], config.samples_per_class)? {
            per_input.extend(row);
        }
    }
    per_input.extend(grad_z[cut..].iter().cloned());
    debug_assert_eq!(per_input.len(), traces.len());
    debug_assert_eq!(n_labeled_traces, cut / 2 * config.samples_per_class);

    let mut enc_grad = vec![0.0; encoder.params().len()];
    for (trace, g) in traces.iter().zip(&per_input) {
        encoder.backward(&trace.input, &trace.cache, g, &mut enc_grad);
    }
    let kg = report.grad_kernel.clone().unwrap_or_default();
    let kernel_grad = match (kernel.kind, &kernel.proj) {
        (KernelKind::AffineCosine, _) => vec![kg.gamma, kg.beta],
        (KernelKind::CosineTemp, Some(_)) => kg.proj.unwrap_or_default(),
        _ => Vec::new(),
    };
    Ok(StepGradients {
        report,
        encoder: enc_grad,
        kernel: kernel_grad,
    })
}

/// Trains a fresh encoder on the training speakers of `data`.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(data, config, |_, _| Ok(None))
}

/// Like [`train`], calling `after_step(step, encoder)` once each update has
/// been applied; a returned value is logged as that step's `eer_on_val`.
pub fn train_with<F>(data: &Dataset, config: &TrainConfig, mut after_step: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &Encoder) -> Result<Option<f64>>,
{
    config.validate()?;
    let train_speakers = data.speakers_in(super::data::Split::Train).len();
    let labeled_speakers = match config.mode {
        Mode::Unsupervised => 0,
        _ => config.labeled_speakers.unwrap_or(train_speakers),
    };
    let split = hide_labels(data, labeled_speakers, &mut stream(config.seed, StreamName::Split))?;
    if config.batch_layout().1 > 0 && split.unlabeled.is_empty() {
        return Err(GclError::Config(format!(
            "{} mode needs unlabeled speakers; all {train_speakers} training speakers are labeled",
            config.mode.name()
        )));
    }
    let shape = EncoderShape {
        input: data.feature_dim(),
        hidden: config.hidden_dim,
        output: config.embedding_dim,
    };
    let mut encoder = Encoder::init(shape, &mut stream(config.seed, StreamName::Init));
    let mut kernel = config.initial_kernel();
    let mut batches = stream(config.seed, StreamName::Batches);
    let mut augment = stream(config.seed, StreamName::Augment);

    let mut enc_velocity = vec![0.0; encoder.params().len()];
    let mut kernel_params = kernel_vector(&kernel);
    let mut kernel_velocity = vec![0.0; kernel_params.len()];
    let mut log = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let (lab, unl) = compose_semi_minibatch(&split.labeled, &split.unlabeled, config, &mut batches)?;
        let dim = shape.input;
        let first: Vec<Transform> = (0..unl.samples.len())
            .map(|_| config.augmentation.draw(dim, &mut augment))
            .collect();
        let second: Vec<Transform> = (0..unl.samples.len())
            .map(|_| config.augmentation.draw(dim, &mut augment))
            .collect();
        let grads = minibatch_gradients(&encoder, &kernel, config, &lab, &unl, &first, &second).map_err(|e| match e {
            GclError::Numeric(detail) => GclError::Divergence { step, detail },
            other => other,
        })?;
        if !grads.report.loss.is_finite() || grads.encoder.iter().any(|g| !g.is_finite()) {
            return Err(GclError::Divergence {
                step,
                detail: format!("loss {}", grads.report.loss),
            });
        }

        sgd_momentum(encoder.params_mut(), &mut enc_velocity, &grads.encoder, config);
        sgd_momentum(&mut kernel_params, &mut kernel_velocity, &grads.kernel, config);
        set_kernel_vector(&mut kernel, &kernel_params);
        kernel_params = kernel_vector(&kernel);

        log.push(StepMetrics {
            step,
            mode: config.mode,
            loss: grads.report.loss,
            mean_ratio: grads.report.mean_ratio,
            grad_norm: grads.report.grad_norm(),
            labeled_per_batch: lab.n_samples(),
            unlabeled_per_batch: unl.samples.len(),
            eer_on_val: after_step(step, &encoder)?,
        });
    }
    Ok(TrainOutcome { encoder, kernel, log })
}

fn sgd_momentum(params: &mut [f64], velocity: &mut [f64], grad: &[f64], config: &TrainConfig) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = config.momentum * *v + g;
        *p -= config.lr * *v;
    }
}
