use std::fs;
use std::path::Path;

use gcl::affinity::AffinityMatrix;
use gcl::batch::RepresentationBatch;
use gcl::commands::{cmd_eval, cmd_synth, cmd_train, RunPaths};
use gcl::config::RunConfig;
use gcl::io::{parse_checkpoint, parse_metrics, parse_trials, write_checkpoint, write_dataset, Checkpoint};
use gcl::kernel::KernelParams;
use gcl::loss::{gcl_grad, GclOptions, LossReport, Stencil};
use gcl::rng::{stream, StreamName};
use gcl::train::{Dataset, Encoder, EncoderShape, Mode, Split};
use gcl::verify::{episode_equivalence, gradient_suite, run_all, Gcl, LossUnderTest};

fn config(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 11,
        out: dir.to_path_buf(),
        trials: 2000,
        ..RunConfig::default()
    };
    cfg.train.steps = 60;
    cfg
}

#[test]
fn synth_writes_expected_rows_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary = cmd_synth(&config(a.path())).unwrap();
    assert_eq!(summary.utterances, 64 * 20);
    assert_eq!(summary.trials, 2000);
    cmd_synth(&config(b.path())).unwrap();

    let (pa, pb) = (RunPaths::new(a.path()), RunPaths::new(b.path()));
    let dataset = fs::read(&pa.dataset).unwrap();
    assert_eq!(dataset, fs::read(&pb.dataset).unwrap());
    assert_eq!(fs::read(&pa.trials).unwrap(), fs::read(&pb.trials).unwrap());
    // Magic line, column line, one row per utterance.
    assert_eq!(String::from_utf8(dataset).unwrap().lines().count(), 2 + 64 * 20);
    assert_eq!(parse_trials(&fs::read_to_string(&pa.trials).unwrap()).unwrap().len(), 2000);
}

#[test]
fn single_speaker_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.data.n_speakers = 1;
    let err = cmd_synth(&cfg).unwrap_err().to_string();
    assert!(err.contains("speaker"), "{err}");
    assert!(!RunPaths::new(dir.path()).dataset.exists());
}

#[test]
fn zero_steps_checkpoints_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.train.steps = 0;
    cmd_synth(&cfg).unwrap();
    let summary = cmd_train(&cfg).unwrap();
    assert_eq!(summary.steps, 0);

    let ckpt = parse_checkpoint(&fs::read_to_string(RunPaths::new(dir.path()).checkpoint).unwrap()).unwrap();
    let shape = EncoderShape {
        input: 32,
        hidden: cfg.train.hidden_dim,
        output: cfg.train.embedding_dim,
    };
    assert_eq!(ckpt.encoder, Encoder::init(shape, &mut stream(cfg.seed, StreamName::Init)));
    assert_eq!(ckpt.kernel, cfg.training().initial_kernel());
}

#[test]
fn semi_metrics_report_the_unlabeled_share() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.train.mode = Mode::Semi;
    cfg.train.labeled_speakers = Some(16);
    cfg.eval_every = 20;
    cmd_synth(&cfg).unwrap();
    cmd_train(&cfg).unwrap();

    let rows = parse_metrics(&fs::read_to_string(RunPaths::new(dir.path()).metrics).unwrap()).unwrap();
    assert_eq!(rows.len(), 60);
    assert!(rows.iter().all(|r| r.unlabeled_per_batch == Some(4) && r.mode == "semi"));
    let evaluated: Vec<usize> = rows.iter().filter(|r| r.eer_on_val.is_some()).map(|r| r.step).collect();
    assert_eq!(evaluated, vec![19, 39, 59]);
}

#[test]
fn semi_with_every_speaker_labeled_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.train.mode = Mode::Semi;
    cmd_synth(&cfg).unwrap();
    assert!(cmd_train(&cfg).unwrap_err().to_string().contains("unlabeled"));
}

#[test]
fn eval_is_reproducible_and_appends_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    cmd_synth(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let first = cmd_eval(&cfg).unwrap();
    let second = cmd_eval(&cfg).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.n_target + first.n_nontarget, 2000);

    let rows = parse_metrics(&fs::read_to_string(RunPaths::new(dir.path()).metrics).unwrap()).unwrap();
    let tail: Vec<_> = rows.iter().rev().take(2).collect();
    assert!(tail.iter().all(|r| r.loss.is_none() && r.eer_on_val == Some(first.eer)));
}

#[test]
fn untrained_encoder_on_indistinguishable_speakers_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.trials = 10000;
    cfg.data.inter_spread = 1e-9;
    cfg.data.shared_offset = 0.0;
    cfg.train.steps = 0;
    cmd_synth(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let r = cmd_eval(&cfg).unwrap();
    assert!((r.eer - 0.5).abs() < 0.03, "EER {}", r.eer);
}

#[test]
fn separable_toy_checkpoint_scores_zero_eer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let paths = RunPaths::new(dir.path());

    // Four speakers on the axes of the plane, small jitter along the axis.
    let mut data = Dataset {
        features: Vec::new(),
        speakers: Vec::new(),
        splits: Vec::new(),
    };
    let dirs = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    for (s, d) in dirs.iter().enumerate() {
        for k in 0..5 {
            let r = 1.0 + 0.1 * k as f64;
            data.features.push(vec![r * d[0], r * d[1]]);
            data.speakers.push(s);
            data.splits.push(Split::Eval);
        }
    }
    // Nearly linear tanh layer followed by its inverse scale.
    let shape = EncoderShape { input: 2, hidden: 2, output: 2 };
    let params = vec![0.01, 0.0, 0.0, 0.01, 0.0, 0.0, 100.0, 0.0, 0.0, 100.0, 0.0, 0.0];
    let ckpt = Checkpoint {
        encoder: Encoder::from_params(shape, params).unwrap(),
        kernel: KernelParams::sq_euclid(),
    };
    let trials = gcl::eval::build_trials(&data, Split::Eval, 200, &mut stream(1, StreamName::Trials)).unwrap();
    fs::write(&paths.dataset, write_dataset(&data)).unwrap();
    fs::write(&paths.trials, gcl::io::write_trials(&trials)).unwrap();
    fs::write(&paths.checkpoint, write_checkpoint(&ckpt)).unwrap();
    assert_eq!(cmd_eval(&cfg).unwrap().eer, 0.0);
}

/// Deliberately broken loss used to show that the suites catch mutations.
struct SignFlipped;

impl LossUnderTest for SignFlipped {
    fn evaluate(
        &self,
        batch: &RepresentationBatch,
        affinity: &AffinityMatrix,
        params: &KernelParams,
        options: &GclOptions,
    ) -> gcl::Result<LossReport> {
        let mut r = gcl_grad(batch, affinity, params, options)?;
        r.loss = -r.loss;
        if let Some(g) = r.grad_z.as_mut() {
            g.iter_mut().flatten().for_each(|v| *v = -*v);
        }
        Ok(r)
    }
}

/// Correct loss, wrong gradient sign.
struct GradientFlipped;

impl LossUnderTest for GradientFlipped {
    fn evaluate(
        &self,
        batch: &RepresentationBatch,
        affinity: &AffinityMatrix,
        params: &KernelParams,
        options: &GclOptions,
    ) -> gcl::Result<LossReport> {
        let mut r = gcl_grad(batch, affinity, params, options)?;
        if let Some(g) = r.grad_z.as_mut() {
            g.iter_mut().flatten().for_each(|v| *v = -*v);
        }
        Ok(r)
    }
}

#[test]
fn suites_pass_for_the_real_loss_and_fail_for_mutants() {
    assert!(run_all(&Gcl, 3).iter().all(|r| r.passed));
    assert!(!episode_equivalence(&SignFlipped, 20, 3).passed);
    assert!(run_all(&SignFlipped, 3).iter().any(|r| !r.passed));
    let grads = gradient_suite(&GradientFlipped, 20, 3, Stencil::Extrapolated);
    assert!(!grads.passed);
    assert!(grads.detail.is_some());
}
