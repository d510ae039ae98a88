use gcl::loss::{finite_diff_check, Stencil};
use gcl::rng::{stream, StreamName};
use gcl::train::{
    compose_semi_minibatch, hide_labels, minibatch_gradients, synth_dataset, train, Dataset, Encoder, EncoderShape,
    Mode, SupervisedAffinity, SyntheticConfig, TrainConfig,
};

fn small_data(seed: u64) -> Dataset {
    synth_dataset(&SyntheticConfig {
        n_speakers: 24,
        utterances_per_speaker: 10,
        feature_dim: 8,
        embedding_dim: 4,
        eval_speakers: 4,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn small_config(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        hidden_dim: 12,
        embedding_dim: 4,
        batch_slots: 20,
        steps: 40,
        ..TrainConfig::default()
    }
}

#[test]
fn semi_without_unlabeled_slots_matches_supervised_ntxent() {
    let data = small_data(3);
    let mut semi = small_config(Mode::Semi);
    semi.unlabeled_fraction = 0.0;
    let mut sup = small_config(Mode::Supervised);
    sup.supervised_affinity = SupervisedAffinity::NtXent;

    let a = train(&data, &semi).unwrap();
    let b = train(&data, &sup).unwrap();
    assert_eq!(a.encoder.params(), b.encoder.params());
    assert_eq!(a.kernel, b.kernel);
    for (x, y) in a.log.iter().zip(&b.log) {
        assert_eq!(x.loss, y.loss);
        assert_eq!(x.grad_norm, y.grad_norm);
        assert_eq!(x.unlabeled_per_batch, 0);
    }
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let data = small_data(4);
    for mode in [Mode::Supervised, Mode::Semi, Mode::Unsupervised] {
        let mut cfg = small_config(mode);
        cfg.labeled_speakers = (mode == Mode::Semi).then_some(6);
        cfg.lr = 0.0;
        let trained = train(&data, &cfg).unwrap();
        cfg.steps = 0;
        let untouched = train(&data, &cfg).unwrap();
        assert_eq!(trained.encoder, untouched.encoder, "{mode:?}");
        assert_eq!(trained.kernel, untouched.kernel);
        assert_eq!(trained.log.len(), 40);
        assert!(untouched.log.is_empty());
    }
}

#[test]
fn supervised_loss_decreases_over_epochs() {
    let data = synth_dataset(&SyntheticConfig {
        intra_spread: 0.3,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        steps: 2000,
        ..TrainConfig::default()
    };
    let log = train(&data, &cfg).unwrap().log;
    let epochs: Vec<f64> = log.chunks(400).map(|c| c.iter().map(|m| m.loss).sum::<f64>() / c.len() as f64).collect();
    for w in epochs.windows(2) {
        assert!(w[1] < w[0], "epoch averages {epochs:?}");
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let data = small_data(5);
    for (mode, labeled) in [(Mode::Supervised, None), (Mode::Semi, Some(8)), (Mode::Unsupervised, None)] {
        let mut cfg = small_config(mode);
        cfg.labeled_speakers = labeled;
        cfg.unlabeled_fraction = 0.3;
        cfg.gamma_init = 3.0;
        let labeled_count = match mode {
            Mode::Unsupervised => 0,
            _ => labeled.unwrap_or(20),
        };
        let split = hide_labels(&data, labeled_count, &mut stream(1, StreamName::Split)).unwrap();
        let mut rng = stream(1, StreamName::Batches);
        let (lab, unl) = compose_semi_minibatch(&split.labeled, &split.unlabeled, &cfg, &mut rng).unwrap();
        let mut aug = stream(1, StreamName::Augment);
        let first: Vec<_> = unl.samples.iter().map(|_| cfg.augmentation.draw(8, &mut aug)).collect();
        let second: Vec<_> = unl.samples.iter().map(|_| cfg.augmentation.draw(8, &mut aug)).collect();

        let shape = EncoderShape { input: 8, hidden: 12, output: 4 };
        let encoder = Encoder::init(shape, &mut stream(1, StreamName::Init));
        let kernel = cfg.initial_kernel();
        let analytic = minibatch_gradients(&encoder, &kernel, &cfg, &lab, &unl, &first, &second).unwrap();
        let check = finite_diff_check(
            |p| {
                let e = Encoder::from_params(shape, p.to_vec())?;
                Ok(minibatch_gradients(&e, &kernel, &cfg, &lab, &unl, &first, &second)?.report.loss)
            },
            encoder.params(),
            &analytic.encoder,
            1e-4,
            Stencil::Extrapolated,
        )
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "{mode:?}: {check:?}");
    }
}

#[test]
fn unlabeled_share_follows_the_fraction() {
    let data = small_data(6);
    let mut cfg = small_config(Mode::Semi);
    cfg.labeled_speakers = Some(16);
    cfg.batch_slots = 40;
    let log = train(&data, &cfg).unwrap().log;
    assert!(log.iter().all(|m| m.unlabeled_per_batch == 4 && m.labeled_per_batch == 36));
}
