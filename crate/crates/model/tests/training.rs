use mtree_core::dataset::synth::{generate, to_json_lines, SynthConfig};
use mtree_core::dataset::{
    make_supervision, parse_corpus, CorpusFormat, LoadOptions, Problem, Supervision,
};
use mtree_model::network::loss_and_grad;
use mtree_model::params::{Activation, ModelConfig, Params};
use mtree_model::predict::answer_from_vectors;
use mtree_model::{
    evaluate, load_checkpoint, predict_answer, save_checkpoint, train, Checkpoint, CheckpointError,
    OptimizerKind, Seq2Code, TrainConfig, TrainError,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, seed: u64) -> (Vec<Problem>, Supervision) {
    let text = to_json_lines(&generate(n, seed, &SynthConfig::default()));
    let problems = parse_corpus(&text, &LoadOptions::new(CorpusFormat::Synthetic))
        .unwrap()
        .problems;
    let sup = make_supervision(&problems, &[]);
    (problems, sup)
}

fn small() -> ModelConfig {
    ModelConfig {
        embedding_dim: 16,
        hidden_dim: 16,
        attention_dim: None,
        generator_dims: [32, 32],
        activation: Activation::Relu,
        max_words: 2500,
    }
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn a_single_problem_is_memorized() {
    let (problems, sup) = corpus(1, 10);
    let out = train(&sup.train, &problems, sup.vocab, small(), &config(200)).unwrap();
    assert_eq!(evaluate(&out.model, &problems), 1.0);
    assert!(out.log.last().unwrap().loss < 0.01, "{:?}", out.log.last());
}

#[test]
fn loss_falls_over_training() {
    let (_, sup) = corpus(50, 11);
    let out = train(&sup.train, &[], sup.vocab, small(), &config(60)).unwrap();
    let first = out.log.first().unwrap().loss;
    let last = out.log.last().unwrap().loss;
    assert!(last < 0.5 * first, "{first} -> {last}");
    for w in out.log[10..].windows(2) {
        assert!(
            w[1].loss <= 1.05 * w[0].loss,
            "uptick at epoch {}",
            w[1].epoch
        );
    }
    assert!(out
        .log
        .iter()
        .all(|e| e.dev_accuracy.is_none() && e.seconds.is_none()));
}

#[test]
fn zero_learning_rate_keeps_the_initial_parameters() {
    let (_, sup) = corpus(20, 12);
    for kind in [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum,
        OptimizerKind::Adam,
    ] {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            optimizer: kind,
            ..config(3)
        };
        let out = train(&sup.train, &[], sup.vocab.clone(), small(), &cfg).unwrap();
        let fresh = Seq2Code::new(small(), &sup.train, sup.vocab.clone(), cfg.seed);
        assert_eq!(out.model.params, fresh.params, "{kind:?}");
    }
}

#[test]
fn parallel_and_sequential_training_agree_exactly() {
    let (problems, sup) = corpus(40, 13);
    let seq = train(
        &sup.train,
        &problems,
        sup.vocab.clone(),
        small(),
        &config(4),
    )
    .unwrap();
    let par_cfg = TrainConfig {
        parallel: true,
        ..config(4)
    };
    let par = train(&sup.train, &problems, sup.vocab, small(), &par_cfg).unwrap();
    assert_eq!(seq.log, par.log);
    assert_eq!(seq.model.params, par.model.params);
}

#[test]
fn different_seeds_give_different_runs() {
    let (_, sup) = corpus(20, 14);
    let a = train(&sup.train, &[], sup.vocab.clone(), small(), &config(2)).unwrap();
    let b_cfg = TrainConfig {
        seed: 4,
        ..config(2)
    };
    let b = train(&sup.train, &[], sup.vocab, small(), &b_cfg).unwrap();
    assert_ne!(a.model.params, b.model.params);
}

#[test]
fn invalid_configurations_are_rejected() {
    let (_, sup) = corpus(5, 15);
    let bad = [
        TrainConfig {
            batch_size: 0,
            ..config(1)
        },
        TrainConfig {
            learning_rate: f64::NAN,
            ..config(1)
        },
        TrainConfig {
            clip_norm: Some(0.0),
            ..config(1)
        },
    ];
    for cfg in bad {
        let err = train(&sup.train, &[], sup.vocab.clone(), small(), &cfg).err();
        assert!(matches!(err, Some(TrainError::InvalidConfig(_))), "{err:?}");
    }
    let err = train(&[], &[], sup.vocab, small(), &config(1)).err();
    assert!(matches!(err, Some(TrainError::EmptyCorpus)));
}

#[test]
fn gold_vectors_decode_to_the_gold_answer() {
    let (_, sup) = corpus(100, 16);
    let model = Seq2Code::new(small(), &sup.train, sup.vocab, 0);
    for ex in &sup.train {
        let gold: Vec<Vec<f64>> = ex
            .vectors
            .as_ref()
            .unwrap()
            .iter()
            .map(|v| v.iter().map(|&c| f64::from(c)).collect())
            .collect();
        let p = answer_from_vectors(&model, &ex.problem, &gold);
        assert!(p.is_correct(ex.problem.answer), "{}: {p:?}", ex.problem.id);
        assert_eq!(p.codes, ex.code_strings());
    }
}

#[test]
fn an_all_zero_model_reports_an_empty_tree() {
    let (problems, sup) = corpus(3, 17);
    let mut model = Seq2Code::new(small(), &sup.train, sup.vocab, 0);
    model.params.fill_zero();
    for p in &problems {
        let pred = predict_answer(&model, p);
        assert_eq!(pred.answer, None);
        assert!(
            pred.failure.as_deref().unwrap().starts_with("EmptyTree"),
            "{pred:?}"
        );
        assert!(pred.codes.iter().flatten().all(|c| c == "None"));
    }
    assert_eq!(evaluate(&model, &problems), 0.0);
}

#[test]
fn checkpoints_round_trip() {
    let (problems, sup) = corpus(10, 18);
    let cfg = config(2);
    let out = train(&sup.train, &[], sup.vocab, small(), &cfg).unwrap();
    let path = std::env::temp_dir().join(format!("mtree-ckpt-{}.json", std::process::id()));
    save_checkpoint(
        &path,
        &Checkpoint::from_model(&out.model, Some(cfg.clone())),
    )
    .unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.training, Some(cfg));
    let back = ck.into_model();
    assert_eq!(back, out.model);
    for p in &problems {
        assert_eq!(predict_answer(&back, p), predict_answer(&out.model, p));
    }

    let mut broken = Checkpoint::from_model(&out.model, None);
    broken.params.groups[0].data.pop();
    save_checkpoint(&path, &broken).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(CheckpointError::Shape)
    ));
    broken = Checkpoint::from_model(&out.model, None);
    broken.version = 9;
    save_checkpoint(&path, &broken).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(CheckpointError::Version(9))
    ));
    std::fs::remove_file(&path).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Each value is scored independently, so reordering the
    /// (position, target) pairs only reorders the sum.
    #[test]
    fn loss_ignores_the_order_of_values(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ModelConfig {
            embedding_dim: 6,
            hidden_dim: 5,
            attention_dim: Some(3),
            generator_dims: [8, 7],
            activation: Activation::Tanh,
            max_words: 10,
        };
        let (vocab, l) = (7, 4);
        let params = Params::init(&cfg, vocab, l, &mut rng);
        let tokens: Vec<usize> = (0..n + 3).map(|_| rng.gen_range(0..vocab)).collect();
        let mut pairs: Vec<(usize, Vec<f64>)> = (0..n)
            .map(|i| (i + 1, (0..l).map(|_| f64::from(rng.gen_range(0..3u8))).collect()))
            .collect();
        let loss = |pairs: &[(usize, Vec<f64>)]| {
            let positions: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let targets: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
            let mut g = params.zeros_like();
            let v = loss_and_grad(&params, Activation::Tanh, &tokens, &positions, &targets, &mut g)
                .unwrap();
            (v, g.norm())
        };
        let (a, ga) = loss(&pairs);
        pairs.shuffle(&mut rng);
        let (b, gb) = loss(&pairs);
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!((ga - gb).abs() <= 1e-10 * ga.max(1.0));
    }
}
