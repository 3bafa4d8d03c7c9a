use mgnets::cyclegraph::{count_parameters, ArchSpec, Family};
use mgnets::segnet::{
    dice_ce_loss_value, prepare, split_indices, train, train_step, Adam, AdamConfig, Example, Model, Parameter,
    TrainConfig, DICE_SMOOTHING,
};
use mgnets::synthdata::{generate_case, StoredCase};
use mgnets::tensorad::{BnMode, Tensor};
use mgnets::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cases(n: usize, size: usize, seed: u64) -> Vec<StoredCase> {
    (0..n).map(|i| generate_case(size, seed, i).unwrap().into()).collect()
}

fn small_spec(family: Family, depth: usize) -> ArchSpec {
    ArchSpec::new(family, depth).with_base(4)
}

#[test]
fn parameter_count_matches_graph_count() {
    for f in Family::ALL {
        for depth in 2..=5 {
            let spec = ArchSpec::new(f, depth).with_base(8);
            let m = Model::<f32>::new(&spec, 0).unwrap();
            assert_eq!(m.num_scalars() as u64, count_parameters(m.graph()), "{f} {depth}");
        }
    }
    let unet = Model::<f32>::new(&ArchSpec::new(Family::Unet, 3).with_base(8), 0).unwrap();
    // Two 3×3 conv units with bias and batch-norm scale/shift per block,
    // 2×2 transposed convolutions and a 1×1 head.
    let block = |ci: usize, co: usize| 9 * ci * co + 3 * co + 9 * co * co + 3 * co;
    let expected = block(1, 8) + block(8, 16) + block(16, 32)
        + (4 * 32 * 16 + 16) + block(32, 16)
        + (4 * 16 * 8 + 8) + block(16, 8)
        + (8 * 4 + 4);
    assert_eq!(unet.num_scalars(), expected);
}

#[test]
fn pocket_models_are_smaller() {
    for depth in 3..=5 {
        let u = Model::<f32>::new(&ArchSpec::new(Family::Unet, depth).with_base(8), 0).unwrap();
        for f in [Family::Fmgnet, Family::Wnet] {
            let m = Model::<f32>::new(&ArchSpec::new(f, depth).with_base(8), 0).unwrap();
            assert!(m.num_scalars() < u.num_scalars());
        }
    }
}

#[test]
fn instantiation_contracts() {
    for f in Family::ALL {
        let spec = ArchSpec::new(f, 3).with_base(4);
        let mut m = Model::<f32>::new(&spec, 42).unwrap();
        let x = Tensor::zeros(&[2, 1, 64, 64]);
        assert_eq!(m.logits(&x, BnMode::BatchStats).unwrap().shape(), &[2, 4, 64, 64]);
        assert!(matches!(m.logits(&x, BnMode::Eval), Err(Error::UninitializedStatistics(_))));
        assert!(m.logits(&Tensor::zeros(&[2, 1, 30, 32]), BnMode::BatchStats).is_err());
        assert!(m.logits(&Tensor::zeros(&[2, 2, 32, 32]), BnMode::BatchStats).is_err());
        assert_eq!(m.parameters(), Model::<f32>::new(&spec, 42).unwrap().parameters());
        assert_ne!(m.parameters(), Model::<f32>::new(&spec, 43).unwrap().parameters());
    }
    let err = Model::<f32>::new(&ArchSpec::new(Family::Unet, 3).with_dims(3), 0).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

fn onehot_from(labels: &[usize], c: usize, n: usize, hw: usize) -> Tensor<f64> {
    let mut t = Tensor::zeros(&[n, c, 1, hw]);
    for s in 0..n {
        for p in 0..hw {
            t.data_mut()[(s * c + labels[s * hw + p]) * hw + p] = 1.0;
        }
    }
    t
}

#[test]
fn loss_examples() {
    let labels = [0, 1, 2, 3];
    let target = onehot_from(&labels, 4, 1, 4).reshape(&[1, 4, 2, 2]).unwrap();
    let uniform = Tensor::zeros(&[1, 4, 2, 2]);
    let dice_c = (2.0 * 0.25 + DICE_SMOOTHING) / (1.0 + 1.0 + DICE_SMOOTHING);
    let expected = (1.0 - dice_c) + 4f64.ln();
    assert!((dice_ce_loss_value(&uniform, &target).unwrap() - expected).abs() < 1e-12);

    let confident = Tensor::from_fn(&[1, 4, 2, 2], |i| if target.data()[i] == 1.0 { 20.0 } else { -20.0 });
    assert!(dice_ce_loss_value(&confident, &target).unwrap() < 0.01);

    assert!(dice_ce_loss_value(&uniform, &Tensor::zeros(&[1, 4, 2, 3])).is_err());
}

proptest! {
    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), scale in 0.1f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..18).map(|_| rng.gen_range(0..3)).collect();
        let target = onehot_from(&labels, 3, 2, 9);
        let logits = Tensor::from_fn(&[2, 3, 1, 9], |_| scale * rng.gen_range(-1.0..1.0));
        prop_assert!(dice_ce_loss_value(&logits, &target).unwrap() >= 0.0);
    }
}

#[test]
fn adam_examples() {
    let mut p = vec![Parameter { name: "w".into(), node: 0, value: Tensor::scalar(0.5f64) }];
    let cfg = AdamConfig::default();
    let mut adam = Adam::new(cfg, &p);
    adam.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
    assert_eq!(p[0].value.data(), &[0.5]);

    let mut adam = Adam::new(cfg, &p);
    adam.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
    let delta = 0.5 - p[0].value.data()[0];
    let expected = cfg.learning_rate / (1.0 + cfg.epsilon);
    assert!((delta - expected).abs() < 1e-15, "{delta}");
    assert!((delta - cfg.learning_rate).abs() / cfg.learning_rate < 1e-6);
    assert!(adam.step(&mut p, &[]).is_err());
}

fn fixed_batch(n: usize, size: usize) -> (Tensor<f64>, Tensor<f64>) {
    let ex: Vec<Example<f64>> = prepare(&cases(n, size, 5), 4).unwrap();
    let refs: Vec<&Example<f64>> = ex.iter().collect();
    mgnets::segnet::batch(&refs, None).unwrap()
}

#[test]
fn overfits_a_single_batch() {
    let (x, y) = fixed_batch(4, 32);
    let mut model = Model::<f64>::new(&ArchSpec::new(Family::Unet, 3).with_base(8), 1).unwrap();
    let cfg = AdamConfig { learning_rate: 3e-3, ..AdamConfig::default() };
    let mut adam = Adam::new(cfg, model.parameters());
    let first = train_step(&mut model, &mut adam, &x, &y, 1).unwrap();
    let mut last = first;
    for step in 2..=200 {
        last = train_step(&mut model, &mut adam, &x, &y, step).unwrap();
    }
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn non_finite_parameters_abort_training() {
    let (x, y) = fixed_batch(2, 32);
    let mut model = Model::<f64>::new(&small_spec(Family::Unet, 2), 1).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), model.parameters());
    let idx = model.parameters().iter().position(|p| p.name == "n2.conv1.weight").unwrap();
    model.parameters_mut()[idx].value.data_mut()[3] = f64::NAN;
    match train_step(&mut model, &mut adam, &x, &y, 17) {
        Err(Error::NonFinite { step, block }) => assert_eq!((step, block.as_str()), (17, "n2.conv1.weight")),
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let ex: Vec<Example<f64>> = prepare(&cases(10, 32, 1), 4).unwrap();
    let mut model = Model::<f64>::new(&small_spec(Family::Wnet, 3), 3).unwrap();
    let before = model.clone();
    let curve = train(&mut model, &ex, &tiny_config(0), |_| {}).unwrap();
    assert!(curve.entries.is_empty());
    assert_eq!(model, before);
}

#[test]
fn training_is_deterministic_in_f64() {
    let ex: Vec<Example<f64>> = prepare(&cases(10, 32, 2), 4).unwrap();
    let run = || {
        let mut model = Model::<f64>::new(&small_spec(Family::Fmgnet, 3), 7).unwrap();
        let mut seen = Vec::new();
        let curve = train(&mut model, &ex, &tiny_config(2), |e| seen.push(e.epoch)).unwrap();
        assert_eq!(seen, vec![1, 2]);
        (curve, model)
    };
    let (c1, m1) = run();
    let (c2, m2) = run();
    assert_eq!(c1, c2);
    assert_eq!(m1, m2);
    assert!(c1.entries.iter().all(|e| e.train_loss.is_finite() && e.val_loss.is_finite()));
    let mut csv = Vec::new();
    c1.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epoch,train_loss,val_loss\n1,"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn config_validation() {
    let ex: Vec<Example<f64>> = prepare(&cases(4, 32, 2), 4).unwrap();
    let mut model = Model::<f64>::new(&small_spec(Family::Unet, 2), 7).unwrap();
    for bad in [
        TrainConfig { batch_size: 1, ..tiny_config(1) },
        TrainConfig { adam: AdamConfig { learning_rate: 0.0, ..AdamConfig::default() }, ..tiny_config(1) },
        TrainConfig { validation_fraction: 1.0, ..tiny_config(1) },
    ] {
        assert!(train(&mut model, &ex, &bad, |_| {}).is_err());
    }
    assert!(train(&mut model, &ex[..1], &tiny_config(1), |_| {}).is_err());
    let s = split_indices(4, 42, 0.2);
    assert_eq!((s.train.len(), s.validation.len()), (3, 1));
}

#[test]
fn checkpoint_round_trip() {
    let ex: Vec<Example<f32>> = prepare(&cases(6, 32, 2), 4).unwrap();
    let mut model = Model::<f32>::new(&small_spec(Family::Wnet, 3), 9).unwrap();
    train(&mut model, &ex, &tiny_config(1), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = model.save(dir.path()).unwrap();
    assert_eq!(manifest.precision, "f32");
    assert_eq!(manifest.seed, 9);
    assert_eq!(manifest.parameters.len(), model.parameters().len());
    let back = Model::<f32>::load(dir.path()).unwrap();
    assert_eq!(back, model);
    assert!(back.batch_norms().iter().all(|b| b.stats.initialized));

    let wide = Model::<f64>::load(dir.path()).unwrap();
    assert_eq!(wide.parameters()[0].value.cast::<f32>(), model.parameters()[0].value);

    let other = tempfile::tempdir().unwrap();
    model.save(other.path()).unwrap();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(dir.path().join(&name)).unwrap(),
            std::fs::read(other.path().join(&name)).unwrap()
        );
    }

    std::fs::write(dir.path().join("manifest.json"), "{}").unwrap();
    assert!(matches!(Model::<f32>::load(dir.path()), Err(Error::Format { .. })));
}
