use expertgate_core::experts::{
    accuracy, accuracy_with_head, fine_tune, lwf_train, predict, train_scratch, Head,
};
use expertgate_core::nn::softmax_rows;
use expertgate_core::synth::{generate_synthetic_task, ManifoldKind, SyntheticTaskSpec};
use expertgate_core::{
    Activation, DenseLayer, Error, ExpertModel, LabeledDataset, Matrix, SgdConfig, TrainMethod,
};

fn cfg(seed: u64) -> SgdConfig {
    SgdConfig { learning_rate: 0.05, momentum: 0.9, epochs: 40, batch_size: 32, seed }
}

fn halves(data: &LabeledDataset, train: usize) -> (LabeledDataset, LabeledDataset) {
    let a: Vec<usize> = (0..train).collect();
    let b: Vec<usize> = (train..data.len()).collect();
    (data.select(&a), data.select(&b))
}

// Tasks on one shared subspace, told apart by their offset from the origin.
fn shifted(name: &str, seed: u64, n: usize) -> LabeledDataset {
    let mut s = SyntheticTaskSpec::subspace(name, 6, 32, 10, n, seed);
    s.noise = 0.3;
    s.offset_norm = 3.0;
    generate_synthetic_task(&s).unwrap()
}

fn blobs(seed: u64) -> LabeledDataset {
    let mut s = SyntheticTaskSpec::subspace("blobs", 1, 10, 2, 600, seed);
    s.kind = ManifoldKind::GaussianClusters;
    s.class_separation = 6.0;
    generate_synthetic_task(&s).unwrap()
}

fn kl_rows(p: &Matrix<f32>, q: &Matrix<f32>) -> f64 {
    let mut total = 0.0f64;
    for (a, b) in p.row_iter().zip(q.row_iter()) {
        for (&x, &y) in a.iter().zip(b) {
            if x > 0.0 {
                total += x as f64 * ((x as f64).ln() - (y.max(1e-12) as f64).ln());
            }
        }
    }
    total / p.rows() as f64
}

#[test]
fn scratch_separates_blobs() {
    let (train, test) = halves(&blobs(1), 400);
    let model = train_scratch(&train, 16, &cfg(0)).unwrap();
    assert!(accuracy(&model, &test).unwrap() >= 0.95);
    assert_eq!(model.method, TrainMethod::Scratch);
    assert_eq!(model.heads().len(), 1);
    let again = train_scratch(&train, 16, &cfg(0)).unwrap();
    assert_eq!(model, again);
}

#[test]
fn single_class_is_rejected() {
    let x = Matrix::new(20, 3, (0..60).map(|i| i as f32).collect()).unwrap();
    let data = LabeledDataset::new(x, vec![0; 20], 1, "one").unwrap();
    assert!(matches!(train_scratch(&data, 4, &cfg(0)), Err(Error::Parameter(_))));
}

#[test]
fn fine_tuning_on_the_same_task_keeps_accuracy() {
    let (train, test) = halves(&shifted("a", 5, 1500), 1000);
    let prior = train_scratch(&train, 32, &cfg(0)).unwrap();
    let before = prior.clone();
    let tuned = fine_tune(&prior, &train, &cfg(1)).unwrap();
    assert_eq!(prior, before);
    assert_eq!(tuned.heads().len(), 1);
    assert!(accuracy(&tuned, &test).unwrap() >= accuracy(&prior, &test).unwrap() - 0.01);
}

#[test]
fn fine_tuning_a_related_prior_beats_scratch_on_small_data() {
    let mut wins = 0;
    for seed in 0..10 {
        let mut big = SyntheticTaskSpec::subspace("big", 6, 32, 10, 2000, 40 + seed);
        big.noise = 0.3;
        big.offset_norm = 3.0;
        let mut small = big.clone();
        small.name = "small".into();
        small.sample_seed = Some(seed);
        small.samples = 520;
        let prior = train_scratch(&generate_synthetic_task(&big).unwrap(), 32, &cfg(seed)).unwrap();
        let (train, test) = halves(&generate_synthetic_task(&small).unwrap(), 20);
        let c = SgdConfig { learning_rate: 0.01, ..cfg(seed) };
        let tuned = fine_tune(&prior, &train, &c).unwrap();
        let scratch = train_scratch(&train, 32, &c).unwrap();
        if accuracy(&tuned, &test).unwrap() >= accuracy(&scratch, &test).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 8, "{wins}/10");
}

#[test]
fn lwf_without_distillation_trains_like_fine_tuning() {
    let a = shifted("a", 7, 600);
    let b = shifted("b", 8, 600);
    let prior = train_scratch(&a, 16, &cfg(0)).unwrap();
    let ft = fine_tune(&prior, &b, &cfg(2)).unwrap();
    let lwf = lwf_train(&prior, &b, &cfg(2), 2.0, 0.0).unwrap();
    assert_eq!(lwf.method, TrainMethod::LwF);
    assert_eq!(lwf.heads().len(), 2);
    let diff = (accuracy(&ft, &b).unwrap() - accuracy(&lwf, &b).unwrap()).abs();
    assert!(diff < 0.02, "{diff}");
}

#[test]
fn lwf_rejects_bad_inputs() {
    let a = shifted("a", 7, 200);
    let prior = train_scratch(&a, 8, &cfg(0)).unwrap();
    assert!(matches!(lwf_train(&prior, &a, &cfg(0), 0.0, 1.0), Err(Error::Parameter(_))));
    let x = Matrix::new(20, 5, vec![0.5; 100]).unwrap();
    let narrow = LabeledDataset::new(x, (0..20).map(|i| i % 2).collect(), 2, "n").unwrap();
    assert!(matches!(lwf_train(&prior, &narrow, &cfg(0), 2.0, 1.0), Err(Error::Dimension(_))));
    assert!(matches!(fine_tune(&prior, &narrow, &cfg(0)), Err(Error::Dimension(_))));
}

#[test]
fn lwf_preserves_old_outputs_better_than_fine_tuning() {
    let t = 2.0;
    let mut wins = 0;
    for seed in 0..10 {
        let a = shifted("a", 300 + seed, 800);
        let b = shifted("b", 400 + seed, 800);
        let prior = train_scratch(&a, 32, &cfg(seed)).unwrap();
        let snapshot = prior.clone();
        let ft = fine_tune(&prior, &b, &cfg(seed)).unwrap();
        let lwf = lwf_train(&prior, &b, &cfg(seed), t, 1.0).unwrap();
        assert_eq!(prior, snapshot);
        assert_eq!(ft.heads()[0], prior.heads()[0]);
        let target = softmax_rows(&prior.logits("a", b.features()).unwrap(), t);
        let kl = |m: &ExpertModel| kl_rows(&target, &softmax_rows(&m.logits("a", b.features()).unwrap(), t));
        if kl(&lwf) < kl(&ft) {
            wins += 1;
        }
    }
    assert!(wins >= 8, "{wins}/10");
}

#[test]
fn sequential_fine_tuning_forgets() {
    let (a_train, a_test) = halves(&shifted("a", 100, 2000), 1500);
    let b = shifted("b", 101, 1500);
    let dedicated = train_scratch(&a_train, 32, &cfg(0)).unwrap();
    let after_b = fine_tune(&dedicated, &b, &cfg(0)).unwrap();
    let kept = accuracy(&dedicated, &a_test).unwrap();
    let forgot = accuracy_with_head(&after_b, "a", &a_test).unwrap();
    assert!(kept - forgot >= 0.10, "{kept} -> {forgot}");
}

fn fixed_model(logits: [f32; 2]) -> ExpertModel {
    let body = DenseLayer::new(Matrix::new(1, 1, vec![0.0]).unwrap(), vec![1.0], Activation::Relu).unwrap();
    let head = DenseLayer::new(Matrix::new(2, 1, vec![0.0, 0.0]).unwrap(), logits.to_vec(), Activation::Identity).unwrap();
    ExpertModel::from_parts(body, vec![Head { task: "t".into(), layer: head }], "<base>", TrainMethod::Scratch).unwrap()
}

#[test]
fn prediction_examples() {
    let x = Matrix::new(1, 1, vec![0.3]).unwrap();
    let p = predict(&fixed_model([5.0, -5.0]), "t", &x).unwrap();
    assert_eq!(p.classes, vec![0]);
    assert!((p.probabilities.get(0, 0) - 0.99995).abs() < 1e-5);
    assert!((p.probabilities.get(0, 1) - 0.0000454).abs() < 1e-6);
    let tie = predict(&fixed_model([1.0, 1.0]), "t", &x).unwrap();
    assert_eq!(tie.classes, vec![0]);
    assert_eq!(tie.confidences(), vec![0.5]);
    assert!(matches!(predict(&fixed_model([1.0, 0.0]), "nope", &x), Err(Error::UnknownHead(_))));
}
