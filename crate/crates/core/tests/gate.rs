use expertgate_core::gate::{pca_reference_error, train_gate, train_gate_variant, GateVariant};
use expertgate_core::preprocess::{compute_reference_stats, preprocess};
use expertgate_core::synth::{generate_synthetic_task, ManifoldKind, SyntheticTaskSpec};
use expertgate_core::{AutoencoderGate, Error, Matrix, ReferenceStats, SgdConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;

fn fast() -> SgdConfig {
    SgdConfig { learning_rate: 0.1, momentum: 0.9, epochs: 30, batch_size: 32, seed: 1 }
}

fn gaussian(n: usize, scales: &[f64], seed: u64) -> Matrix<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * scales.len());
    for _ in 0..n {
        for s in scales {
            let z: f64 = StandardNormal.sample(&mut r);
            data.push((z * s) as f32);
        }
    }
    Matrix::new(n, scales.len(), data).unwrap()
}

fn broad_reference(d: usize) -> ReferenceStats {
    let mut s = SyntheticTaskSpec::subspace("ref", 1, d, 10, 5000, 999);
    s.kind = ManifoldKind::GaussianClusters;
    s.class_separation = 1.0;
    let data = generate_synthetic_task(&s).unwrap();
    compute_reference_stats(data.features(), "ref").unwrap()
}

fn subspace_task(name: &str, d: usize, offset: usize, seed: u64, n: usize) -> Matrix<f32> {
    let mut s = SyntheticTaskSpec::subspace(name, 6, d, 5, n, seed);
    s.subspace_offset = offset;
    s.noise = 0.3;
    generate_synthetic_task(&s).unwrap().features().clone()
}

#[test]
fn trained_gate_beats_untrained_by_tenfold() {
    let mut s = SyntheticTaskSpec::subspace("a", 5, 50, 4, 500, 3);
    s.noise = 0.05;
    let x = generate_synthetic_task(&s).unwrap().features().clone();
    let stats = compute_reference_stats(&x, "own").unwrap();
    let cfg = SgdConfig { learning_rate: 0.1, momentum: 0.9, epochs: 100, batch_size: 32, seed: 2 };
    let (gate, report) = train_gate("a", &x, &stats, 10, &cfg).unwrap();
    let untrained = AutoencoderGate::untrained("a", 50, 10, &stats, GateVariant::Standard, 2).unwrap();
    let before = untrained.mean_reconstruction_error(&x, &stats).unwrap();
    assert!((report.final_val_error as f64) < 0.1 * before, "{report:?} vs {before}");
    assert!(gate.mean_reconstruction_error(&x, &stats).unwrap() < before);
    assert_eq!(gate.train_loss_history.len(), cfg.epochs + 1);
}

#[test]
fn code_size_must_be_undercomplete() {
    let x = gaussian(50, &[1.0; 50], 0);
    let stats = compute_reference_stats(&x, "s").unwrap();
    for code in [50, 100] {
        assert!(matches!(
            train_gate("a", &x, &stats, code, &fast()),
            Err(Error::UndercompleteViolation { .. })
        ));
    }
    assert!(matches!(
        train_gate("a", &x.select_rows(&[0, 1, 2]), &stats, 5, &fast()),
        Err(Error::InsufficientData { .. })
    ));
}

#[test]
fn duplicated_sample_is_reconstructed_almost_exactly() {
    let row: Vec<f32> = (0..20).map(|i| (i as f32 * 0.37).sin()).collect();
    let data: Vec<f32> = (0..100).flat_map(|_| row.iter().copied()).collect();
    let x = Matrix::new(100, 20, data).unwrap();
    let stats = ReferenceStats::new(vec![0.0; 20], vec![1.0; 20], "unit").unwrap();
    let cfg = SgdConfig { epochs: 200, ..fast() };
    let (_, report) = train_gate("dup", &x, &stats, 4, &cfg).unwrap();
    assert!(report.final_val_error < 1e-4, "{report:?}");
}

#[test]
fn gates_prefer_their_own_manifold() {
    let d = 64;
    let stats = broad_reference(d);
    let a = subspace_task("a", d, 0, 11, 1000);
    let b = subspace_task("b", d, 6, 12, 1000);
    let train: Vec<usize> = (0..800).collect();
    let held: Vec<usize> = (800..1000).collect();
    let (ga, _) = train_gate("a", &a.select_rows(&train), &stats, 32, &fast()).unwrap();
    let (gb, _) = train_gate("b", &b.select_rows(&train), &stats, 32, &fast()).unwrap();
    for (x, own, other) in [(&a, &ga, &gb), (&b, &gb, &ga)] {
        let held = x.select_rows(&held);
        let e_own = own.reconstruction_errors(&held, &stats).unwrap();
        let e_other = other.reconstruction_errors(&held, &stats).unwrap();
        let wins = e_own.iter().zip(&e_other).filter(|(o, t)| t > o).count();
        assert!(wins as f64 >= 0.95 * held.rows() as f64, "{wins}/{}", held.rows());
    }
}

#[test]
fn training_is_bit_deterministic() {
    let d = 32;
    let stats = broad_reference(d);
    let x = subspace_task("a", d, 0, 4, 300);
    let (g1, r1) = train_gate("a", &x, &stats, 8, &fast()).unwrap();
    let (g2, r2) = train_gate("a", &x, &stats, 8, &fast()).unwrap();
    assert_eq!(g1, g2);
    assert_eq!(r1, r2);
    let (g3, _) = train_gate("a", &x, &stats, 8, &fast().with_seed(9)).unwrap();
    assert_ne!(g1.encoder.weights, g3.encoder.weights);
}

#[test]
fn errors_need_the_gates_own_statistics() {
    let x = gaussian(40, &[1.0; 6], 1);
    let stats = compute_reference_stats(&x, "one").unwrap();
    let gate = AutoencoderGate::untrained("g", 6, 2, &stats, GateVariant::Standard, 0).unwrap();
    let other = ReferenceStats::new(stats.mean().to_vec(), stats.std().to_vec(), "two").unwrap();
    assert!(matches!(
        gate.reconstruction_error(x.row(0), &other),
        Err(Error::StatsRegime { .. })
    ));
    assert!(matches!(
        gate.reconstruction_error(&[0.0; 5], &stats),
        Err(Error::Dimension(_))
    ));
    let er = gate.reconstruction_error(x.row(0), &stats).unwrap();
    assert!(er >= 0.0 && er.is_finite());
}

#[test]
fn pca_error_is_zero_on_an_exact_subspace() {
    let mut s = SyntheticTaskSpec::subspace("flat", 3, 10, 3, 400, 8);
    s.noise = 0.0;
    s.offset_norm = 2.0;
    let x = generate_synthetic_task(&s).unwrap().features().clone();
    assert!(pca_reference_error(&x, 3).unwrap() < 1e-8);
}

#[test]
fn pca_error_of_isotropic_gaussian() {
    let (d, k, var) = (10, 4, 2.25f64);
    let x = gaussian(2000, &[var.sqrt(); 10], 5);
    let expected = (d - k) as f64 / d as f64 * var;
    let got = pca_reference_error(&x, k).unwrap();
    assert!((got - expected).abs() < 0.1 * expected, "{got} vs {expected}");
}

#[test]
fn pca_error_on_two_dims_is_smallest_eigenvalue_share() {
    // Population covariance of these points is [[2, 1], [1, 2]], eigenvalues 3 and 1.
    let x = Matrix::new(4, 2, vec![2.0, 2.0, -2.0, -2.0, 1.0, -1.0, -1.0, 1.0]).unwrap();
    let got = pca_reference_error(&x, 1).unwrap();
    assert!((got - 0.5).abs() < 1e-9, "{got}");
    assert!(matches!(pca_reference_error(&x, 2), Err(Error::Parameter(_))));
}

#[test]
fn linear_autoencoder_matches_pca() {
    let start = Instant::now();
    let d = 20;
    let scales: Vec<f64> = (0..d)
        .map(|i| if i < 5 { 3.0 - 0.4 * i as f64 } else { 0.6 - 0.02 * i as f64 })
        .collect();
    let x = gaussian(2000, &scales, 5);
    let stats = ReferenceStats::new(vec![0.0; d], vec![3.0; d], "shared-scale").unwrap();
    let pca = pca_reference_error(&preprocess(&x, &stats).unwrap(), 5).unwrap();
    let cfg = SgdConfig { learning_rate: 0.5, momentum: 0.9, epochs: 100, batch_size: 32, seed: 1 };
    let (gate, _) = train_gate_variant("lin", &x, &stats, 5, &cfg, GateVariant::Linear).unwrap();
    let ae = gate.mean_reconstruction_error(&x, &stats).unwrap();
    assert!(ae <= 1.05 * pca, "linear AE {ae} vs PCA {pca}");
    assert!(start.elapsed().as_secs_f64() < 30.0);
}
