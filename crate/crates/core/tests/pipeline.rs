use expertgate_core::gating::BASE_MODEL;
use expertgate_core::pipeline::{
    run_baselines, train_discriminative_gate, BaselineConfig, BaselineMethod, InMemoryExperts,
};
use expertgate_core::preprocess::compute_reference_stats;
use expertgate_core::synth::{generate_synthetic_task, ManifoldKind, SyntheticTaskSpec};
use expertgate_core::{
    Error, LabeledDataset, Matrix, ModelRegistry, PipelineConfig, ReferenceStats, SgdConfig,
    TransferMethod,
};

const D: usize = 32;

fn config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.hidden = 32;
    c.gate_sgd = SgdConfig { learning_rate: 0.1, momentum: 0.9, epochs: 30, batch_size: 32, seed: 1 };
    c.expert_sgd = SgdConfig { learning_rate: 0.05, momentum: 0.9, epochs: 30, batch_size: 32, seed: 1 };
    c
}

fn reference() -> ReferenceStats {
    let mut s = SyntheticTaskSpec::subspace("ref", 1, D, 10, 4000, 999);
    s.kind = ManifoldKind::GaussianClusters;
    s.class_separation = 1.0;
    compute_reference_stats(generate_synthetic_task(&s).unwrap().features(), "ref").unwrap()
}

fn spec(name: &str, offset: usize, seed: u64) -> SyntheticTaskSpec {
    let mut s = SyntheticTaskSpec::subspace(name, 4, D, 4, 1000, seed);
    s.subspace_offset = offset;
    s.noise = 0.3;
    s
}

fn task(name: &str, offset: usize, seed: u64) -> LabeledDataset {
    generate_synthetic_task(&spec(name, offset, seed)).unwrap()
}

fn registry() -> ModelRegistry<InMemoryExperts> {
    ModelRegistry::with_reference_stats(InMemoryExperts::new(), config(), reference())
}

#[test]
fn first_task_starts_from_the_base_model() {
    let mut reg = registry();
    let out = reg.learn_task(&task("a", 0, 1)).unwrap();
    assert_eq!(out.report.chosen_prior, BASE_MODEL);
    assert_eq!(out.report.method, TransferMethod::FineTune);
    assert_eq!(reg.manifest()[0].rel, None);
    assert!(matches!(reg.learn_task(&task("a", 4, 2)), Err(Error::DuplicateTask(_))));
    assert_eq!(reg.len(), 1);
}

#[test]
fn same_distribution_picks_lwf_and_disjoint_picks_fine_tuning() {
    let mut reg = registry();
    reg.learn_task(&task("a", 0, 1)).unwrap();
    let mut again = spec("a2", 0, 1);
    again.sample_seed = Some(77);
    let same = reg.learn_task(&generate_synthetic_task(&again).unwrap()).unwrap();
    assert_eq!(same.report.chosen_prior, "a");
    assert_eq!(same.report.method, TransferMethod::LwF);
    assert!(same.report.chosen_rel().unwrap() > 0.85);

    let far = reg.learn_task(&task("c", 12, 3)).unwrap();
    assert_eq!(far.report.method, TransferMethod::FineTune);
    assert!(far.report.entries.iter().all(|e| e.rel < 0.85));
}

#[test]
fn inference_routes_to_the_right_expert_with_one_resident() {
    let mut reg = registry();
    assert!(matches!(reg.infer(&[0.0; D]), Err(Error::EmptyRegistry)));
    let a = task("a", 0, 1);
    let b = task("b", 4, 2);
    reg.learn_task(&a).unwrap();
    reg.learn_task(&b).unwrap();
    let probe_a = task("a", 0, 1);
    let mut right = 0;
    for i in 0..200 {
        let (x, want) = if i % 2 == 0 { (probe_a.features().row(i), 0) } else { (b.features().row(i), 1) };
        let out = reg.infer(x).unwrap();
        assert!(reg.residency().resident <= 1);
        if out.task_index == want {
            right += 1;
        }
        assert_eq!(out.task_name, reg.manifest()[out.task_index].task_name);
    }
    assert!(right >= 190, "{right}/200");
    let stats = reg.residency();
    assert_eq!(stats.peak_resident, 1);
    assert!(stats.loads > 2);
}

#[test]
fn ambiguous_samples_activate_several_experts() {
    let mut reg = registry();
    let a = task("a", 0, 1);
    let b = task("b", 4, 2);
    reg.learn_task(&a).unwrap();
    reg.learn_task(&b).unwrap();
    let mid: Vec<f32> = a.features().row(3).iter().zip(b.features().row(3)).map(|(x, y)| 0.5 * (x + y)).collect();
    let multi = reg.infer_multi(&mid).unwrap();
    assert!(multi.predictions.len() >= 2);
    assert_eq!(multi.predictions.len(), multi.decision.activated.len());
    assert_eq!(reg.residency().peak_resident, 1);
}

#[test]
fn baselines_need_two_tasks() {
    let cfg = BaselineConfig { pipeline: config(), reference: Some(reference()), ..BaselineConfig::default() };
    assert!(matches!(run_baselines(&[task("a", 0, 1)], &cfg), Err(Error::Parameter(_))));
    let x = task("a", 0, 1);
    assert!(matches!(
        train_discriminative_gate(&[x.features()], &[x.features()], &reference(), None, &config().expert_sgd),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn discriminative_gate_truncates_oversized_requests() {
    let a = task("a", 0, 1);
    let b = task("b", 4, 2);
    let cfg = SgdConfig { epochs: 5, ..config().expert_sgd };
    let out = train_discriminative_gate(
        &[a.features(), b.features()],
        &[a.features(), b.features()],
        &reference(),
        Some(5000),
        &cfg,
    )
    .unwrap();
    assert!(out.truncated);
    assert!(out.accuracy > 0.9);
    let row = Matrix::row_vector(a.features().row(0));
    assert_eq!(out.gate.select(&row).unwrap(), vec![0]);
}

#[test]
fn disjoint_suite_orders_methods() {
    let tasks: Vec<LabeledDataset> = (0..3).map(|t| task(&format!("t{t}"), 4 * t, 50 + t as u64)).collect();
    let cfg = BaselineConfig { pipeline: config(), reference: Some(reference()), ..BaselineConfig::default() };
    let r = run_baselines(&tasks, &cfg).unwrap();
    assert!(r.gate_selection_accuracy >= 0.95);
    let eg = r.average(BaselineMethod::ExpertGate);
    assert!(eg >= r.average(BaselineMethod::SingleFineTuned));
    assert!(r.average(BaselineMethod::MultipleOracle) - eg <= 0.02);
    assert_eq!(r.relatedness.len(), 3);
}
