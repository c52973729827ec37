use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::{train_discriminative_gate, InMemoryExperts, ModelRegistry, PipelineConfig};
use crate::experts::{
    accuracy, fine_tune, lwf_train, predict, train_joint, train_scratch, ExpertModel,
    LabeledDataset,
};
use crate::gating::{argmax, RelatednessReport};
use crate::preprocess::ReferenceStats;
use crate::split::split_indices;
use crate::{Error, Matrix, Result};

use super::registry::ExpertStore;

/// Methods compared by [`run_baselines`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    /// Autoencoder gates select one expert per sample.
    ExpertGate,
    /// One model fine-tuned on each task in turn, old heads kept.
    SingleFineTuned,
    /// One model trained on each task in turn with LwF.
    SingleLwF,
    /// The per-task experts, selected by the true task.
    MultipleOracle,
    /// One shared body trained on all tasks at once.
    JointTraining,
    /// The expert with the highest softmax score on its own head wins.
    MostConfident,
    /// A task classifier trained on stored samples selects the expert.
    DiscriminativeGate,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 7] = [
        BaselineMethod::ExpertGate,
        BaselineMethod::SingleFineTuned,
        BaselineMethod::SingleLwF,
        BaselineMethod::MultipleOracle,
        BaselineMethod::JointTraining,
        BaselineMethod::MostConfident,
        BaselineMethod::DiscriminativeGate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::ExpertGate => "expert_gate",
            BaselineMethod::SingleFineTuned => "single_finetuned",
            BaselineMethod::SingleLwF => "single_lwf",
            BaselineMethod::MultipleOracle => "multiple_oracle",
            BaselineMethod::JointTraining => "joint_training",
            BaselineMethod::MostConfident => "most_confident",
            BaselineMethod::DiscriminativeGate => "discriminative_gate",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Settings for [`run_baselines`].
#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct BaselineConfig {
    pub pipeline: PipelineConfig,
    /// Standardization reference; `None` uses the first task's training data.
    pub reference: Option<ReferenceStats>,
    /// Samples per task kept for the discriminative task classifier.
    pub discriminative_samples: Option<usize>,
    /// Seed of the 80/10/10 train/validation/test split.
    pub split_seed: u64,
}


/// Per-task test accuracies of every method, plus gate diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceReport {
    pub tasks: Vec<String>,
    pub accuracies: Vec<(BaselineMethod, Vec<f64>)>,
    /// Fraction of test samples routed to their own task by the gates.
    pub gate_selection_accuracy: f64,
    /// Same for the discriminative task classifier.
    pub discriminative_selection_accuracy: f64,
    /// `confusion[true task][selected task]` counts for the gates.
    pub confusion: Vec<Vec<usize>>,
    pub relatedness: Vec<RelatednessReport>,
    /// Task-1 accuracy of the single fine-tuned model after each task.
    pub forgetting_curve: Vec<f64>,
}

impl SequenceReport {
    pub fn accuracy(&self, method: BaselineMethod) -> &[f64] {
        self.accuracies
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, a)| a.as_slice())
            .unwrap_or(&[])
    }

    pub fn average(&self, method: BaselineMethod) -> f64 {
        let a = self.accuracy(method);
        if a.is_empty() {
            return 0.0;
        }
        a.iter().sum::<f64>() / a.len() as f64
    }
}

/// Accuracy when `selected[r]` names the expert used for row `r`. A row
/// counts only if its own task was selected and that expert's head is right.
fn routed_accuracy(
    experts: &[ExpertModel],
    tasks: &[String],
    true_task: usize,
    data: &LabeledDataset,
    selected: &[usize],
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let own: Vec<usize> = (0..data.len()).filter(|&r| selected[r] == true_task).collect();
    if own.is_empty() {
        return Ok(0.0);
    }
    let p = predict(&experts[true_task], &tasks[true_task], &data.features().select_rows(&own))?;
    let correct = p
        .classes
        .iter()
        .zip(&own)
        .filter(|(c, &r)| **c == data.labels()[r])
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// The seeded 80/10/10 train/validation/test split of the `index`-th task.
pub fn evaluation_split(task: &LabeledDataset, split_seed: u64, index: usize) -> [LabeledDataset; 3] {
    let parts = split_indices(task.len(), &[0.8, 0.1, 0.1], split_seed ^ index as u64);
    [task.select(&parts[0]), task.select(&parts[1]), task.select(&parts[2])]
}

/// Trains every method on the task sequence and scores it per task.
pub fn run_baselines(tasks: &[LabeledDataset], config: &BaselineConfig) -> Result<SequenceReport> {
    run_baselines_with_store(tasks, config, InMemoryExperts::new()).map(|(r, _)| r)
}

/// [`run_baselines`] that keeps the Expert Gate registry, backed by `store`.
pub fn run_baselines_with_store<S: ExpertStore>(
    tasks: &[LabeledDataset],
    config: &BaselineConfig,
    store: S,
) -> Result<(SequenceReport, ModelRegistry<S>)> {
    if tasks.len() < 2 {
        return Err(Error::Parameter(format!(
            "baselines need at least 2 tasks, got {}",
            tasks.len()
        )));
    }
    let names: Vec<String> = tasks.iter().map(|t| String::from(t.task_name())).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::DuplicateTask(n.clone()));
        }
    }
    let pc = &config.pipeline;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        let [a, b, c] = evaluation_split(t, config.split_seed, i);
        train.push(a);
        val.push(b);
        test.push(c);
    }
    let k = tasks.len();

    // Expert Gate
    let mut registry = match &config.reference {
        Some(s) => ModelRegistry::with_reference_stats(store, pc.clone(), s.clone()),
        None => ModelRegistry::new(store, pc.clone()),
    };
    let mut relatedness = Vec::with_capacity(k);
    for i in 0..k {
        relatedness.push(registry.learn_task_split(&train[i], &val[i])?.report);
    }
    let mut experts = Vec::with_capacity(k);
    for i in 0..k {
        experts.push(registry.store().load_expert(i, &names[i])?);
    }
    let mut confusion = vec![vec![0usize; k]; k];
    let mut gate_acc = Vec::with_capacity(k);
    let mut oracle_acc = Vec::with_capacity(k);
    for (i, t) in test.iter().enumerate() {
        let inferred = registry.infer_batch(t.features())?;
        let selected: Vec<usize> = inferred.iter().map(|inf| inf.task_index).collect();
        for &s in &selected {
            confusion[i][s] += 1;
        }
        let correct = inferred
            .iter()
            .zip(t.labels())
            .filter(|(inf, &l)| inf.task_index == i && inf.class == l)
            .count();
        gate_acc.push(correct as f64 / t.len().max(1) as f64);
        oracle_acc.push(accuracy(&experts[i], t)?);
    }
    let routed: usize = (0..k).map(|i| confusion[i][i]).sum();
    let total: usize = test.iter().map(|t| t.len()).sum();

    // Most confident expert on its own head
    let mut confident_acc = Vec::with_capacity(k);
    for (i, t) in test.iter().enumerate() {
        let scores: Vec<Vec<f32>> = experts
            .iter()
            .zip(&names)
            .map(|(e, n)| Ok(predict(e, n, t.features())?.confidences()))
            .collect::<Result<_>>()?;
        let selected: Vec<usize> = (0..t.len())
            .map(|r| {
                let row: Vec<f32> = scores.iter().map(|s| s[r]).collect();
                argmax(&row)
            })
            .collect();
        confident_acc.push(routed_accuracy(&experts, &names, i, t, &selected)?);
    }

    // Discriminative task classifier
    let stats = registry.stats().expect("tasks learned").clone();
    let train_x: Vec<&Matrix<f32>> = train.iter().map(|t| t.features()).collect();
    let test_x: Vec<&Matrix<f32>> = test.iter().map(|t| t.features()).collect();
    let disc = train_discriminative_gate(
        &train_x,
        &test_x,
        &stats,
        config.discriminative_samples,
        &pc.expert_sgd,
    )?;
    let mut disc_acc = Vec::with_capacity(k);
    for (i, t) in test.iter().enumerate() {
        let selected = disc.gate.select(t.features())?;
        disc_acc.push(routed_accuracy(&experts, &names, i, t, &selected)?);
    }

    // Single sequential models
    let mut single_ft = train_scratch(&train[0], pc.hidden, &pc.expert_sgd)?;
    let mut single_lwf = single_ft.clone();
    let mut forgetting_curve = vec![accuracy(&single_ft, &test[0])?];
    for i in 1..k {
        let cfg = pc.expert_sgd.with_seed(super::task_seed(pc.expert_sgd.seed, i));
        single_ft = fine_tune(&single_ft, &train[i], &cfg)?;
        single_lwf = lwf_train(&single_lwf, &train[i], &cfg, pc.lwf_temperature, pc.lambda_old)?;
        forgetting_curve.push(accuracy(&single_ft, &test[0])?);
    }
    let ft_acc = test
        .iter()
        .map(|t| accuracy(&single_ft, t))
        .collect::<Result<Vec<_>>>()?;
    let lwf_acc = test
        .iter()
        .map(|t| accuracy(&single_lwf, t))
        .collect::<Result<Vec<_>>>()?;

    // Joint training on pooled data
    let refs: Vec<&LabeledDataset> = train.iter().collect();
    let joint = train_joint(&refs, pc.hidden, &pc.expert_sgd)?;
    let joint_acc = test
        .iter()
        .map(|t| accuracy(&joint, t))
        .collect::<Result<Vec<_>>>()?;

    let report = SequenceReport {
        tasks: names,
        accuracies: vec![
            (BaselineMethod::ExpertGate, gate_acc),
            (BaselineMethod::SingleFineTuned, ft_acc),
            (BaselineMethod::SingleLwF, lwf_acc),
            (BaselineMethod::MultipleOracle, oracle_acc),
            (BaselineMethod::JointTraining, joint_acc),
            (BaselineMethod::MostConfident, confident_acc),
            (BaselineMethod::DiscriminativeGate, disc_acc),
        ],
        gate_selection_accuracy: routed as f64 / total.max(1) as f64,
        discriminative_selection_accuracy: disc.accuracy,
        confusion,
        relatedness,
        forgetting_curve,
    };
    Ok((report, registry))
}
