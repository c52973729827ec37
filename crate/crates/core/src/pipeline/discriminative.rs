use alloc::format;
use alloc::vec::Vec;

use crate::experts::{predict, train_scratch, ExpertModel, LabeledDataset};
use crate::nn::SgdConfig;
use crate::preprocess::{preprocess, ReferenceStats};
use crate::split::permutation;
use crate::{Error, Matrix, Result};

/// Hidden width of the task classifier, matching the gate code size.
pub const DISCRIMINATIVE_HIDDEN: usize = 100;

/// Small retained sets still get at least this many SGD updates.
const MIN_UPDATES: usize = 2000;

/// A one-hidden-layer classifier that predicts the task of a sample from
/// the same preprocessed representation the gates see. Unlike the gates it
/// needs stored samples from every task.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminativeGate {
    pub model: ExpertModel,
    pub stats: ReferenceStats,
}

/// Classifier plus its held-out task-selection accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminativeOutcome {
    pub gate: DiscriminativeGate,
    pub accuracy: f64,
    /// Whether some task had fewer samples than requested.
    pub truncated: bool,
}

const HEAD: &str = "task";

impl DiscriminativeGate {
    /// Predicted task index for every row of raw features.
    pub fn select(&self, x: &Matrix<f32>) -> Result<Vec<usize>> {
        let p = preprocess(x, &self.stats)?;
        Ok(predict(&self.model, HEAD, &p)?.classes)
    }
}

/// Trains the task classifier on at most `samples_per_task` rows of each
/// task (`None` keeps everything) and scores it on `test` sets.
pub fn train_discriminative_gate(
    train: &[&Matrix<f32>],
    test: &[&Matrix<f32>],
    stats: &ReferenceStats,
    samples_per_task: Option<usize>,
    config: &SgdConfig,
) -> Result<DiscriminativeOutcome> {
    if train.len() < 2 || test.len() != train.len() {
        return Err(Error::Parameter(format!(
            "need at least 2 tasks with matching test sets, got {} and {}",
            train.len(),
            test.len()
        )));
    }
    if samples_per_task == Some(0) {
        return Err(Error::Parameter("samples per task must be positive".into()));
    }
    let mut truncated = false;
    let mut parts = Vec::with_capacity(train.len());
    let mut labels = Vec::new();
    for (t, m) in train.iter().enumerate() {
        let keep = match samples_per_task {
            Some(k) if k > m.rows() => {
                log::warn!(
                    "task {t} has {} samples, fewer than the requested {k}; using all",
                    m.rows()
                );
                truncated = true;
                m.rows()
            }
            Some(k) => k,
            None => m.rows(),
        };
        let idx: Vec<usize> = permutation(m.rows(), config.seed ^ t as u64)
            .into_iter()
            .take(keep)
            .collect();
        parts.push(m.select_rows(&idx));
        labels.extend(core::iter::repeat_n(t, keep));
    }
    let refs: Vec<&Matrix<f32>> = parts.iter().collect();
    let features = preprocess(&Matrix::vstack(&refs)?, stats)?;
    let data = LabeledDataset::new(features, labels, train.len(), HEAD)?;

    let mut cfg = *config;
    let batches = data.len().div_ceil(cfg.batch_size);
    cfg.epochs = cfg.epochs.max(MIN_UPDATES.div_ceil(batches));
    let model = train_scratch(&data, DISCRIMINATIVE_HIDDEN, &cfg)?;
    let gate = DiscriminativeGate {
        model,
        stats: stats.clone(),
    };

    let mut correct = 0usize;
    let mut total = 0usize;
    for (t, m) in test.iter().enumerate() {
        let chosen = gate.select(m)?;
        correct += chosen.iter().filter(|&&c| c == t).count();
        total += chosen.len();
    }
    Ok(DiscriminativeOutcome {
        gate,
        accuracy: correct as f64 / total.max(1) as f64,
        truncated,
    })
}
