//! Sequential task learning, lazy expert loading and evaluation baselines.

mod baselines;
mod discriminative;
mod registry;

pub use baselines::{
    evaluation_split, run_baselines, run_baselines_with_store, BaselineConfig, BaselineMethod,
    SequenceReport,
};
pub use discriminative::{train_discriminative_gate, DiscriminativeGate, DiscriminativeOutcome};
pub use registry::{
    ExpertStore, Inference, InMemoryExperts, LearnOutcome, ManifestEntry, ModelRegistry,
    MultiInference, ResidencyStats,
};

use serde::{Deserialize, Serialize};

use crate::experts::{DEFAULT_HIDDEN, DEFAULT_LWF_TEMPERATURE};
use crate::gate::DEFAULT_CODE_SIZE;
use crate::gating::{DEFAULT_ACTIVATION_THRESHOLD, DEFAULT_REL_THRESHOLD, DEFAULT_TEMPERATURE};
use crate::nn::SgdConfig;

/// Knobs of the lifelong-learning pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Gate code size; `None` picks `min(100, d / 2)`.
    pub code_size: Option<usize>,
    pub rel_threshold: f64,
    pub temperature: f64,
    pub activation_threshold: f64,
    pub gate_sgd: SgdConfig,
    pub expert_sgd: SgdConfig,
    pub hidden: usize,
    pub lwf_temperature: f32,
    pub lambda_old: f32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            code_size: None,
            rel_threshold: DEFAULT_REL_THRESHOLD,
            temperature: DEFAULT_TEMPERATURE,
            activation_threshold: DEFAULT_ACTIVATION_THRESHOLD,
            gate_sgd: SgdConfig::default(),
            expert_sgd: SgdConfig::default(),
            hidden: DEFAULT_HIDDEN,
            lwf_temperature: DEFAULT_LWF_TEMPERATURE,
            lambda_old: 1.0,
        }
    }
}

impl PipelineConfig {
    /// Code size for `input_dim`-dimensional features.
    pub fn code_size_for(&self, input_dim: usize) -> usize {
        self.code_size
            .unwrap_or_else(|| DEFAULT_CODE_SIZE.min(input_dim / 2).max(1))
    }

    /// Same seed for gates and experts.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.gate_sgd.seed = seed;
        self.expert_sgd.seed = seed;
        self
    }
}

/// Decorrelated per-task seed.
pub(crate) fn task_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}
