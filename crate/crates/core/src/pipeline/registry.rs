use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{task_seed, PipelineConfig};
use crate::experts::{fine_tune, lwf_train, predict, train_scratch, ExpertModel, LabeledDataset};
use crate::gate::{train_gate_on_split, AutoencoderGate, GateTrainReport, GateVariant};
use crate::gating::{
    route_batch, select_most_related, GateEnsemble, RelatednessReport, RoutingDecision,
    TransferMethod,
};
use crate::preprocess::{compute_reference_stats, ReferenceStats};
use crate::split::train_validation;
use crate::{Error, Matrix, Result};

/// Where experts live while they are not resident.
pub trait ExpertStore {
    fn save_expert(&mut self, index: usize, task: &str, model: &ExpertModel) -> Result<()>;
    fn load_expert(&self, index: usize, task: &str) -> Result<ExpertModel>;
}

/// Keeps every expert in memory; loading hands out a copy.
#[derive(Clone, Debug, Default)]
pub struct InMemoryExperts {
    experts: Vec<ExpertModel>,
}

impl InMemoryExperts {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ExpertStore for InMemoryExperts {
    fn save_expert(&mut self, index: usize, _task: &str, model: &ExpertModel) -> Result<()> {
        if index < self.experts.len() {
            self.experts[index] = model.clone();
        } else if index == self.experts.len() {
            self.experts.push(model.clone());
        } else {
            return Err(Error::Store(format!("expert slot {index} skips ahead")));
        }
        Ok(())
    }

    fn load_expert(&self, index: usize, task: &str) -> Result<ExpertModel> {
        self.experts
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Store(format!("no expert stored for `{task}`")))
    }
}

/// One learned task, in arrival order.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub task_name: String,
    pub method: TransferMethod,
    pub chosen_prior: String,
    /// Relatedness to the chosen prior; `None` when the base model was used.
    pub rel: Option<f64>,
}

/// Counters for expert residency during inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResidencyStats {
    pub loads: usize,
    pub evictions: usize,
    pub resident: usize,
    pub peak_resident: usize,
}

/// Result of [`ModelRegistry::learn_task`].
#[derive(Clone, Debug, PartialEq)]
pub struct LearnOutcome {
    pub report: RelatednessReport,
    pub gate_report: GateTrainReport,
}

/// Prediction of the expert behind the selected gate.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub task_index: usize,
    pub task_name: String,
    pub class: usize,
    pub probabilities: Vec<f32>,
    pub decision: RoutingDecision,
}

/// Predictions of every activated expert, evaluated one at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiInference {
    pub decision: RoutingDecision,
    /// `(task index, predicted class, confidence)` per activated expert.
    pub predictions: Vec<(usize, usize, f32)>,
}

/// All gates plus a handle to the experts, of which at most one is held in
/// memory at a time.
#[derive(Debug)]
pub struct ModelRegistry<S> {
    config: PipelineConfig,
    reference: Option<ReferenceStats>,
    ensemble: Option<GateEnsemble>,
    manifest: Vec<ManifestEntry>,
    store: S,
    resident: Option<(usize, ExpertModel)>,
    residency: ResidencyStats,
}

impl<S: ExpertStore> ModelRegistry<S> {
    /// Empty registry; the first task's training features become the
    /// standardization reference.
    pub fn new(store: S, config: PipelineConfig) -> Self {
        Self {
            config,
            reference: None,
            ensemble: None,
            manifest: Vec::new(),
            store,
            resident: None,
            residency: ResidencyStats::default(),
        }
    }

    /// Empty registry standardizing with explicit reference statistics.
    pub fn with_reference_stats(store: S, config: PipelineConfig, stats: ReferenceStats) -> Self {
        let mut r = Self::new(store, config);
        r.reference = Some(stats);
        r
    }

    /// Reassembles a registry from persisted parts.
    pub fn from_parts(
        store: S,
        config: PipelineConfig,
        ensemble: GateEnsemble,
        manifest: Vec<ManifestEntry>,
    ) -> Result<Self> {
        if ensemble.len() != manifest.len() {
            return Err(Error::Store(format!(
                "{} gates for {} manifest rows",
                ensemble.len(),
                manifest.len()
            )));
        }
        for (g, m) in ensemble.gates().iter().zip(&manifest) {
            if g.task_name != m.task_name {
                return Err(Error::Store(format!(
                    "gate `{}` out of order with manifest row `{}`",
                    g.task_name, m.task_name
                )));
            }
        }
        let mut r = Self::new(store, config);
        r.reference = Some(ensemble.stats().clone());
        r.ensemble = Some(ensemble);
        r.manifest = manifest;
        Ok(r)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut PipelineConfig {
        &mut self.config
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    pub fn ensemble(&self) -> Option<&GateEnsemble> {
        self.ensemble.as_ref()
    }

    pub fn stats(&self) -> Option<&ReferenceStats> {
        self.ensemble
            .as_ref()
            .map(GateEnsemble::stats)
            .or(self.reference.as_ref())
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn residency(&self) -> ResidencyStats {
        self.residency
    }

    pub fn resident_task(&self) -> Option<usize> {
        self.resident.as_ref().map(|(i, _)| *i)
    }

    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }

    fn evict(&mut self) {
        if self.resident.take().is_some() {
            self.residency.evictions += 1;
            self.residency.resident -= 1;
        }
    }

    /// Makes expert `index` the only resident expert.
    fn ensure_resident(&mut self, index: usize) -> Result<&ExpertModel> {
        if self.resident_task() != Some(index) {
            self.evict();
            let name = &self.manifest[index].task_name;
            let model = self.store.load_expert(index, name)?;
            self.residency.loads += 1;
            self.residency.resident += 1;
            self.residency.peak_resident = self.residency.peak_resident.max(self.residency.resident);
            self.resident = Some((index, model));
        }
        Ok(&self.resident.as_ref().expect("just loaded").1)
    }

    /// Loads an expert for inspection, respecting the residency limit.
    pub fn expert(&mut self, index: usize) -> Result<&ExpertModel> {
        if index >= self.manifest.len() {
            return Err(Error::Parameter(format!("no task at index {index}")));
        }
        self.ensure_resident(index)
    }

    /// Learns a new task from its data alone, holding out 10% for gate
    /// validation and relatedness.
    pub fn learn_task(&mut self, data: &LabeledDataset) -> Result<LearnOutcome> {
        let seed = task_seed(self.config.gate_sgd.seed, self.manifest.len()) ^ 0xa11;
        let (train, val) = train_validation(data.len(), seed);
        self.learn_task_split(&data.select(&train), &data.select(&val))
    }

    /// Learns a new task from an explicit train/validation partition.
    ///
    /// Trains the task's gate, measures relatedness to every earlier gate on
    /// the validation data, then trains the expert from the most related
    /// prior with LwF (relatedness above the threshold) or fine-tuning. The
    /// first task has no prior and is trained from scratch.
    pub fn learn_task_split(
        &mut self,
        train: &LabeledDataset,
        validation: &LabeledDataset,
    ) -> Result<LearnOutcome> {
        let name = train.task_name();
        if self.manifest.iter().any(|m| m.task_name == name) {
            return Err(Error::DuplicateTask(name.into()));
        }
        if validation.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let index = self.manifest.len();
        let stats = match self.stats() {
            Some(s) => s.clone(),
            None => compute_reference_stats(train.features(), format!("task:{name}"))?,
        };
        let code_size = self.config.code_size_for(train.dim());
        let mut gate_cfg = self.config.gate_sgd;
        gate_cfg.seed = task_seed(gate_cfg.seed, index);
        let (gate, gate_report) = train_gate_on_split(
            name,
            train.features(),
            validation.features(),
            &stats,
            code_size,
            &gate_cfg,
            GateVariant::Standard,
        )?;
        let report = match &self.ensemble {
            Some(e) => select_most_related(e, &gate, validation.features(), self.config.rel_threshold)?,
            None => select_most_related(
                &GateEnsemble::new(stats.clone(), self.config.temperature)?,
                &gate,
                validation.features(),
                self.config.rel_threshold,
            )?,
        };

        let mut expert_cfg = self.config.expert_sgd;
        expert_cfg.seed = task_seed(expert_cfg.seed, index);
        let expert = match report.chosen_index {
            None => train_scratch(train, self.config.hidden, &expert_cfg)?,
            Some(prior_index) => {
                let (lwf_t, lambda) = (self.config.lwf_temperature, self.config.lambda_old);
                let method = report.method;
                let prior = self.ensure_resident(prior_index)?;
                match method {
                    TransferMethod::LwF => lwf_train(prior, train, &expert_cfg, lwf_t, lambda)?,
                    TransferMethod::FineTune => fine_tune(prior, train, &expert_cfg)?,
                }
            }
        };
        self.evict();
        self.store.save_expert(index, name, &expert)?;

        let ensemble = match self.ensemble.take() {
            Some(e) => e,
            None => GateEnsemble::new(stats, self.config.temperature)?,
        };
        let mut ensemble = ensemble;
        ensemble.push(gate)?;
        self.ensemble = Some(ensemble);
        self.manifest.push(ManifestEntry {
            task_name: name.into(),
            method: report.method,
            chosen_prior: report.chosen_prior.clone(),
            rel: report.chosen_rel(),
        });
        Ok(LearnOutcome {
            report,
            gate_report,
        })
    }

    fn ensemble_or_err(&self) -> Result<&GateEnsemble> {
        self.ensemble.as_ref().ok_or(Error::EmptyRegistry)
    }

    /// Routes every row of `x` without touching experts.
    pub fn route(&self, x: &Matrix<f32>) -> Result<Vec<RoutingDecision>> {
        route_batch(self.ensemble_or_err()?, x, self.config.activation_threshold)
    }

    /// Routes one sample and classifies it with the selected expert's own head.
    pub fn infer(&mut self, x: &[f32]) -> Result<Inference> {
        Ok(self
            .infer_batch(&Matrix::row_vector(x))?
            .pop()
            .expect("one row"))
    }

    /// [`ModelRegistry::infer`] for every row, in order. Consecutive rows
    /// routed to the same expert reuse it; any other switch evicts first.
    pub fn infer_batch(&mut self, x: &Matrix<f32>) -> Result<Vec<Inference>> {
        let decisions = self.route(x)?;
        let mut out = Vec::with_capacity(decisions.len());
        for (r, decision) in decisions.into_iter().enumerate() {
            let index = decision.selected;
            let task = self.manifest[index].task_name.clone();
            let expert = self.ensure_resident(index)?;
            let p = predict(expert, &task, &Matrix::row_vector(x.row(r)))?;
            out.push(Inference {
                task_index: index,
                task_name: task,
                class: p.classes[0],
                probabilities: p.probabilities.row(0).to_vec(),
                decision,
            });
        }
        Ok(out)
    }

    /// Evaluates every expert whose routing probability reaches the
    /// activation threshold, loading them one after another.
    pub fn infer_multi(&mut self, x: &[f32]) -> Result<MultiInference> {
        let decision = self.route(&Matrix::row_vector(x))?.pop().expect("one row");
        let sample = Matrix::row_vector(x);
        let mut predictions = Vec::with_capacity(decision.activated.len());
        for &index in &decision.activated {
            let task = self.manifest[index].task_name.clone();
            let expert = self.ensure_resident(index)?;
            let p = predict(expert, &task, &sample)?;
            predictions.push((index, p.classes[0], p.confidences()[0]));
        }
        Ok(MultiInference {
            decision,
            predictions,
        })
    }

    /// Gate of a task, if learned.
    pub fn gate(&self, task: &str) -> Option<&AutoencoderGate> {
        let e = self.ensemble.as_ref()?;
        e.index_of(task).map(|i| &e.gates()[i])
    }

    pub fn into_parts(self) -> (S, Option<GateEnsemble>, Vec<ManifestEntry>) {
        (self.store, self.ensemble, self.manifest)
    }
}
