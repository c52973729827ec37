//! Per-task expert classifiers.
//!
//! An expert is a one-hidden-layer MLP: a shared ReLU body and one logit head
//! per task it knows. New experts start from a prior expert and are trained
//! either by fine-tuning (new-task loss only) or by learning without
//! forgetting, where the prior's heads are held to their own temperature-
//! softened outputs on the new task's data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gating::argmax;
use crate::nn::{
    distillation_with_grad, softmax_cross_entropy, softmax_rows, Activation, DenseLayer,
    LayerGrads, LayerMomentum, Objective, SgdConfig,
};
use crate::split::rng;
use crate::{Error, Matrix, Result, Scalar};

/// Default hidden width of an expert.
pub const DEFAULT_HIDDEN: usize = 128;
/// Default distillation temperature.
pub const DEFAULT_LWF_TEMPERATURE: f32 = 2.0;
/// Minimum number of samples accepted for training.
pub const MIN_EXPERT_SAMPLES: usize = 10;

/// Features with integer class labels for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Matrix<f32>,
    labels: Vec<usize>,
    class_count: usize,
    task_name: String,
}

impl LabeledDataset {
    pub fn new(
        features: Matrix<f32>,
        labels: Vec<usize>,
        class_count: usize,
        task_name: impl Into<String>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Parameter(format!(
                "label {bad} outside {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            task_name: task_name.into(),
        })
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn task_name(&self) -> &str {
        &self.task_name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Subset with the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            task_name: self.task_name.clone(),
        }
    }

    pub fn with_task_name(mut self, name: impl Into<String>) -> Self {
        self.task_name = name.into();
        self
    }
}

/// How an expert was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainMethod {
    Scratch,
    FineTune,
    LwF,
}

impl TrainMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMethod::Scratch => "scratch",
            TrainMethod::FineTune => "finetune",
            TrainMethod::LwF => "lwf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scratch" => Some(TrainMethod::Scratch),
            "finetune" => Some(TrainMethod::FineTune),
            "lwf" => Some(TrainMethod::LwF),
            _ => None,
        }
    }
}

impl fmt::Display for TrainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A task-specific head on top of the shared body.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub task: String,
    pub layer: DenseLayer<f32>,
}

/// Shared ReLU body plus per-task logit heads.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertModel {
    pub body: DenseLayer<f32>,
    heads: Vec<Head>,
    pub origin: String,
    pub method: TrainMethod,
}

/// Class predictions with their softmax probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    pub probabilities: Matrix<f32>,
}

impl Prediction {
    /// Probability of the predicted class for each row.
    pub fn confidences(&self) -> Vec<f32> {
        self.classes
            .iter()
            .enumerate()
            .map(|(r, &c)| self.probabilities.get(r, c))
            .collect()
    }
}

impl ExpertModel {
    /// Assembles a model from stored layers.
    pub fn from_parts(
        body: DenseLayer<f32>,
        heads: Vec<Head>,
        origin: impl Into<String>,
        method: TrainMethod,
    ) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::Parameter("an expert needs at least one head".into()));
        }
        for h in &heads {
            if h.layer.input_dim() != body.output_dim() {
                return Err(Error::Dimension(format!(
                    "head `{}` expects {} hidden units, body has {}",
                    h.task,
                    h.layer.input_dim(),
                    body.output_dim()
                )));
            }
        }
        Ok(Self {
            body,
            heads,
            origin: origin.into(),
            method,
        })
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn input_dim(&self) -> usize {
        self.body.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.body.output_dim()
    }

    pub fn head_index(&self, task: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.task == task)
    }

    /// Logits of one head.
    pub fn logits(&self, task: &str, x: &Matrix<f32>) -> Result<Matrix<f32>> {
        let head = self
            .head_index(task)
            .ok_or_else(|| Error::UnknownHead(task.into()))?;
        self.check_input(x)?;
        self.heads[head].layer.pre_activation(&self.body.forward(x)?)
    }

    fn check_input(&self, x: &Matrix<f32>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "expert expects {} features, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Installs a freshly initialized head for `task`, replacing any head of
    /// that name in place. Returns its index.
    fn install_head<R: Rng + ?Sized>(&mut self, task: &str, classes: usize, rng: &mut R) -> usize {
        let layer = DenseLayer::glorot(self.hidden_dim(), classes, Activation::Identity, rng);
        match self.head_index(task) {
            Some(i) => {
                self.heads[i].layer = layer;
                i
            }
            None => {
                self.heads.push(Head {
                    task: task.into(),
                    layer,
                });
                self.heads.len() - 1
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.body.is_finite() && self.heads.iter().all(|h| h.layer.is_finite())
    }
}

/// `argmax softmax(head(body(x)))` for the head of `task`.
pub fn predict(model: &ExpertModel, task: &str, x: &Matrix<f32>) -> Result<Prediction> {
    let logits = model.logits(task, x)?;
    let probabilities = softmax_rows(&logits, 1.0);
    let classes = probabilities.row_iter().map(argmax).collect();
    Ok(Prediction {
        classes,
        probabilities,
    })
}

/// Fraction of `data` classified correctly by the head named after the
/// dataset's task.
pub fn accuracy(model: &ExpertModel, data: &LabeledDataset) -> Result<f64> {
    accuracy_with_head(model, data.task_name(), data)
}

pub fn accuracy_with_head(model: &ExpertModel, head: &str, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let p = predict(model, head, data.features())?;
    let correct = p
        .classes
        .iter()
        .zip(data.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Soft targets for one old head: `softmax(logits / T)` of the prior.
#[derive(Clone, Debug)]
struct SoftTargets<T> {
    head: usize,
    probs: Matrix<T>,
}

/// Everything the expert loss needs besides the parameters.
#[derive(Clone, Copy, Debug)]
struct LossSpec<'a, T> {
    labels: &'a [usize],
    new_head: usize,
    soft: &'a [SoftTargets<T>],
    lambda_old: T,
    temperature: T,
}

/// Combined loss `CE(new head) + λ Σ distill(old heads)` with gradients for
/// the body and every head (`None` for heads outside the loss).
fn expert_loss_and_grads<T: Scalar>(
    body: &DenseLayer<T>,
    heads: &[&DenseLayer<T>],
    x: &Matrix<T>,
    spec: LossSpec<'_, T>,
) -> Result<(T, LayerGrads<T>, Vec<Option<LayerGrads<T>>>)> {
    let (z, h) = body.forward_cached(x)?;
    let mut head_grads: Vec<Option<LayerGrads<T>>> = vec![None; heads.len()];
    let mut dh = Matrix::zeros(h.rows(), h.cols());

    let mut accumulate = |idx: usize, dlogits: Matrix<T>, dh: &mut Matrix<T>| -> Result<()> {
        let (g, dhi) = heads[idx].backward(&h, &dlogits)?;
        for (a, &b) in dh.as_mut_slice().iter_mut().zip(dhi.as_slice()) {
            *a = *a + b;
        }
        match &mut head_grads[idx] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
        Ok(())
    };

    let logits = heads[spec.new_head].pre_activation(&h)?;
    let (mut loss, dlogits) = softmax_cross_entropy(spec.labels, &logits)?;
    accumulate(spec.new_head, dlogits, &mut dh)?;

    if spec.lambda_old != T::zero() {
        for st in spec.soft {
            let logits = heads[st.head].pre_activation(&h)?;
            let (l, g) = distillation_with_grad(&st.probs, &logits, spec.temperature)?;
            loss = loss + spec.lambda_old * l;
            accumulate(st.head, g.map(|v| v * spec.lambda_old), &mut dh)?;
        }
    }
    let dz = body.output_grad_to_pre(&z, &h, &dh);
    let (g_body, _) = body.backward(x, &dz)?;
    Ok((loss, g_body, head_grads))
}

fn validate_training(data: &LabeledDataset, config: &SgdConfig) -> Result<()> {
    config.validate()?;
    if data.len() < MIN_EXPERT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_EXPERT_SAMPLES,
            got: data.len(),
        });
    }
    if data.class_count() < 2 {
        return Err(Error::Parameter(format!(
            "task `{}` needs at least 2 classes, has {}",
            data.task_name(),
            data.class_count()
        )));
    }
    if !data.features().is_finite() {
        return Err(Error::Parameter("expert features must be finite".into()));
    }
    Ok(())
}

/// Runs SGD on `model` for the head at `new_head`, optionally distilling the
/// heads listed in `soft`. Heads outside the loss are left untouched.
fn optimize(
    model: &mut ExpertModel,
    data: &LabeledDataset,
    new_head: usize,
    soft: &[SoftTargets<f32>],
    lambda_old: f32,
    temperature: f32,
    config: &SgdConfig,
) -> Result<()> {
    let mut body_m = LayerMomentum::new(&model.body);
    let mut head_m: Vec<LayerMomentum<f32>> =
        model.heads.iter().map(|h| LayerMomentum::new(&h.layer)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng(config.seed.wrapping_add(1));
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let x = data.features().select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let batch_soft: Vec<SoftTargets<f32>> = soft
                .iter()
                .map(|s| SoftTargets {
                    head: s.head,
                    probs: s.probs.select_rows(chunk),
                })
                .collect();
            let heads: Vec<&DenseLayer<f32>> = model.heads.iter().map(|h| &h.layer).collect();
            let (_, g_body, g_heads) = expert_loss_and_grads(
                &model.body,
                &heads,
                &x,
                LossSpec {
                    labels: &labels,
                    new_head,
                    soft: &batch_soft,
                    lambda_old,
                    temperature,
                },
            )?;
            body_m.step(&mut model.body, &g_body, config)?;
            for ((head, m), g) in model.heads.iter_mut().zip(&mut head_m).zip(&g_heads) {
                if let Some(g) = g {
                    m.step(&mut head.layer, g, config)?;
                }
            }
        }
    }
    if !model.is_finite() {
        return Err(Error::Parameter(
            "expert training diverged; lower the learning rate".into(),
        ));
    }
    Ok(())
}

/// Trains a fresh expert with one head for `data`'s task.
pub fn train_scratch(data: &LabeledDataset, hidden: usize, config: &SgdConfig) -> Result<ExpertModel> {
    validate_training(data, config)?;
    if hidden == 0 {
        return Err(Error::Parameter("hidden width must be positive".into()));
    }
    let mut r = rng(config.seed);
    let body = DenseLayer::glorot(data.dim(), hidden, Activation::Relu, &mut r);
    let mut model = ExpertModel {
        body,
        heads: Vec::new(),
        origin: crate::gating::BASE_MODEL.into(),
        method: TrainMethod::Scratch,
    };
    let head = model.install_head(data.task_name(), data.class_count(), &mut r);
    optimize(&mut model, data, head, &[], 0.0, 1.0, config)?;
    Ok(model)
}

fn derive(prior: &ExpertModel, data: &LabeledDataset, config: &SgdConfig, method: TrainMethod) -> Result<(ExpertModel, usize)> {
    validate_training(data, config)?;
    if prior.input_dim() != data.dim() {
        return Err(Error::Dimension(format!(
            "prior expects {} features, task `{}` has {}",
            prior.input_dim(),
            data.task_name(),
            data.dim()
        )));
    }
    let mut model = prior.clone();
    model.origin = prior
        .heads
        .last()
        .map(|h| h.task.clone())
        .unwrap_or_default();
    model.method = method;
    let mut r = rng(config.seed);
    let head = model.install_head(data.task_name(), data.class_count(), &mut r);
    Ok((model, head))
}

/// Starts from `prior`, adds a fresh head for the new task and trains the
/// body and that head on the new-task loss alone. Earlier heads are kept but
/// receive no updates.
pub fn fine_tune(prior: &ExpertModel, data: &LabeledDataset, config: &SgdConfig) -> Result<ExpertModel> {
    let (mut model, head) = derive(prior, data, config, TrainMethod::FineTune)?;
    optimize(&mut model, data, head, &[], 0.0, 1.0, config)?;
    Ok(model)
}

/// Learning without forgetting: records the prior's softened outputs of every
/// existing head on the new data, then trains all parameters on the new-task
/// loss plus `lambda_old` times the distillation loss of each old head.
pub fn lwf_train(
    prior: &ExpertModel,
    data: &LabeledDataset,
    config: &SgdConfig,
    temperature: f32,
    lambda_old: f32,
) -> Result<ExpertModel> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if prior.heads.is_empty() {
        return Err(Error::Parameter("prior has no heads to preserve".into()));
    }
    let (mut model, head) = derive(prior, data, config, TrainMethod::LwF)?;
    let hidden = prior.body.forward(data.features())?;
    let soft: Vec<SoftTargets<f32>> = prior
        .heads
        .iter()
        .enumerate()
        .filter(|(_, h)| h.task != data.task_name())
        .map(|(i, h)| {
            let logits = h.layer.pre_activation(&hidden)?;
            Ok(SoftTargets {
                head: i,
                probs: softmax_rows(&logits, temperature),
            })
        })
        .collect::<Result<_>>()?;
    optimize(&mut model, data, head, &soft, lambda_old, temperature, config)?;
    Ok(model)
}

/// One shared body with a head per task, trained on all tasks at once. Each
/// mini-batch comes from a single task drawn uniformly at random.
pub fn train_joint(datasets: &[&LabeledDataset], hidden: usize, config: &SgdConfig) -> Result<ExpertModel> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::Parameter("joint training needs at least one task".into()))?;
    for d in datasets {
        validate_training(d, config)?;
        if d.dim() != first.dim() {
            return Err(Error::Dimension("joint tasks must share a feature dimension".into()));
        }
    }
    let mut r = rng(config.seed);
    let mut model = ExpertModel {
        body: DenseLayer::glorot(first.dim(), hidden, Activation::Relu, &mut r),
        heads: Vec::new(),
        origin: crate::gating::BASE_MODEL.into(),
        method: TrainMethod::Scratch,
    };
    let head_ids: Vec<usize> = datasets
        .iter()
        .map(|d| model.install_head(d.task_name(), d.class_count(), &mut r))
        .collect();
    if head_ids.len() != datasets.len() {
        return Err(Error::DuplicateTask("joint training task names".into()));
    }
    let mut body_m = LayerMomentum::new(&model.body);
    let mut head_m: Vec<LayerMomentum<f32>> =
        model.heads.iter().map(|h| LayerMomentum::new(&h.layer)).collect();
    let mut orders: Vec<Vec<usize>> = datasets.iter().map(|d| (0..d.len()).collect()).collect();
    let mut cursors = vec![usize::MAX; datasets.len()];
    let total: usize = datasets.iter().map(|d| d.len()).sum();
    let steps = config.epochs * total.div_ceil(config.batch_size);
    let mut sample_rng = rng(config.seed.wrapping_add(1));
    for _ in 0..steps {
        let t = sample_rng.random_range(0..datasets.len());
        let data = datasets[t];
        let mut chunk = Vec::with_capacity(config.batch_size);
        while chunk.len() < config.batch_size.min(data.len()) {
            if cursors[t] >= orders[t].len() {
                orders[t].shuffle(&mut sample_rng);
                cursors[t] = 0;
            }
            chunk.push(orders[t][cursors[t]]);
            cursors[t] += 1;
        }
        let x = data.features().select_rows(&chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
        let heads: Vec<&DenseLayer<f32>> = model.heads.iter().map(|h| &h.layer).collect();
        let (_, g_body, g_heads) = expert_loss_and_grads(
            &model.body,
            &heads,
            &x,
            LossSpec {
                labels: &labels,
                new_head: head_ids[t],
                soft: &[],
                lambda_old: 0.0,
                temperature: 1.0,
            },
        )?;
        body_m.step(&mut model.body, &g_body, config)?;
        for ((head, m), g) in model.heads.iter_mut().zip(&mut head_m).zip(&g_heads) {
            if let Some(g) = g {
                m.step(&mut head.layer, g, config)?;
            }
        }
    }
    Ok(model)
}

/// Expert loss (classification plus distillation) as an [`Objective`] in
/// `f64`, over body parameters followed by each head's parameters.
#[derive(Clone, Debug)]
pub struct ExpertObjective {
    body: DenseLayer<f64>,
    heads: Vec<DenseLayer<f64>>,
    input: Matrix<f64>,
    labels: Vec<usize>,
    new_head: usize,
    soft: Vec<SoftTargets<f64>>,
    lambda_old: f64,
    temperature: f64,
}

impl ExpertObjective {
    /// Builds the LwF objective for training `model`'s head `new_task` on
    /// `data`, distilling toward `prior`'s outputs on every other head of
    /// `prior`. Pass `lambda_old = 0` for plain classification.
    pub fn new(
        model: &ExpertModel,
        prior: Option<&ExpertModel>,
        new_task: &str,
        data: &LabeledDataset,
        temperature: f64,
        lambda_old: f64,
    ) -> Result<Self> {
        let new_head = model
            .head_index(new_task)
            .ok_or_else(|| Error::UnknownHead(new_task.into()))?;
        let input: Matrix<f64> = data.features().cast();
        let mut soft = Vec::new();
        if let Some(prior) = prior {
            let body: DenseLayer<f64> = prior.body.cast();
            let hidden = body.forward(&input)?;
            for h in prior.heads.iter().filter(|h| h.task != new_task) {
                let idx = model
                    .head_index(&h.task)
                    .ok_or_else(|| Error::UnknownHead(h.task.clone()))?;
                let logits = h.layer.cast::<f64>().pre_activation(&hidden)?;
                soft.push(SoftTargets {
                    head: idx,
                    probs: softmax_rows(&logits, temperature),
                });
            }
        }
        Ok(Self {
            body: model.body.cast(),
            heads: model.heads.iter().map(|h| h.layer.cast()).collect(),
            input,
            labels: data.labels().to_vec(),
            new_head,
            soft,
            lambda_old,
            temperature,
        })
    }

    fn locate(&self, mut i: usize) -> (Option<usize>, usize) {
        if i < self.body.parameter_count() {
            return (None, i);
        }
        i -= self.body.parameter_count();
        for (h, layer) in self.heads.iter().enumerate() {
            if i < layer.parameter_count() {
                return (Some(h), i);
            }
            i -= layer.parameter_count();
        }
        panic!("parameter index out of range");
    }

    fn evaluate(&self) -> (f64, LayerGrads<f64>, Vec<Option<LayerGrads<f64>>>) {
        let heads: Vec<&DenseLayer<f64>> = self.heads.iter().collect();
        expert_loss_and_grads(
            &self.body,
            &heads,
            &self.input,
            LossSpec {
                labels: &self.labels,
                new_head: self.new_head,
                soft: &self.soft,
                lambda_old: self.lambda_old,
                temperature: self.temperature,
            },
        )
        .expect("shapes fixed")
    }
}

impl Objective for ExpertObjective {
    fn parameter_count(&self) -> usize {
        self.body.parameter_count() + self.heads.iter().map(|h| h.parameter_count()).sum::<usize>()
    }

    fn parameter(&self, index: usize) -> f64 {
        match self.locate(index) {
            (None, i) => self.body.parameter(i),
            (Some(h), i) => self.heads[h].parameter(i),
        }
    }

    fn set_parameter(&mut self, index: usize, value: f64) {
        match self.locate(index) {
            (None, i) => *self.body.parameter_mut(i) = value,
            (Some(h), i) => *self.heads[h].parameter_mut(i) = value,
        }
    }

    fn loss(&self) -> f64 {
        self.evaluate().0
    }

    fn gradient(&self) -> Vec<f64> {
        let (_, gb, gh) = self.evaluate();
        let mut out: Vec<f64> = (0..self.body.parameter_count()).map(|i| gb.parameter(i)).collect();
        for (layer, g) in self.heads.iter().zip(&gh) {
            match g {
                Some(g) => out.extend((0..layer.parameter_count()).map(|i| g.parameter(i))),
                None => out.extend(core::iter::repeat_n(0.0, layer.parameter_count())),
            }
        }
        out
    }
}
