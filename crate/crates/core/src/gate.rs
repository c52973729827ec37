//! One-layer undercomplete autoencoder gates.
//!
//! The encoder is a fully connected layer with ReLU, the decoder a fully
//! connected layer with a sigmoid. Training minimizes binary cross-entropy
//! between the preprocessed input and its reconstruction; at test time the
//! gate reports the squared Euclidean reconstruction error divided by the
//! input dimension.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;

use crate::nn::{
    sigmoid_cross_entropy_with_logits, squared_error_rows, squared_error_with_grad, Activation,
    DenseLayer, LayerGrads, LayerMomentum, Objective, SgdConfig,
};
use crate::preprocess::{preprocess, ReferenceStats};
use crate::split::{rng, train_validation};
use crate::{Error, Matrix, Result, Scalar};

/// Default code size.
pub const DEFAULT_CODE_SIZE: usize = 100;

/// Minimum number of samples accepted by [`train_gate`].
pub const MIN_GATE_SAMPLES: usize = 10;

/// Layer configuration of a gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateVariant {
    /// ReLU encoder, sigmoid decoder, cross-entropy training loss.
    Standard,
    /// Identity encoder and decoder trained on squared error. Used to
    /// compare against PCA; not meant for routing.
    Linear,
}

impl GateVariant {
    fn activations(self) -> (Activation, Activation) {
        match self {
            GateVariant::Standard => (Activation::Relu, Activation::Sigmoid),
            GateVariant::Linear => (Activation::Identity, Activation::Identity),
        }
    }
}

/// A trained (or freshly initialized) autoencoder gate for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderGate {
    pub encoder: DenseLayer<f32>,
    pub decoder: DenseLayer<f32>,
    pub stats_source_id: String,
    pub task_name: String,
    pub train_loss_history: Vec<f32>,
}

/// Summary of one gate training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateTrainReport {
    pub epochs_run: usize,
    pub final_train_loss: f32,
    pub final_val_error: f32,
}

impl AutoencoderGate {
    /// Glorot-initialized gate that has not seen any data.
    pub fn untrained(
        task_name: impl Into<String>,
        input_dim: usize,
        code_size: usize,
        stats: &ReferenceStats,
        variant: GateVariant,
        seed: u64,
    ) -> Result<Self> {
        if code_size == 0 || code_size >= input_dim {
            return Err(Error::UndercompleteViolation {
                code_size,
                input_dim,
            });
        }
        if stats.dim() != input_dim {
            return Err(Error::Dimension(format!(
                "gate input dimension {input_dim} does not match statistics dimension {}",
                stats.dim()
            )));
        }
        let (enc_act, dec_act) = variant.activations();
        let mut r = rng(seed);
        Ok(Self {
            encoder: DenseLayer::glorot(input_dim, code_size, enc_act, &mut r),
            decoder: DenseLayer::glorot(code_size, input_dim, dec_act, &mut r),
            stats_source_id: stats.source_id().into(),
            task_name: task_name.into(),
            train_loss_history: Vec::new(),
        })
    }

    /// Reassembles a gate from stored layers.
    pub fn from_layers(
        task_name: impl Into<String>,
        encoder: DenseLayer<f32>,
        decoder: DenseLayer<f32>,
        stats_source_id: impl Into<String>,
    ) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim()
            || encoder.input_dim() != decoder.output_dim()
        {
            return Err(Error::Dimension(format!(
                "encoder {}->{} does not mirror decoder {}->{}",
                encoder.input_dim(),
                encoder.output_dim(),
                decoder.input_dim(),
                decoder.output_dim()
            )));
        }
        if encoder.output_dim() >= encoder.input_dim() {
            return Err(Error::UndercompleteViolation {
                code_size: encoder.output_dim(),
                input_dim: encoder.input_dim(),
            });
        }
        Ok(Self {
            encoder,
            decoder,
            stats_source_id: stats_source_id.into(),
            task_name: task_name.into(),
            train_loss_history: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn code_size(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn variant(&self) -> GateVariant {
        match self.decoder.activation {
            Activation::Sigmoid => GateVariant::Standard,
            _ => GateVariant::Linear,
        }
    }

    /// `g(h(x))` for already preprocessed rows.
    pub fn reconstruct(&self, preprocessed: &Matrix<f32>) -> Result<Matrix<f32>> {
        self.decoder.forward(&self.encoder.forward(preprocessed)?)
    }

    fn check_regime(&self, stats: &ReferenceStats) -> Result<()> {
        if stats.source_id() != self.stats_source_id {
            return Err(Error::StatsRegime {
                expected: self.stats_source_id.clone(),
                found: stats.source_id().into(),
            });
        }
        Ok(())
    }

    /// Reconstruction error of every row of raw features `x`.
    pub fn reconstruction_errors(
        &self,
        x: &Matrix<f32>,
        stats: &ReferenceStats,
    ) -> Result<Vec<f32>> {
        self.check_regime(stats)?;
        let p = preprocess(x, stats)?;
        self.preprocessed_errors(&p)
    }

    /// Reconstruction errors of rows that were already preprocessed.
    pub fn preprocessed_errors(&self, preprocessed: &Matrix<f32>) -> Result<Vec<f32>> {
        let r = self.reconstruct(preprocessed)?;
        squared_error_rows(preprocessed, &r)
    }

    /// Reconstruction error of one raw sample.
    pub fn reconstruction_error(&self, x: &[f32], stats: &ReferenceStats) -> Result<f32> {
        Ok(self.reconstruction_errors(&Matrix::row_vector(x), stats)?[0])
    }

    /// Mean reconstruction error over the rows of `x`, accumulated in `f64`.
    pub fn mean_reconstruction_error(&self, x: &Matrix<f32>, stats: &ReferenceStats) -> Result<f64> {
        let errs = self.reconstruction_errors(x, stats)?;
        if errs.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        Ok(errs.iter().map(|&e| e as f64).sum::<f64>() / errs.len() as f64)
    }
}

/// Loss and parameter gradients of an autoencoder on a batch of
/// preprocessed rows.
pub fn autoencoder_loss_and_grads<T: Scalar>(
    encoder: &DenseLayer<T>,
    decoder: &DenseLayer<T>,
    x: &Matrix<T>,
) -> Result<(T, LayerGrads<T>, LayerGrads<T>)> {
    let (z1, h) = encoder.forward_cached(x)?;
    let (z2, y) = decoder.forward_cached(&h)?;
    let (loss, dz2) = match decoder.activation {
        // cross-entropy on the decoder logits folds the sigmoid derivative in
        Activation::Sigmoid => sigmoid_cross_entropy_with_logits(x, &z2)?,
        _ => {
            let (loss, dy) = squared_error_with_grad(x, &y)?;
            (loss, decoder.output_grad_to_pre(&z2, &y, &dy))
        }
    };
    let (g_dec, dh) = decoder.backward(&h, &dz2)?;
    let dz1 = encoder.output_grad_to_pre(&z1, &h, &dh);
    let (g_enc, _) = encoder.backward(x, &dz1)?;
    Ok((loss, g_enc, g_dec))
}

fn autoencoder_loss<T: Scalar>(
    encoder: &DenseLayer<T>,
    decoder: &DenseLayer<T>,
    x: &Matrix<T>,
) -> Result<T> {
    Ok(autoencoder_loss_and_grads(encoder, decoder, x)?.0)
}

/// Trains a standard gate on raw `features`, holding out a seeded 10% for
/// validation.
pub fn train_gate(
    task_name: impl Into<String>,
    features: &Matrix<f32>,
    stats: &ReferenceStats,
    code_size: usize,
    config: &SgdConfig,
) -> Result<(AutoencoderGate, GateTrainReport)> {
    train_gate_variant(task_name, features, stats, code_size, config, GateVariant::Standard)
}

/// [`train_gate`] for an explicit [`GateVariant`].
pub fn train_gate_variant(
    task_name: impl Into<String>,
    features: &Matrix<f32>,
    stats: &ReferenceStats,
    code_size: usize,
    config: &SgdConfig,
    variant: GateVariant,
) -> Result<(AutoencoderGate, GateTrainReport)> {
    if features.rows() < MIN_GATE_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_GATE_SAMPLES,
            got: features.rows(),
        });
    }
    let (train, val) = train_validation(features.rows(), config.seed ^ SPLIT_SALT);
    train_gate_on_split(
        task_name,
        &features.select_rows(&train),
        &features.select_rows(&val),
        stats,
        code_size,
        config,
        variant,
    )
}

const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Trains a gate on an explicit train/validation partition of raw features.
pub fn train_gate_on_split(
    task_name: impl Into<String>,
    train: &Matrix<f32>,
    validation: &Matrix<f32>,
    stats: &ReferenceStats,
    code_size: usize,
    config: &SgdConfig,
    variant: GateVariant,
) -> Result<(AutoencoderGate, GateTrainReport)> {
    config.validate()?;
    if train.rows() == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !train.is_finite() || !validation.is_finite() {
        return Err(Error::Parameter("gate features must be finite".into()));
    }
    let mut gate = AutoencoderGate::untrained(
        task_name,
        train.cols(),
        code_size,
        stats,
        variant,
        config.seed,
    )?;
    let x = preprocess(train, stats)?;
    let mut enc_m = LayerMomentum::new(&gate.encoder);
    let mut dec_m = LayerMomentum::new(&gate.decoder);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut shuffle_rng = rng(config.seed.wrapping_add(1));

    let mut history = Vec::with_capacity(config.epochs + 1);
    history.push(autoencoder_loss(&gate.encoder, &gate.decoder, &x)?);
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = x.select_rows(chunk);
            let (loss, g_enc, g_dec) =
                autoencoder_loss_and_grads(&gate.encoder, &gate.decoder, &batch)?;
            enc_m.step(&mut gate.encoder, &g_enc, config)?;
            dec_m.step(&mut gate.decoder, &g_dec, config)?;
            epoch_loss += loss as f64;
            batches += 1;
        }
        history.push((epoch_loss / batches as f64) as f32);
    }
    if !gate.encoder.is_finite() || !gate.decoder.is_finite() {
        return Err(Error::Parameter(
            "gate training diverged; lower the learning rate".into(),
        ));
    }
    let final_train_loss = autoencoder_loss(&gate.encoder, &gate.decoder, &x)?;
    let final_val_error = if validation.rows() == 0 {
        f32::NAN
    } else {
        gate.mean_reconstruction_error(validation, stats)? as f32
    };
    gate.train_loss_history = history;
    Ok((
        gate,
        GateTrainReport {
            epochs_run: config.epochs,
            final_train_loss,
            final_val_error,
        },
    ))
}

/// Mean dimension-normalized squared residual of the best rank-`k` affine
/// (PCA) projection of `features`, taken as given.
pub fn pca_reference_error(features: &Matrix<f32>, k: usize) -> Result<f64> {
    let (n, d) = features.shape();
    if k == 0 || k >= d {
        return Err(Error::Parameter(format!(
            "rank {k} must lie in 1..{d} for {d}-dimensional data"
        )));
    }
    if n <= k {
        return Err(Error::InsufficientData { needed: k + 1, got: n });
    }
    let mean: Vec<f64> = features
        .column_means()
        .into_iter()
        .map(|m| m as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = alloc::vec![0.0f64; d];
    for row in features.row_iter() {
        for ((c, &v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v as f64 - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(eig[..d - k].iter().map(|l| l.max(0.0)).sum::<f64>() / d as f64)
}

/// Autoencoder training loss as an [`Objective`] over encoder then decoder
/// parameters, evaluated in `f64`.
#[derive(Clone, Debug)]
pub struct AutoencoderObjective {
    pub encoder: DenseLayer<f64>,
    pub decoder: DenseLayer<f64>,
    pub input: Matrix<f64>,
}

impl AutoencoderObjective {
    /// Widens a gate and a batch of preprocessed rows.
    pub fn new(gate: &AutoencoderGate, preprocessed: &Matrix<f32>) -> Self {
        Self {
            encoder: gate.encoder.cast(),
            decoder: gate.decoder.cast(),
            input: preprocessed.cast(),
        }
    }

    fn split(&self, i: usize) -> (bool, usize) {
        let ne = self.encoder.parameter_count();
        if i < ne {
            (true, i)
        } else {
            (false, i - ne)
        }
    }
}

impl Objective for AutoencoderObjective {
    fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.decoder.parameter_count()
    }

    fn parameter(&self, index: usize) -> f64 {
        match self.split(index) {
            (true, i) => self.encoder.parameter(i),
            (false, i) => self.decoder.parameter(i),
        }
    }

    fn set_parameter(&mut self, index: usize, value: f64) {
        match self.split(index) {
            (true, i) => *self.encoder.parameter_mut(i) = value,
            (false, i) => *self.decoder.parameter_mut(i) = value,
        }
    }

    fn loss(&self) -> f64 {
        autoencoder_loss(&self.encoder, &self.decoder, &self.input).expect("shapes fixed")
    }

    fn gradient(&self) -> Vec<f64> {
        let (_, ge, gd) = autoencoder_loss_and_grads(&self.encoder, &self.decoder, &self.input)
            .expect("shapes fixed");
        (0..self.encoder.parameter_count())
            .map(|i| ge.parameter(i))
            .chain((0..self.decoder.parameter_count()).map(|i| gd.parameter(i)))
            .collect()
    }
}
