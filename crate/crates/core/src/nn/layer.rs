use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::{Error, Matrix, Result, Scalar};

/// Elementwise nonlinearity applied after the affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    /// Stable numeric code used by the weight file format.
    pub fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

/// Fully connected layer computing `activation(x · Wᵀ + b)` row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T = f32> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

/// Parameter gradients of one [`DenseLayer`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T = f32> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerGrads<T> {
    pub fn zeros_like(layer: &DenseLayer<T>) -> Self {
        Self {
            weights: Matrix::zeros(layer.output_dim(), layer.input_dim()),
            bias: vec![T::zero(); layer.output_dim()],
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrads<T>) {
        for (a, &b) in self
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(other.weights.as_slice())
        {
            *a = *a + b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a = *a + b;
        }
    }
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Dimension(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = libm::sqrt(6.0 / (input_dim + output_dim) as f64);
        let data = (0..input_dim * output_dim)
            .map(|_| T::lit(rng.random_range(-limit..limit)))
            .collect();
        Self {
            weights: Matrix::new(output_dim, input_dim, data).expect("sized"),
            bias: vec![T::zero(); output_dim],
            activation,
        }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    /// `x · Wᵀ + b`.
    pub fn pre_activation(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "layer expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let mut z = x.matmul_transposed(&self.weights)?;
        for r in 0..z.rows() {
            for (v, &b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v = *v + b;
            }
        }
        Ok(z)
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let act = self.activation;
        Ok(self.pre_activation(x)?.map(|z| act.apply(z)))
    }

    /// Forward pass that also returns the pre-activation needed by backprop.
    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let z = self.pre_activation(x)?;
        let act = self.activation;
        let y = z.map(|v| act.apply(v));
        Ok((z, y))
    }

    /// Gradient w.r.t. the pre-activation from the gradient w.r.t. the output.
    pub fn output_grad_to_pre(&self, z: &Matrix<T>, y: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
        let act = self.activation;
        let data = z
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .zip(dy.as_slice())
            .map(|((&z, &y), &g)| g * act.derivative(z, y))
            .collect();
        Matrix::new(z.rows(), z.cols(), data).expect("same shape")
    }

    /// Backpropagates `dz` (gradient w.r.t. the pre-activation) through the
    /// affine map; returns parameter gradients and the input gradient.
    pub fn backward(&self, x: &Matrix<T>, dz: &Matrix<T>) -> Result<(LayerGrads<T>, Matrix<T>)> {
        let weights = dz.transposed_matmul(x)?;
        let mut bias = vec![T::zero(); self.output_dim()];
        for r in dz.row_iter() {
            for (b, &g) in bias.iter_mut().zip(r) {
                *b = *b + g;
            }
        }
        let dx = dz.matmul(&self.weights)?;
        Ok((LayerGrads { weights, bias }, dx))
    }

    /// Parameters flattened as weights (row-major) followed by bias.
    pub fn parameter(&self, i: usize) -> T {
        let nw = self.weights.as_slice().len();
        if i < nw {
            self.weights.as_slice()[i]
        } else {
            self.bias[i - nw]
        }
    }

    pub fn parameter_mut(&mut self, i: usize) -> &mut T {
        let nw = self.weights.as_slice().len();
        if i < nw {
            &mut self.weights.as_mut_slice()[i]
        } else {
            &mut self.bias[i - nw]
        }
    }

    pub fn cast<U: Scalar>(&self) -> DenseLayer<U> {
        DenseLayer {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| U::lit(b.as_f64())).collect(),
            activation: self.activation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

impl<T: Scalar> LayerGrads<T> {
    pub fn parameter(&self, i: usize) -> T {
        let nw = self.weights.as_slice().len();
        if i < nw {
            self.weights.as_slice()[i]
        } else {
            self.bias[i - nw]
        }
    }
}
