use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A differentiable scalar objective over a flat parameter vector, evaluated
/// in 64-bit precision.
pub trait Objective {
    fn parameter_count(&self) -> usize;
    fn parameter(&self, index: usize) -> f64;
    fn set_parameter(&mut self, index: usize, value: f64);
    fn loss(&self) -> f64;
    /// Analytic gradient in parameter order.
    fn gradient(&self) -> Vec<f64>;
}

/// Largest relative discrepancy between the analytic gradient and a
/// central difference with step `h`, over `samples` randomly chosen
/// coordinates (every coordinate if `samples` covers them all).
pub fn gradient_check<O: Objective>(objective: &mut O, h: f64, samples: usize, seed: u64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = objective.gradient();
    let count = objective.parameter_count();
    let coords: Vec<usize> = if samples >= count {
        (0..count).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples).map(|_| rng.random_range(0..count)).collect()
    };
    let mut worst = 0.0f64;
    for i in coords {
        let original = objective.parameter(i);
        objective.set_parameter(i, original + h);
        let plus = objective.loss();
        objective.set_parameter(i, original - h);
        let minus = objective.loss();
        objective.set_parameter(i, original);
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{squared_error_with_grad, Activation, DenseLayer};
    use crate::Matrix;

    struct Linear {
        layer: DenseLayer<f64>,
        x: Matrix<f64>,
        target: Matrix<f64>,
    }

    impl Objective for Linear {
        fn parameter_count(&self) -> usize {
            self.layer.parameter_count()
        }
        fn parameter(&self, i: usize) -> f64 {
            self.layer.parameter(i)
        }
        fn set_parameter(&mut self, i: usize, v: f64) {
            *self.layer.parameter_mut(i) = v;
        }
        fn loss(&self) -> f64 {
            let y = self.layer.forward(&self.x).unwrap();
            squared_error_with_grad(&self.target, &y).unwrap().0
        }
        fn gradient(&self) -> Vec<f64> {
            let (z, y) = self.layer.forward_cached(&self.x).unwrap();
            let (_, dy) = squared_error_with_grad(&self.target, &y).unwrap();
            let dz = self.layer.output_grad_to_pre(&z, &y, &dy);
            let (g, _) = self.layer.backward(&self.x, &dz).unwrap();
            (0..self.parameter_count()).map(|i| g.parameter(i)).collect()
        }
    }

    #[test]
    fn linear_squared_loss_is_near_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::new(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let target =
            Matrix::new(6, 3, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut obj = Linear {
            layer: DenseLayer::glorot(4, 3, Activation::Identity, &mut rng),
            x,
            target,
        };
        let err = gradient_check(&mut obj, 1e-4, usize::MAX, 0);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn sigmoid_layer_on_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut obj = Linear {
            layer: DenseLayer::glorot(3, 2, Activation::Sigmoid, &mut rng),
            x: Matrix::zeros(4, 3),
            target: Matrix::zeros(4, 2),
        };
        let err = gradient_check(&mut obj, 1e-4, usize::MAX, 0);
        assert!(err.is_finite() && err < 1e-4, "relative error {err}");
    }
}
