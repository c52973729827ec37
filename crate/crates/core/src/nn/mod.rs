//! Minimal dense network numerics with hand-derived gradients.

mod gradcheck;
mod layer;
mod loss;
mod optim;

pub use gradcheck::{gradient_check, Objective};
pub use layer::{Activation, DenseLayer, LayerGrads};
pub use loss::{
    cross_entropy_loss, distillation_loss, distillation_with_grad, log_softmax_rows,
    sigmoid_cross_entropy_with_logits, softmax_cross_entropy, softmax_rows, squared_error,
    squared_error_rows, squared_error_with_grad, CE_EPSILON,
};
pub use optim::{sgd_step, LayerMomentum, SgdConfig};

use crate::Scalar;

#[inline]
pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
