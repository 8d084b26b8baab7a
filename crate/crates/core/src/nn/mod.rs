//! Minimal dense-tensor network engine in double precision: layers with exact
//! backpropagation, mean squared error, momentum SGD with a step-decay
//! schedule, finite-difference gradient checking, and checkpoints.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use checkpoint::{NamedTensor, ParamStore};
pub use gradcheck::{
    analytic_gradients, compare_gradients, grad_check, GradCheckOptions, GradCheckReport, Gradients,
};
pub use layers::{Conv2d, Flatten, Layer, Linear, MaxPool2d, Param, Relu, Softplus};
pub use loss::mse_loss;
pub use optim::{sgd_step, OptimizerConfig, Sgd};
pub use tensor::Tensor;

use crate::error::Result;

/// Layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Backpropagates `grad_out` and returns the gradient at the input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}
