use crate::error::{Error, Result};
use crate::prelude::*;
use crate::rng::Rng;

use super::{Layer, Mode, Real, Tensor};

/// A chain of layers differentiated in reverse order.
#[derive(Clone, Debug, Default)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Re-initializes every conv/linear layer from `rng` (Kaiming-uniform).
    pub fn init(&mut self, rng: &mut Rng) {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(l) => l.init(rng),
                Layer::Linear(l) => l.init(rng),
                _ => {}
            }
        }
    }

    /// Forward pass that records the caches needed by [`Self::backward`].
    pub fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        for layer in &mut self.layers {
            x = layer.forward(x, mode)?;
        }
        Ok(x)
    }

    /// Evaluation-mode forward pass; touches no state, so a frozen network
    /// can serve concurrent readers.
    pub fn infer(&self, mut x: Tensor<T>) -> Result<Tensor<T>> {
        for layer in &self.layers {
            x = layer.infer(x)?;
        }
        Ok(x)
    }

    /// Back-propagates `dy` through the recorded forward pass, accumulating
    /// parameter gradients. Returns the gradient with respect to the network
    /// input when `want_input_grad` is set.
    pub fn backward(&mut self, dy: Tensor<T>, want_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let mut grad = Some(dy);
        let n = self.layers.len();
        for i in (0..n).rev() {
            let g = grad.take().ok_or_else(|| Error::InvalidArgument("gradient chain broken".into()))?;
            let want = i > 0 || want_input_grad;
            grad = match self.layers[i].backward(g, want) {
                Ok(g) => g,
                Err(e) => {
                    self.clear_caches();
                    return Err(e);
                }
            };
        }
        Ok(if want_input_grad { grad } else { None })
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.parameters_mut().into_iter().for_each(Tensor::zero_grad);
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(Layer::parameters_mut).collect()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    /// Switches every ReLU between standard and guided backpropagation.
    pub fn set_guided_mode(&mut self, on: bool) {
        for layer in &mut self.layers {
            if let Layer::Relu(r) = layer {
                r.guided = on;
            }
        }
    }

    pub fn guided_mode(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Relu(r) if r.guided))
    }

    /// True once every batch-norm layer has running statistics.
    pub fn eval_ready(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::BatchNorm2d(b) => b.is_initialized(),
            _ => true,
        })
    }
}
