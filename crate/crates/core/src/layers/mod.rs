//! Forward and backward passes for every layer the three architectures use.
//!
//! Each layer owns its parameters, the matching gradient buffers, and the
//! forward cache its backward pass needs. A layer is driven as
//! `forward(train) -> backward -> optimizer step` by exactly one training
//! run; evaluation forwards on frozen parameters are side-effect free apart
//! from the cache.

mod conv;
mod dense;
mod dropout;
mod recurrent;
mod shape_ops;

pub use conv::{Conv1d, MaxPool1d};
pub use dense::Dense;
pub use dropout::{Dropout, SpatialDropout};
pub use recurrent::{CellParams, Recurrent};
pub use shape_ops::{Flatten, RepeatVector, Reshape};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Whether dropout masks are sampled or bypassed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// The recurrent cell family used by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellKind::Lstm => write!(f, "lstm"),
            CellKind::Gru => write!(f, "gru"),
        }
    }
}

/// Activation applied by dense and convolutional layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => crate::tensor::scalar::relu(x),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Read-only view of one named parameter tensor and its gradient.
pub struct ParamRef<'a> {
    pub name: &'static str,
    pub value: &'a Tensor,
    pub grad: &'a Tensor,
    /// Weight matrices take part in L2 regularization, biases do not.
    pub is_weight: bool,
}

/// Mutable view of one named parameter tensor and its gradient.
pub struct ParamMut<'a> {
    pub name: &'static str,
    pub value: &'a mut Tensor,
    pub grad: &'a mut Tensor,
    pub is_weight: bool,
}

/// Glorot-uniform weight matrix; biases are always initialized to zero.
pub(crate) fn glorot_uniform(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("shape/data agree by construction")
}

/// One layer of a model graph.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    Dropout(Dropout),
    SpatialDropout(SpatialDropout),
    Flatten(Flatten),
    RepeatVector(RepeatVector),
    Reshape(Reshape),
    Recurrent(Recurrent),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv1d(l) => l.forward(x),
            Layer::MaxPool1d(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, mode, rng),
            Layer::SpatialDropout(l) => l.forward(x, mode, rng),
            Layer::Flatten(l) => l.forward(x),
            Layer::RepeatVector(l) => l.forward(x),
            Layer::Reshape(l) => l.forward(x),
            Layer::Recurrent(l) => l.forward(x),
        }
    }

    /// Gradient of the loss w.r.t. this layer's input given the gradient
    /// w.r.t. its output. Parameter gradients accumulate into the layer.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::Conv1d(l) => l.backward(grad),
            Layer::MaxPool1d(l) => l.backward(grad),
            Layer::Dropout(l) => l.backward(grad),
            Layer::SpatialDropout(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
            Layer::RepeatVector(l) => l.backward(grad),
            Layer::Reshape(l) => l.backward(grad),
            Layer::Recurrent(l) => l.backward(grad),
        }
    }

    /// Output shape for a given input shape, or a description of why the
    /// input cannot be wired into this layer.
    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(l) => l.out_shape(input),
            Layer::Conv1d(l) => l.out_shape(input),
            Layer::MaxPool1d(l) => l.out_shape(input),
            Layer::Dropout(_) => Ok(input.to_vec()),
            Layer::SpatialDropout(l) => l.out_shape(input),
            Layer::Flatten(l) => l.out_shape(input),
            Layer::RepeatVector(l) => l.out_shape(input),
            Layer::Reshape(l) => l.out_shape(input),
            Layer::Recurrent(l) => l.out_shape(input),
        }
    }

    pub fn params(&self) -> Vec<ParamRef<'_>> {
        match self {
            Layer::Dense(l) => l.params(),
            Layer::Conv1d(l) => l.params(),
            Layer::Recurrent(l) => l.params(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        match self {
            Layer::Dense(l) => l.params_mut(),
            Layer::Conv1d(l) => l.params_mut(),
            Layer::Recurrent(l) => l.params_mut(),
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Exact element count of all trainable parameters.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool1d(_) => "maxpool1d",
            Layer::Dropout(_) => "dropout",
            Layer::SpatialDropout(_) => "spatial_dropout",
            Layer::Flatten(_) => "flatten",
            Layer::RepeatVector(_) => "repeat_vector",
            Layer::Reshape(_) => "reshape",
            Layer::Recurrent(l) => match l.kind() {
                CellKind::Lstm => "lstm",
                CellKind::Gru => "gru",
            },
        }
    }
}

pub(crate) fn shape_error(op: &'static str, input: &[usize], expected: Vec<usize>) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: input.to_vec(),
        rhs: expected,
    }
}
