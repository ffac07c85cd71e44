//! Dense-tensor neural network kernels with hand-written backward passes.
//!
//! Layers cache what their backward pass needs during `forward`; calling
//! `backward` accumulates parameter gradients and returns the gradient
//! with respect to the layer input.

mod checkpoint;
mod gradcheck;
mod layers;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_faulty, numeric_gradient, relative_error, GradCheckReport};
pub use layers::{BatchNorm, Conv2d, Dense, Dropout, GlobalAvgPool, MaxPool2d, Relu, Sequential};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch { op: &'static str, expected: String, found: String },
    #[error("batch norm needs at least 2 values per channel in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("{0}: backward called before forward")]
    NoForwardCache(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { name: name.into(), value, grad }
    }
}

/// A named non-learnable state tensor (batch-norm running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    pub name: String,
    pub value: Tensor,
}

pub trait Layer {
    fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor, NnError>;

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor, NnError>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    fn buffers(&self) -> Vec<&Buffer> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        Vec::new()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }
}
