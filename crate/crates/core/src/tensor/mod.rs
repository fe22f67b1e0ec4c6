//! Dense f64 tensors with a reverse-mode tape.
//!
//! The engine is deliberately narrow: it provides the layer primitives the
//! classifier needs (embedding, convolution, LSTM, attention, pooling,
//! dense, dropout, softmax cross-entropy) as fused tape ops with
//! hand-written backward rules, plus `sum`/`mul` for small compositions.
//! A [`Tape`] records one forward pass; [`Tape::backward`] consumes it and
//! returns [`Gradients`].

pub mod gradcheck;
mod kernels;
mod optim;
mod params;
mod tape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::{Adam, AdamConfig, Optimizer, Sgd};
pub use params::{ParamSet, CHECKPOINT_FORMAT};
pub use tape::{Activation, DropoutMode, Gradients, Tape, Var};
pub(crate) use tape::softmax_rows;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("embedding id {id} out of range for table of {rows} rows")]
    IdOutOfRange { id: usize, rows: usize },
    #[error("attention row {row} has no unmasked position")]
    AllMasked { row: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalarLoss(Vec<usize>),
    #[error("tensor is not tracked by this tape")]
    DetachedTensor,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                expected: format!("{} elements", shape.iter().product::<usize>()),
                got: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![x],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
