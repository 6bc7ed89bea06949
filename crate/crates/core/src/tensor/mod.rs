//! Dense f64 tensors with tape-based reverse-mode gradients.
//!
//! A [`Tensor`] is a plain value: a shape and row-major data. Differentiable
//! computation happens on a [`Tape`]: leaves are inserted, forward ops are
//! recorded, and [`Tape::backward`] replays the recording in reverse to
//! produce a [`GradientRecord`]. Everything is 64-bit; accumulation order is
//! fixed, so repeated runs are bit-identical.

mod finite_diff;
pub(crate) mod linalg;
mod primitive;
mod tape;

pub use finite_diff::{finite_difference_gradient, finite_difference_select, max_rel_err};
pub use primitive::{forward_primitive, PrimitiveKind};
pub use tape::{AttentionMask, GradientRecord, NodeId, Tape};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Errors from tensor construction and tape operations.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operand shapes do not conform for the named op.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An op received a tensor with zero elements.
    EmptyTensor { op: &'static str },
    /// Data length does not match the product of the shape extents.
    InvalidShape { shape: Vec<usize>, len: usize },
    /// `backward` was called on a non-scalar node.
    NotScalar { shape: Vec<usize> },
    /// A node id does not belong to this tape.
    UnknownNode { id: usize },
    /// A forward op or finite-difference probe produced a non-finite value.
    NonFinite { op: &'static str },
    /// Catch-all for invalid op arguments (axis out of range, bad index, ...).
    BadArgument { op: &'static str, msg: String },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            Self::EmptyTensor { op } => write!(f, "{op}: empty tensor"),
            Self::InvalidShape { shape, len } => {
                write!(f, "shape {shape:?} does not match data length {len}")
            }
            Self::NotScalar { shape } => write!(f, "expected scalar, got shape {shape:?}"),
            Self::UnknownNode { id } => write!(f, "node {id} is not recorded on this tape"),
            Self::NonFinite { op } => write!(f, "{op}: non-finite value"),
            Self::BadArgument { op, msg } => write!(f, "{op}: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TensorError {}

pub type TensorResult<T> = Result<T, TensorError>;

/// Dense multi-dimensional array of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    /// Builds a tensor, checking that the shape matches the data length.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> TensorResult<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            requires_grad: false,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
            requires_grad: false,
        }
    }

    /// 0-dimensional tensor holding one value.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
        }
    }

    /// 1-dimensional tensor from raw data.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> TensorResult<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar {
                shape: self.shape.clone(),
            })
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Max-norm of the data.
    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(crate::math::abs(v)))
    }

    /// Elementwise map into a new tensor (value-level, not recorded).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }
}
