//! Uniform dispatch over the forward primitives.
//!
//! The model code calls the typed [`Tape`](super::Tape) methods directly;
//! this enum exists so tests can iterate over every primitive (gradient
//! checking, shape-error coverage) without naming each method.

use alloc::vec::Vec;

use super::{AttentionMask, NodeId, Tape, TensorError, TensorResult};

/// One forward primitive together with its non-tensor arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveKind {
    Add,
    Subtract,
    ElementwiseMultiply,
    MatrixMultiply,
    Concatenate { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Reshape { shape: Vec<usize> },
    EmbeddingGather { ids: Vec<usize> },
    GeluNonlinearity,
    LayerNormalize { eps: f64 },
    Softmax,
    LogSoftmax,
    ScaledDotProductAttention { mask: AttentionMask },
    CrossEntropyFromLogits { targets: Vec<usize> },
    Sum,
    Mean,
}

impl PrimitiveKind {
    /// Number of tensor operands the primitive consumes (`None` = variadic).
    pub fn arity(&self) -> Option<usize> {
        match self {
            Self::Add | Self::Subtract | Self::ElementwiseMultiply | Self::MatrixMultiply => {
                Some(2)
            }
            Self::Concatenate { .. } => None,
            Self::ScaledDotProductAttention { .. } => Some(3),
            _ => Some(1),
        }
    }
}

/// Applies `kind` to `operands`, recording the computation on `tape`.
pub fn forward_primitive(
    tape: &mut Tape,
    kind: &PrimitiveKind,
    operands: &[NodeId],
) -> TensorResult<NodeId> {
    let want = kind.arity();
    if let Some(n) = want {
        if operands.len() != n {
            return Err(TensorError::BadArgument {
                op: "forward_primitive",
                msg: alloc::format!("{kind:?} takes {n} operands, got {}", operands.len()),
            });
        }
    }
    match kind {
        PrimitiveKind::Add => tape.add(operands[0], operands[1]),
        PrimitiveKind::Subtract => tape.sub(operands[0], operands[1]),
        PrimitiveKind::ElementwiseMultiply => tape.mul(operands[0], operands[1]),
        PrimitiveKind::MatrixMultiply => tape.matmul(operands[0], operands[1]),
        PrimitiveKind::Concatenate { axis } => tape.concat(operands, *axis),
        PrimitiveKind::Slice { axis, start, len } => {
            tape.slice(operands[0], *axis, *start, *len)
        }
        PrimitiveKind::Reshape { shape } => tape.reshape(operands[0], shape),
        PrimitiveKind::EmbeddingGather { ids } => tape.gather(operands[0], ids),
        PrimitiveKind::GeluNonlinearity => tape.gelu(operands[0]),
        PrimitiveKind::LayerNormalize { eps } => tape.layer_norm(operands[0], *eps),
        PrimitiveKind::Softmax => tape.softmax(operands[0]),
        PrimitiveKind::LogSoftmax => tape.log_softmax(operands[0]),
        PrimitiveKind::ScaledDotProductAttention { mask } => {
            tape.attention(operands[0], operands[1], operands[2], mask)
        }
        PrimitiveKind::CrossEntropyFromLogits { targets } => {
            tape.cross_entropy(operands[0], targets)
        }
        PrimitiveKind::Sum => tape.sum(operands[0]),
        PrimitiveKind::Mean => tape.mean(operands[0]),
    }
}
