//! Miniature vision-language captioner: a patch-transformer vision encoder
//! feeding gated cross-attention layers in a causal text decoder.

mod config;
mod forward;
mod generate;
mod layout;
mod params;
mod train;
mod vocab;

pub use config::ModelConfig;
pub use forward::{
    encode_image, encode_image_on_tape, full_logits_on_tape, grad_wrt_images, next_token_logits,
    parameter_names, sequence_log_likelihood, sequence_log_likelihood_on_tape, BoundParams,
};
pub use generate::{generate, Generation};
pub use layout::{PromptLayout, Segment};
pub use params::ModelParams;
pub use train::{train, TrainConfig, TrainOutcome, TrainSample};
pub use vocab::{
    TokenSequence, Vocabulary, BOS_ID, EOS_ID, IMAGE_ID, OUTPUT_ID, PAD_ID, RESERVED_WORDS,
};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::data::DataError;
use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    BadWord { word: String },
    DuplicateWord { word: String },
    UnknownWord { word: String },
    UnknownTokenId { id: usize },
    EmptySequence,
    LayoutInvalid { msg: String },
    ContextOverflow { len: usize, max: usize },
    ImageShape { got: Vec<usize>, expected: Vec<usize> },
    ImageCountMismatch { expected: usize, got: usize },
    PixelOutOfRange { value: f64 },
    ConfigInvalid { msg: String },
    ParamMismatch { msg: String },
    Diverged { epoch: usize, step: usize },
    Tensor(TensorError),
    Data(DataError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadWord { word } => write!(f, "word {word:?} is empty or has whitespace"),
            Self::DuplicateWord { word } => write!(f, "duplicate word {word:?}"),
            Self::UnknownWord { word } => write!(f, "word {word:?} not in vocabulary"),
            Self::UnknownTokenId { id } => write!(f, "token id {id} out of range"),
            Self::EmptySequence => write!(f, "sequence must be non-empty"),
            Self::LayoutInvalid { msg } => write!(f, "invalid prompt layout: {msg}"),
            Self::ContextOverflow { len, max } => {
                write!(f, "sequence length {len} exceeds maximum context {max}")
            }
            Self::ImageShape { got, expected } => {
                write!(f, "image shape {got:?}, expected {expected:?}")
            }
            Self::ImageCountMismatch { expected, got } => {
                write!(f, "{got} images for {expected} image slots")
            }
            Self::PixelOutOfRange { value } => {
                write!(f, "pixel {value} outside [0, 1]; clip inputs first")
            }
            Self::ConfigInvalid { msg } => write!(f, "invalid config: {msg}"),
            Self::ParamMismatch { msg } => write!(f, "parameter mismatch: {msg}"),
            Self::Diverged { epoch, step } => {
                write!(f, "training loss went non-finite at epoch {epoch}, step {step}")
            }
            Self::Tensor(e) => write!(f, "{e}"),
            Self::Data(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

impl From<DataError> for ModelError {
    fn from(e: DataError) -> Self {
        Self::Data(e)
    }
}
