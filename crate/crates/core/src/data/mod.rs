//! Deterministic synthetic vision-language data: rendered shape scenes with
//! templated multi-reference captions and optional QA pairs.

mod caption;
mod dataset;
pub mod grammar;
mod render;
mod scene;

pub use caption::{caption_scene, qa_for_scene};
pub use dataset::{
    make_dataset, select_ground_truth, Dataset, DatasetRecord, GroundTruthKind, QaPair,
};
pub use render::render;
pub use scene::{
    generate_scene, grammar_size, unrank_scene, BackgroundColor, ObjectColor, SceneObject,
    SceneSpec, Shape, CELLS, GRAMMAR_SIZE, GRID_SIDE, IMAGE_SIDE,
};

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    /// A reference or answer list was empty where one entry is required.
    EmptyPool { what: &'static str },
    /// Requested reference count outside the supported 2..=5 range.
    BadRefCount { n: usize },
    /// Dataset must contain at least one record.
    EmptyDataset,
    /// A scene violated the grammar (used by validation helpers).
    InvalidScene { msg: String },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyPool { what } => write!(f, "empty {what} pool"),
            Self::BadRefCount { n } => write!(f, "reference count {n} outside 2..=5"),
            Self::EmptyDataset => write!(f, "dataset must have at least one record"),
            Self::InvalidScene { msg } => write!(f, "invalid scene: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DataError {}
