//! Captioning and VQA evaluation.
//!
//! All metrics are pure functions over immutable inputs; per-sample scores
//! aggregate by plain mean, so results never depend on evaluation order.

mod bleu;
mod cider;
mod permuted;
mod simple;
mod tokenize;

pub use bleu::bleu4;
pub use cider::{cider, ReferenceCorpus};
pub use permuted::{permuted_baseline, PermutedBaseline};
pub use simple::{success_rate, vqa_accuracy};
pub use tokenize::normalize_tokens;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    /// The reference corpus has no images or an image with no references.
    EmptyCorpus,
    /// Candidate count does not match the corpus image count.
    CandidateCountMismatch { candidates: usize, images: usize },
    /// Target (or ground-truth pool) must be non-empty.
    EmptyTarget,
    /// No samples to aggregate over.
    NoSamples,
    /// Baseline needs at least two images to permute.
    CorpusTooSmall,
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyCorpus => write!(f, "reference corpus is empty"),
            Self::CandidateCountMismatch { candidates, images } => {
                write!(f, "{candidates} candidates for {images} images")
            }
            Self::EmptyTarget => write!(f, "target must be non-empty"),
            Self::NoSamples => write!(f, "no samples"),
            Self::CorpusTooSmall => write!(f, "need at least two images to permute"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricError {}

/// Per-sample scores plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    pub per_sample: Vec<f64>,
    pub aggregate: f64,
    pub n: usize,
}

impl ScoreReport {
    pub fn from_samples(metric: &str, per_sample: Vec<f64>) -> Result<Self, MetricError> {
        if per_sample.is_empty() {
            return Err(MetricError::NoSamples);
        }
        let aggregate = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        Ok(Self {
            metric: String::from(metric),
            n: per_sample.len(),
            per_sample,
            aggregate,
        })
    }
}
