//! Dataset assembly: deterministic records, the train/eval split, and
//! ground-truth selection.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::caption::{caption_scene, qa_for_scene};
use super::render::render;
use super::scene::{generate_scene, SceneSpec};
use super::DataError;
use crate::math::derive_seed;
use crate::metrics::ReferenceCorpus;
use crate::tensor::Tensor;

// seed stream tags
const STREAM_SCENE: u64 = 0x5343;
const STREAM_REFS: u64 = 0x5245;
const STREAM_QA: u64 = 0x5141;
const STREAM_SPLIT: u64 = 0x5350;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    /// Exactly ten ground-truth answers, possibly including "unanswerable".
    pub answers: Vec<String>,
}

/// One synthetic sample: image plus references (plus an optional QA pair).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: u64,
    pub scene: SceneSpec,
    pub image: Tensor,
    pub references: Vec<String>,
    pub qa: Option<QaPair>,
}

/// Which ground-truth pool `select_ground_truth` draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruthKind {
    Caption,
    Answer,
}

/// Uniform ground-truth draw.
///
/// Captions: uniform over the references. Answers: uniform over the answers
/// that are not "unanswerable", unless strictly more than half of them are,
/// in which case the draw is uniform over all ten.
pub fn select_ground_truth(
    record: &DatasetRecord,
    kind: GroundTruthKind,
    seed: u64,
) -> Result<String, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        GroundTruthKind::Caption => {
            if record.references.is_empty() {
                return Err(DataError::EmptyPool { what: "reference" });
            }
            Ok(record.references[rng.gen_range(0..record.references.len())].clone())
        }
        GroundTruthKind::Answer => {
            let qa = record.qa.as_ref().ok_or(DataError::EmptyPool { what: "answer" })?;
            if qa.answers.is_empty() {
                return Err(DataError::EmptyPool { what: "answer" });
            }
            let unanswerable = qa.answers.iter().filter(|a| *a == "unanswerable").count();
            let pool: Vec<&String> = if unanswerable * 2 > qa.answers.len() {
                qa.answers.iter().collect()
            } else {
                qa.answers.iter().filter(|a| *a != "unanswerable").collect()
            };
            Ok(pool[rng.gen_range(0..pool.len())].clone())
        }
    }
}

/// A generated dataset with its deterministic train/eval split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub eval_ids: BTreeSet<u64>,
    pub seed: u64,
}

impl Dataset {
    pub fn train_records(&self) -> Vec<&DatasetRecord> {
        self.records
            .iter()
            .filter(|r| !self.eval_ids.contains(&r.id))
            .collect()
    }

    pub fn eval_records(&self) -> Vec<&DatasetRecord> {
        self.records
            .iter()
            .filter(|r| self.eval_ids.contains(&r.id))
            .collect()
    }

    /// Reference corpus over the eval split (document frequencies are
    /// recomputed per evaluated split).
    pub fn eval_corpus(&self) -> Result<ReferenceCorpus, DataError> {
        ReferenceCorpus::new(
            self.eval_records()
                .iter()
                .map(|r| r.references.clone())
                .collect(),
        )
        .map_err(|_| DataError::EmptyDataset)
    }
}

/// Number of eval records for a dataset of `n`: one fifth, with small-n
/// guards so both splits are non-empty whenever possible.
fn eval_count(n: usize) -> usize {
    if n < 2 {
        0
    } else if n < 5 {
        1
    } else {
        n / 5
    }
}

/// Generates `n` records deterministically from `seed`.
///
/// The eval split is the top fifth of records ranked by a per-id hash, so the
/// split sizes are exact (n = 1000 gives 800/200) and membership never
/// depends on the order records are generated in.
pub fn make_dataset(n: usize, seed: u64, with_qa: bool) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let mut records = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let scene = generate_scene(derive_seed(seed, STREAM_SCENE, id));
        let image = render(&scene);
        let ref_seed = derive_seed(seed, STREAM_REFS, id);
        let max_refs = super::caption::applicable_templates(&scene).len().min(5);
        let n_refs = 2 + (ChaCha8Rng::seed_from_u64(ref_seed).gen_range(0..100) as usize)
            % (max_refs.max(2) - 1);
        let references = caption_scene(&scene, n_refs, ref_seed)?;
        let qa = with_qa.then(|| {
            let (question, answers) = qa_for_scene(&scene, derive_seed(seed, STREAM_QA, id));
            QaPair { question, answers }
        });
        records.push(DatasetRecord {
            id,
            scene,
            image,
            references,
            qa,
        });
    }

    let mut ranked: Vec<(u64, u64)> = (0..n as u64)
        .map(|id| (derive_seed(seed, STREAM_SPLIT, id), id))
        .collect();
    ranked.sort_unstable();
    let eval_ids: BTreeSet<u64> = ranked
        .iter()
        .rev()
        .take(eval_count(n))
        .map(|&(_, id)| id)
        .collect();

    Ok(Dataset {
        records,
        eval_ids,
        seed,
    })
}
