//! Random-permutation CIDEr baseline: the score of ground-truth captions
//! assigned to the wrong images, a floor for "completely uninformative but
//! well-formed" captions.

use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cider::cider;
use super::{MetricError, ReferenceCorpus};
use crate::math;

/// Mean and spread of the permuted-caption CIDEr score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutedBaseline {
    pub mean: f64,
    /// Population standard deviation over permutations.
    pub std: f64,
    pub n_permutations: usize,
    /// Plain uniform permutations; captions may land on their own image.
    pub scheme: &'static str,
}

/// Scores `n_permutations` random reassignments of each image's first
/// reference caption across images.
pub fn permuted_baseline(
    corpus: &ReferenceCorpus,
    n_permutations: usize,
    seed: u64,
) -> Result<PermutedBaseline, MetricError> {
    if corpus.n_images() < 2 {
        return Err(MetricError::CorpusTooSmall);
    }
    if n_permutations == 0 {
        return Err(MetricError::NoSamples);
    }
    let ground_truth: Vec<String> = (0..corpus.n_images())
        .map(|i| corpus.references(i)[0].join(" "))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..ground_truth.len()).collect();
    let mut scores = Vec::with_capacity(n_permutations);
    for _ in 0..n_permutations {
        indices.shuffle(&mut rng);
        let candidates: Vec<String> = indices.iter().map(|&i| ground_truth[i].clone()).collect();
        scores.push(cider(&candidates, corpus)?.aggregate);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / scores.len() as f64;
    Ok(PermutedBaseline {
        mean,
        std: math::sqrt(var),
        n_permutations,
        scheme: "plain-permutation",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn identical_reference_corpus_equals_self_score() {
        let refs: Vec<Vec<String>> = (0..4)
            .map(|_| vec!["a red square".to_string(), "there is a red square".to_string()])
            .collect();
        let corpus = ReferenceCorpus::new(refs).unwrap();
        let baseline = permuted_baseline(&corpus, 5, 3).unwrap();
        let self_score = cider(&vec!["a red square".to_string(); 4], &corpus).unwrap();
        assert!((baseline.mean - self_score.aggregate).abs() < 1e-12);
        assert!(baseline.std.abs() < 1e-12);
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let refs: Vec<Vec<String>> = (0..6)
            .map(|i| vec![alloc::format!("a red square and a blue circle number {i}")])
            .collect();
        let corpus = ReferenceCorpus::new(refs).unwrap();
        let a = permuted_baseline(&corpus, 10, 42).unwrap();
        let b = permuted_baseline(&corpus, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = permuted_baseline(&corpus, 10, 43).unwrap();
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn single_image_corpus_rejected() {
        let corpus = ReferenceCorpus::new(vec![vec!["a red square".to_string()]]).unwrap();
        assert!(matches!(
            permuted_baseline(&corpus, 3, 0),
            Err(MetricError::CorpusTooSmall)
        ));
    }
}
