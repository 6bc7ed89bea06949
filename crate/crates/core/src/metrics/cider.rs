//! Consensus-based image description evaluation, "D" variant: TF-IDF weighted
//! n-gram cosine similarity with count clipping and a Gaussian length
//! penalty (sigma = 6).
//!
//! Scores are reported at the scale used in captioning papers: 100x the
//! standard scorer output, which is itself 10x the mean similarity. A
//! candidate sharing no n-gram with any reference scores exactly 0.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::tokenize::normalize_tokens;
use super::{MetricError, ScoreReport};
use crate::math;

pub(crate) const MAX_NGRAM: usize = 4;
const SIGMA: f64 = 6.0;
/// 10x from the consensus scorer definition, 100x from paper-style reporting.
const REPORT_SCALE: f64 = 1000.0;

/// TF-IDF vectors (one per n-gram order) for a single caption.
pub(crate) struct TfIdfVec {
    maps: [BTreeMap<String, f64>; MAX_NGRAM],
    norms: [f64; MAX_NGRAM],
    len: usize,
}

pub(crate) fn ngram_counts(tokens: &[String]) -> [BTreeMap<String, f64>; MAX_NGRAM] {
    let mut counts: [BTreeMap<String, f64>; MAX_NGRAM] = Default::default();
    for n in 1..=MAX_NGRAM {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            *counts[n - 1].entry(window.join(" ")).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Per-image reference captions with corpus-level document frequencies.
pub struct ReferenceCorpus {
    ref_tokens: Vec<Vec<Vec<String>>>,
    doc_freq: [BTreeMap<String, f64>; MAX_NGRAM],
    log_images: f64,
    ref_vecs: Vec<Vec<TfIdfVec>>,
}

impl ReferenceCorpus {
    /// Builds the corpus and its document frequencies. Every image needs at
    /// least one reference.
    pub fn new(per_image_refs: Vec<Vec<String>>) -> Result<Self, MetricError> {
        if per_image_refs.is_empty() || per_image_refs.iter().any(Vec::is_empty) {
            return Err(MetricError::EmptyCorpus);
        }
        let ref_tokens: Vec<Vec<Vec<String>>> = per_image_refs
            .iter()
            .map(|refs| refs.iter().map(|r| normalize_tokens(r)).collect())
            .collect();

        // document frequency: number of images where the n-gram appears in
        // at least one reference
        let mut doc_freq: [BTreeMap<String, f64>; MAX_NGRAM] = Default::default();
        for refs in &ref_tokens {
            let mut seen: [BTreeMap<String, ()>; MAX_NGRAM] = Default::default();
            for tokens in refs {
                for (n, counts) in ngram_counts(tokens).into_iter().enumerate() {
                    for key in counts.into_keys() {
                        seen[n].entry(key).or_insert(());
                    }
                }
            }
            for (n, keys) in seen.into_iter().enumerate() {
                for key in keys.into_keys() {
                    *doc_freq[n].entry(key).or_insert(0.0) += 1.0;
                }
            }
        }

        let log_images = math::ln(ref_tokens.len() as f64);
        let mut corpus = Self {
            ref_tokens,
            doc_freq,
            log_images,
            ref_vecs: Vec::new(),
        };
        corpus.ref_vecs = corpus
            .ref_tokens
            .iter()
            .map(|refs| refs.iter().map(|t| corpus.vectorize(t)).collect())
            .collect();
        Ok(corpus)
    }

    pub fn n_images(&self) -> usize {
        self.ref_tokens.len()
    }

    /// Normalized reference token lists for one image.
    pub fn references(&self, image: usize) -> &[Vec<String>] {
        &self.ref_tokens[image]
    }

    /// Document frequency of an n-gram (`n` is 1-based).
    pub fn doc_frequency(&self, n: usize, ngram: &str) -> f64 {
        self.doc_freq[n - 1].get(ngram).copied().unwrap_or(0.0)
    }

    pub(crate) fn vectorize(&self, tokens: &[String]) -> TfIdfVec {
        let mut maps: [BTreeMap<String, f64>; MAX_NGRAM] = Default::default();
        let mut norms = [0.0; MAX_NGRAM];
        for (n, counts) in ngram_counts(tokens).into_iter().enumerate() {
            for (key, tf) in counts {
                let df = self.doc_freq[n].get(&key).copied().unwrap_or(0.0);
                let idf = self.log_images - math::ln(df.max(1.0));
                let w = tf * idf;
                norms[n] += w * w;
                maps[n].insert(key, w);
            }
        }
        for norm in &mut norms {
            *norm = math::sqrt(*norm);
        }
        TfIdfVec {
            maps,
            norms,
            len: tokens.len(),
        }
    }
}

/// Clipped cosine similarity per n-gram order, with the length penalty.
fn similarity(cand: &TfIdfVec, reference: &TfIdfVec) -> [f64; MAX_NGRAM] {
    let delta = cand.len as f64 - reference.len as f64;
    let penalty = math::exp(-(delta * delta) / (2.0 * SIGMA * SIGMA));
    let mut out = [0.0; MAX_NGRAM];
    for n in 0..MAX_NGRAM {
        if cand.norms[n] == 0.0 || reference.norms[n] == 0.0 {
            continue;
        }
        let mut dot = 0.0;
        for (key, &wc) in &cand.maps[n] {
            if let Some(&wr) = reference.maps[n].get(key) {
                dot += wc.min(wr) * wr;
            }
        }
        out[n] = dot / (cand.norms[n] * reference.norms[n]) * penalty;
    }
    out
}

/// CIDEr-D over candidates aligned with the corpus images.
pub fn cider(candidates: &[String], corpus: &ReferenceCorpus) -> Result<ScoreReport, MetricError> {
    if candidates.len() != corpus.n_images() {
        return Err(MetricError::CandidateCountMismatch {
            candidates: candidates.len(),
            images: corpus.n_images(),
        });
    }
    let per_sample: Vec<f64> = candidates
        .iter()
        .enumerate()
        .map(|(i, cand)| {
            let cand_vec = corpus.vectorize(&normalize_tokens(cand));
            let refs = &corpus.ref_vecs[i];
            let mut acc = [0.0; MAX_NGRAM];
            for r in refs {
                for (a, s) in acc.iter_mut().zip(similarity(&cand_vec, r)) {
                    *a += s;
                }
            }
            let mean_over_refs_and_n =
                acc.iter().sum::<f64>() / (refs.len() as f64 * MAX_NGRAM as f64);
            REPORT_SCALE * mean_over_refs_and_n
        })
        .collect();
    ScoreReport::from_samples("cider", per_sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn corpus() -> ReferenceCorpus {
        ReferenceCorpus::new(vec![
            vec!["a red square".to_string(), "there is a red square".to_string()],
            vec!["a blue circle".to_string()],
            vec!["a green triangle on a white background".to_string()],
        ])
        .unwrap()
    }

    #[test]
    fn disjoint_candidate_scores_zero() {
        let c = corpus();
        let report = cider(
            &["password".to_string(), "".to_string(), "reset your".to_string()],
            &c,
        )
        .unwrap();
        assert_eq!(report.per_sample, vec![0.0, 0.0, 0.0]);
        assert_eq!(report.aggregate, 0.0);
    }

    #[test]
    fn identical_candidate_scores_high() {
        let c = corpus();
        let report = cider(
            &[
                "a red square".to_string(),
                "a blue circle".to_string(),
                "a green triangle on a white background".to_string(),
            ],
            &c,
        )
        .unwrap();
        // exact match against the single reference: similarity 1 for n = 1..3,
        // and a 3-token caption has no 4-grams, so the mean over n is 3/4
        assert!((report.per_sample[1] - 750.0).abs() < 1e-9);
        assert!(report.per_sample[0] > 400.0 && report.per_sample[0] < 1000.0);
        assert!((report.per_sample[2] - 1000.0).abs() < 1e-9); // 7 tokens, all n match
        assert!(report.aggregate > 0.0);
    }

    #[test]
    fn document_frequency_bounded_by_corpus_size() {
        let c = corpus();
        assert_eq!(c.doc_frequency(1, "a"), 3.0);
        assert_eq!(c.doc_frequency(1, "red"), 1.0);
        assert_eq!(c.doc_frequency(2, "red square"), 1.0);
        assert_eq!(c.doc_frequency(1, "password"), 0.0);
        for n in 1..=4 {
            for (_, &df) in c.doc_freq[n - 1].iter() {
                assert!(df <= c.n_images() as f64);
            }
        }
    }

    #[test]
    fn candidate_count_must_match() {
        let c = corpus();
        assert!(matches!(
            cider(&["a".to_string()], &c),
            Err(MetricError::CandidateCountMismatch { .. })
        ));
        assert!(ReferenceCorpus::new(vec![]).is_err());
        assert!(ReferenceCorpus::new(vec![vec![]]).is_err());
    }
}
