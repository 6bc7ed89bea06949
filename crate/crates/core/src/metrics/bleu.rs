//! BLEU-4 against a single reference, with the output first truncated to the
//! reference word count.

use super::cider::ngram_counts;
use super::tokenize::normalize_tokens;
use super::MetricError;
use crate::math;

/// BLEU-4 in [0, 100].
///
/// The output is truncated to the target's word count before scoring, then
/// standard clipped n-gram precision with brevity penalty applies. Targets
/// shorter than four words cap the n-gram order at their length so an exact
/// match still scores 100.
pub fn bleu4(output: &str, target: &str) -> Result<f64, MetricError> {
    let target_tokens = normalize_tokens(target);
    if target_tokens.is_empty() {
        return Err(MetricError::EmptyTarget);
    }
    let mut out_tokens = normalize_tokens(output);
    out_tokens.truncate(target_tokens.len());
    if out_tokens.is_empty() {
        return Ok(0.0);
    }

    let max_n = target_tokens.len().min(4);
    let cand_counts = ngram_counts(&out_tokens);
    let ref_counts = ngram_counts(&target_tokens);
    let mut log_precision_sum = 0.0;
    for n in 1..=max_n {
        let total: f64 = cand_counts[n - 1].values().sum();
        if total == 0.0 {
            return Ok(0.0);
        }
        let mut clipped = 0.0;
        for (key, &c) in &cand_counts[n - 1] {
            let r = ref_counts[n - 1].get(key).copied().unwrap_or(0.0);
            clipped += c.min(r);
        }
        if clipped == 0.0 {
            return Ok(0.0);
        }
        log_precision_sum += math::ln(clipped / total);
    }

    let c = out_tokens.len() as f64;
    let r = target_tokens.len() as f64;
    let brevity = if c < r { math::exp(1.0 - r / c) } else { 1.0 };
    Ok(100.0 * brevity * math::exp(log_precision_sum / max_n as f64))
}
