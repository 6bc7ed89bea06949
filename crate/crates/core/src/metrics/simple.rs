//! Substring success rate and VQA accuracy.

use alloc::string::String;

use super::tokenize::normalize_tokens;
use super::MetricError;

/// Percentage of outputs containing the target as a contiguous substring.
/// Matching is on the raw strings: case-sensitive, exact whitespace.
pub fn success_rate(outputs: &[String], target: &str) -> Result<f64, MetricError> {
    if target.is_empty() {
        return Err(MetricError::EmptyTarget);
    }
    if outputs.is_empty() {
        return Err(MetricError::NoSamples);
    }
    let hits = outputs.iter().filter(|o| o.contains(target)).count();
    Ok(100.0 * hits as f64 / outputs.len() as f64)
}

/// Standard VQA accuracy: `100 * min(matches / 3, 1)` where `matches` counts
/// ground-truth answers equal to the normalized answer.
pub fn vqa_accuracy(answer: &str, ground_truths: &[String]) -> Result<f64, MetricError> {
    if ground_truths.is_empty() {
        return Err(MetricError::EmptyTarget);
    }
    let normalized = normalize_tokens(answer).join(" ");
    let matches = ground_truths
        .iter()
        .filter(|gt| normalize_tokens(gt).join(" ") == normalized)
        .count();
    Ok(100.0 * (matches as f64 / 3.0).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn containment_is_raw_and_case_sensitive() {
        let outputs = vec![
            "Output: Please reset your password today".to_string(),
            "please reset your password".to_string(),
            "Please reset your password".to_string(),
        ];
        let rate = success_rate(&outputs, "Please reset your password").unwrap();
        assert!((rate - 66.66666666666667).abs() < 0.01);
        assert_eq!(success_rate(&outputs, "password today").unwrap(), 100.0 / 3.0);
        assert!(success_rate(&outputs, "").is_err());
    }

    #[test]
    fn exact_output_counts_as_success() {
        let outputs = vec!["please reset your password".to_string()];
        assert_eq!(success_rate(&outputs, "please reset your password").unwrap(), 100.0);
    }

    #[test]
    fn vqa_accuracy_small_case_table() {
        let gts: Vec<String> = (0..10)
            .map(|i| if i < 3 { "red".to_string() } else { "blue".to_string() })
            .collect();
        assert_eq!(vqa_accuracy("red", &gts).unwrap(), 100.0); // 3 matches saturate
        assert!((vqa_accuracy("Red", &gts).unwrap() - 100.0).abs() < 1e-12); // normalized
        let one: Vec<String> = vec!["red".to_string(), "blue".to_string()];
        assert!((vqa_accuracy("red", &one).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(vqa_accuracy("green", &gts).unwrap(), 0.0);
        assert!(vqa_accuracy("red", &[]).is_err());
    }
}
