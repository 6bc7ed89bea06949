//! Text normalization shared by CIDEr, BLEU, and VQA accuracy: lowercase,
//! strip punctuation, collapse whitespace. The substring success rate
//! deliberately skips this and matches raw output.

use alloc::string::String;
use alloc::vec::Vec;

/// Normalized word list of a caption.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_strips_and_collapses() {
        assert_eq!(
            normalize_tokens("A red,  SQUARE! on:   white"),
            ["a", "red", "square", "on", "white"]
        );
        assert!(normalize_tokens("  ... ").is_empty());
        assert!(normalize_tokens("").is_empty());
    }

    #[test]
    fn idempotent_on_normalized_text() {
        let once = normalize_tokens("There is a Red square.");
        let rejoined = once.join(" ");
        assert_eq!(normalize_tokens(&rejoined), once);
    }
}
