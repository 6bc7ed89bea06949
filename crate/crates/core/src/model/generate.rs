//! Greedy decoding with the `Output:` truncation rule.

use alloc::string::String;
use alloc::vec::Vec;

use super::forward::full_logits_on_tape;
use super::layout::PromptLayout;
use super::params::ModelParams;
use super::vocab::{TokenSequence, Vocabulary, EOS_ID, OUTPUT_ID};
use super::ModelError;
use crate::tensor::{NodeId, Tape, Tensor};

/// Result of greedy generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Generated tokens up to (not including) end-of-text.
    pub tokens: TokenSequence,
    /// Decoded text truncated at the first `Output:` in the generated region.
    pub text: String,
    /// Decoded text without the truncation, for inspection.
    pub raw_text: String,
}

/// Greedy argmax over the next-token distribution; ties break toward the
/// lowest token id.
pub(crate) fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding until end-of-text, the token budget, or the context limit.
pub fn generate(
    params: &ModelParams,
    vocab: &Vocabulary,
    layout: &PromptLayout,
    images: &[Tensor],
    max_new_tokens: usize,
) -> Result<Generation, ModelError> {
    if max_new_tokens == 0 {
        return Err(ModelError::ConfigInvalid {
            msg: String::from("max_new_tokens must be at least 1"),
        });
    }
    let cfg = &params.config;
    let prompt_len = layout.assemble(&[]).0.len();
    let budget = max_new_tokens.min(cfg.max_seq_len.saturating_sub(prompt_len));

    let mut generated: Vec<usize> = Vec::new();
    for _ in 0..budget {
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape, false);
        let image_ids: Vec<NodeId> = images.iter().map(|t| tape.constant(t.clone())).collect();
        let logits = full_logits_on_tape(&mut tape, &bp, cfg, layout, &generated, &image_ids)?;
        let t = tape.value(logits).shape()[0];
        let v = cfg.vocab_size;
        let row = &tape.value(logits).data()[(t - 1) * v..t * v];
        let next = argmax(row);
        if next == EOS_ID {
            break;
        }
        generated.push(next);
    }

    let visible: Vec<usize> = generated
        .iter()
        .copied()
        .take_while(|&id| id != OUTPUT_ID)
        .collect();
    Ok(Generation {
        text: vocab.decode(&visible)?,
        raw_text: vocab.decode(&generated)?,
        tokens: TokenSequence::new(generated),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_toward_lowest_id() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
    }
}
