//! Prompt layouts: interleaved image slots and text segments.
//!
//! The prompt around every image is the literal token `Output:`; context
//! images additionally carry their caption (terminated by end-of-text), the
//! query image slot comes last. Zero-shot is one image slot, few-shot is
//! context slots followed by the query slot.

use alloc::vec::Vec;

use super::vocab::{TokenSequence, BOS_ID, EOS_ID, IMAGE_ID, OUTPUT_ID};
use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// An image slot by index; slot order is 0..=shots with the query last.
    Image(usize),
    Text(TokenSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptLayout {
    segments: Vec<Segment>,
    shots: usize,
}

impl PromptLayout {
    /// `<bos> <image> Output:`
    pub fn zero_shot() -> Self {
        Self {
            segments: alloc::vec![
                Segment::Text(TokenSequence::new(alloc::vec![BOS_ID])),
                Segment::Image(0),
                Segment::Text(TokenSequence::new(alloc::vec![OUTPUT_ID])),
            ],
            shots: 0,
        }
    }

    /// `<bos> (<image> Output: caption <eos>)* <image> Output:`
    pub fn few_shot(context_captions: &[TokenSequence]) -> Result<Self, ModelError> {
        if context_captions.iter().any(TokenSequence::is_empty) {
            return Err(ModelError::EmptySequence);
        }
        let mut segments = alloc::vec![Segment::Text(TokenSequence::new(alloc::vec![BOS_ID]))];
        for (slot, caption) in context_captions.iter().enumerate() {
            segments.push(Segment::Image(slot));
            let mut text = alloc::vec![OUTPUT_ID];
            text.extend_from_slice(caption.ids());
            text.push(EOS_ID);
            segments.push(Segment::Text(TokenSequence::new(text)));
        }
        segments.push(Segment::Image(context_captions.len()));
        segments.push(Segment::Text(TokenSequence::new(alloc::vec![OUTPUT_ID])));
        Ok(Self {
            segments,
            shots: context_captions.len(),
        })
    }

    /// `<bos> question <image> Output:` — the question precedes the image so
    /// every image slot is directly followed by `Output:`.
    pub fn question(question: &TokenSequence) -> Result<Self, ModelError> {
        if question.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let mut lead = alloc::vec![BOS_ID];
        lead.extend_from_slice(question.ids());
        Ok(Self {
            segments: alloc::vec![
                Segment::Text(TokenSequence::new(lead)),
                Segment::Image(0),
                Segment::Text(TokenSequence::new(alloc::vec![OUTPUT_ID])),
            ],
            shots: 0,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn image_slots(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Image(_)))
            .count()
    }

    /// Flattened prompt token ids (image slots become the `<image>` token).
    pub fn prompt_ids(&self) -> Vec<usize> {
        let mut ids = Vec::new();
        for seg in &self.segments {
            match seg {
                Segment::Image(_) => ids.push(IMAGE_ID),
                Segment::Text(t) => ids.extend_from_slice(t.ids()),
            }
        }
        ids
    }

    /// Structural invariants: `shots + 1` slots in order, each slot directly
    /// followed by `Output:`, context slots carrying a caption.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut expected_slot = 0usize;
        for (i, seg) in self.segments.iter().enumerate() {
            if let Segment::Image(slot) = seg {
                if *slot != expected_slot {
                    return Err(ModelError::LayoutInvalid {
                        msg: alloc::format!("image slot {slot} out of order"),
                    });
                }
                expected_slot += 1;
                let follow = self.segments.get(i + 1);
                let Some(Segment::Text(t)) = follow else {
                    return Err(ModelError::LayoutInvalid {
                        msg: alloc::format!("image slot {slot} not followed by text"),
                    });
                };
                if t.ids().first() != Some(&OUTPUT_ID) {
                    return Err(ModelError::LayoutInvalid {
                        msg: alloc::format!("image slot {slot} not followed by Output:"),
                    });
                }
                let is_context = *slot + 1 < self.shots + 1;
                if is_context && t.ids().len() < 3 {
                    return Err(ModelError::LayoutInvalid {
                        msg: alloc::format!("context slot {slot} has no caption"),
                    });
                }
            }
        }
        if expected_slot != self.shots + 1 {
            return Err(ModelError::LayoutInvalid {
                msg: alloc::format!("{expected_slot} image slots for {} shots", self.shots),
            });
        }
        Ok(())
    }

    /// Token ids plus, per position, the index of the most recent image slot
    /// at or before it (cross-attention visibility).
    pub(crate) fn assemble(&self, continuation: &[usize]) -> (Vec<usize>, Vec<Option<usize>>) {
        let mut ids = Vec::new();
        let mut media = Vec::new();
        let mut current = None;
        for seg in &self.segments {
            match seg {
                Segment::Image(slot) => {
                    current = Some(*slot);
                    ids.push(IMAGE_ID);
                    media.push(current);
                }
                Segment::Text(t) => {
                    for &id in t.ids() {
                        ids.push(id);
                        media.push(current);
                    }
                }
            }
        }
        for &id in continuation {
            ids.push(id);
            media.push(current);
        }
        (ids, media)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vocabulary;

    #[test]
    fn zero_shot_has_exactly_one_image_slot() {
        let layout = PromptLayout::zero_shot();
        layout.validate().unwrap();
        assert_eq!(layout.image_slots(), 1);
        assert_eq!(layout.shots(), 0);
        assert_eq!(layout.prompt_ids(), alloc::vec![BOS_ID, IMAGE_ID, OUTPUT_ID]);
    }

    #[test]
    fn few_shot_interleaves_and_validates() {
        let v = Vocabulary::for_grammar();
        let caps = [
            v.encode("a red square").unwrap(),
            v.encode("a blue circle").unwrap(),
        ];
        let layout = PromptLayout::few_shot(&caps).unwrap();
        layout.validate().unwrap();
        assert_eq!(layout.shots(), 2);
        assert_eq!(layout.image_slots(), 3);
        let (ids, media) = layout.assemble(&[]);
        assert_eq!(media[0], None); // <bos> precedes any image
        let image_positions: Vec<usize> = ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == IMAGE_ID)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(image_positions.len(), 3);
        // every position after the last image attends to the query slot
        assert!(media[image_positions[2]..].iter().all(|m| *m == Some(2)));
    }

    #[test]
    fn question_layout_precedes_image() {
        let v = Vocabulary::for_grammar();
        let q = v.encode("what color is the square").unwrap();
        let layout = PromptLayout::question(&q).unwrap();
        layout.validate().unwrap();
        let ids = layout.prompt_ids();
        assert_eq!(*ids.last().unwrap(), OUTPUT_ID);
        assert_eq!(ids[ids.len() - 2], IMAGE_ID);
    }

    #[test]
    fn empty_context_caption_rejected() {
        assert!(PromptLayout::few_shot(&[TokenSequence::new(alloc::vec![])]).is_err());
    }
}
