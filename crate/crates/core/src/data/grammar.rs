//! The closed word grammar.
//!
//! Every caption, question, answer, and shipped target phrase tokenizes over
//! this list, which keeps the vocabulary small enough to train the toy model
//! and makes targeted attacks expressible in-vocabulary.

use alloc::vec::Vec;

/// Words used by the caption templates.
pub const CAPTION_WORDS: &[&str] = &[
    "a", "and", "there", "is", "the", "image", "shows", "on", "background", "picture", "contains",
];

/// Object color words.
pub const COLOR_WORDS: &[&str] = &["red", "green", "blue", "yellow", "purple"];

/// Background color words.
pub const BACKGROUND_WORDS: &[&str] = &["white", "black", "gray"];

/// Shape words.
pub const SHAPE_WORDS: &[&str] = &["square", "circle", "triangle"];

/// Question/answer words, including the reserved "unanswerable" literal.
pub const QA_WORDS: &[&str] = &[
    "what",
    "color",
    "shape",
    "object",
    "objects",
    "how",
    "many",
    "are",
    "in",
    "one",
    "two",
    "three",
    "unanswerable",
];

/// Words reserved for attack target phrases. They never occur in training
/// captions, mirroring targets that are out-of-distribution text.
pub const TARGET_WORDS: &[&str] = &[
    "please",
    "reset",
    "your",
    "password",
    "person",
    "suffers",
    "severe",
    "side",
    "effects",
    "after",
    "vaccination",
];

/// Shipped target phrase presets.
pub const TARGET_SHORT: &str = "please reset your password";
pub const TARGET_LONG: &str = "a person suffers severe side effects after vaccination";

/// All grammar words in a stable order, deduplicated.
pub fn all_words() -> Vec<&'static str> {
    let mut words = Vec::new();
    for group in [
        CAPTION_WORDS,
        COLOR_WORDS,
        BACKGROUND_WORDS,
        SHAPE_WORDS,
        QA_WORDS,
        TARGET_WORDS,
    ] {
        for &w in group {
            if !words.contains(&w) {
                words.push(w);
            }
        }
    }
    words
}
