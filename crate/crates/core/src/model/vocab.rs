//! Closed word-level vocabulary with fixed reserved tokens.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ModelError;

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const IMAGE_ID: usize = 3;
/// The literal word "Output:" is a single token so the generation truncation
/// rule is well-defined.
pub const OUTPUT_ID: usize = 4;

pub const RESERVED_WORDS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<image>", "Output:"];

/// Ordered word list with dense ids; reserved tokens occupy ids 0..5.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn new(user_words: &[&str]) -> Result<Self, ModelError> {
        let mut words: Vec<String> = RESERVED_WORDS.iter().map(|w| w.to_string()).collect();
        let mut index: BTreeMap<String, usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        for &w in user_words {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(ModelError::BadWord { word: w.to_string() });
            }
            if index.contains_key(w) {
                return Err(ModelError::DuplicateWord { word: w.to_string() });
            }
            index.insert(w.to_string(), words.len());
            words.push(w.to_string());
        }
        Ok(Self { words, index })
    }

    /// The vocabulary of the synthetic scene grammar.
    pub fn for_grammar() -> Self {
        Self::new(&crate::data::grammar::all_words()).expect("grammar word list is valid")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Whitespace tokenization over the closed vocabulary.
    pub fn encode(&self, text: &str) -> Result<TokenSequence, ModelError> {
        let mut ids = Vec::new();
        for w in text.split_whitespace() {
            let id = self.id(w).ok_or_else(|| ModelError::UnknownWord {
                word: w.to_string(),
            })?;
            ids.push(id);
        }
        Ok(TokenSequence::new(ids))
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String, ModelError> {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            let w = self.word(id).ok_or(ModelError::UnknownTokenId { id })?;
            if i > 0 {
                out.push(' ');
            }
            out.push_str(w);
        }
        Ok(out)
    }
}

/// Vocabulary-indexed text. Padding never occurs inside sequences at runtime;
/// `len` counts non-padding tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        Self { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.iter().filter(|&&id| id != PAD_ID).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, id: usize) {
        self.ids.push(id);
    }
}
