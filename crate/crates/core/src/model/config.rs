//! Architecture hyperparameters.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape of the captioner. The MLP hidden width is fixed at `2 * d_model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_decoder_layers: usize,
    pub n_vision_layers: usize,
    pub patch_size: usize,
    pub image_side: usize,
    pub vocab_size: usize,
    /// Initial value of the cross-attention gates (zero mirrors stable
    /// vision-language fusion and makes the text-only-at-init check exact).
    pub gate_init: f64,
    pub max_seq_len: usize,
}

impl ModelConfig {
    /// The desk-scale default used throughout.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_decoder_layers: 2,
            n_vision_layers: 2,
            patch_size: 8,
            image_side: 32,
            vocab_size,
            gate_init: 0.0,
            max_seq_len: 128,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            self.d_model,
            self.n_heads,
            self.n_decoder_layers,
            self.n_vision_layers,
            self.patch_size,
            self.image_side,
            self.vocab_size,
            self.max_seq_len,
        ]
        .iter()
        .all(|&v| v > 0);
        if !positive {
            return Err(ModelError::ConfigInvalid {
                msg: alloc::format!("all extents must be positive: {self:?}"),
            });
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::ConfigInvalid {
                msg: alloc::format!("d_model {} not divisible by {} heads", self.d_model, self.n_heads),
            });
        }
        if self.image_side % self.patch_size != 0 {
            return Err(ModelError::ConfigInvalid {
                msg: alloc::format!(
                    "image side {} not divisible by patch {}",
                    self.image_side,
                    self.patch_size
                ),
            });
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        let per_side = self.image_side / self.patch_size;
        per_side * per_side
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn mlp_hidden(&self) -> usize {
        2 * self.d_model
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_config_is_valid() {
        let c = ModelConfig::toy(50);
        c.validate().unwrap();
        assert_eq!(c.n_patches(), 16);
        assert_eq!(c.head_dim(), 16);
        assert_eq!(c.patch_dim(), 192);
    }

    #[test]
    fn divisibility_is_enforced() {
        let mut c = ModelConfig::toy(50);
        c.n_heads = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(50);
        c.patch_size = 7;
        assert!(c.validate().is_err());
    }
}
