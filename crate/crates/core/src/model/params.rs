//! Named parameter tensors and their deterministic initialization.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::ModelError;
use crate::math;
use crate::tensor::Tensor;

/// All trainable tensors, keyed by stable names (checkpoint block names).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

fn push_block(out: &mut BTreeMap<String, Vec<usize>>, prefix: &str, cfg: &ModelConfig, cross: bool) {
    let d = cfg.d_model;
    let h = cfg.mlp_hidden();
    if cross {
        out.insert(alloc::format!("{prefix}.xattn_ln_g"), alloc::vec![d]);
        out.insert(alloc::format!("{prefix}.xattn_ln_b"), alloc::vec![d]);
        for w in ["wq", "wk", "wv", "wo"] {
            out.insert(alloc::format!("{prefix}.xattn_{w}"), alloc::vec![d, d]);
        }
        out.insert(alloc::format!("{prefix}.xattn_gate"), alloc::vec![1]);
    }
    out.insert(alloc::format!("{prefix}.attn_ln_g"), alloc::vec![d]);
    out.insert(alloc::format!("{prefix}.attn_ln_b"), alloc::vec![d]);
    for w in ["wq", "wk", "wv", "wo"] {
        out.insert(alloc::format!("{prefix}.attn_{w}"), alloc::vec![d, d]);
    }
    out.insert(alloc::format!("{prefix}.mlp_ln_g"), alloc::vec![d]);
    out.insert(alloc::format!("{prefix}.mlp_ln_b"), alloc::vec![d]);
    out.insert(alloc::format!("{prefix}.mlp_w1"), alloc::vec![d, h]);
    out.insert(alloc::format!("{prefix}.mlp_b1"), alloc::vec![h]);
    out.insert(alloc::format!("{prefix}.mlp_w2"), alloc::vec![h, d]);
    out.insert(alloc::format!("{prefix}.mlp_b2"), alloc::vec![d]);
}

impl ModelParams {
    /// Name -> shape map; the single source of truth for the parameter set.
    pub fn expected_shapes(cfg: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
        let d = cfg.d_model;
        let mut out = BTreeMap::new();
        out.insert(String::from("tok_emb"), alloc::vec![cfg.vocab_size, d]);
        out.insert(String::from("pos_emb"), alloc::vec![cfg.max_seq_len, d]);
        out.insert(String::from("vis_pos_emb"), alloc::vec![cfg.n_patches(), d]);
        out.insert(String::from("patch_proj_w"), alloc::vec![cfg.patch_dim(), d]);
        out.insert(String::from("patch_proj_b"), alloc::vec![d]);
        for i in 0..cfg.n_vision_layers {
            push_block(&mut out, &alloc::format!("vis{i}"), cfg, false);
        }
        out.insert(String::from("vis_ln_f_g"), alloc::vec![d]);
        out.insert(String::from("vis_ln_f_b"), alloc::vec![d]);
        for i in 0..cfg.n_decoder_layers {
            push_block(&mut out, &alloc::format!("dec{i}"), cfg, true);
        }
        out.insert(String::from("ln_f_g"), alloc::vec![d]);
        out.insert(String::from("ln_f_b"), alloc::vec![d]);
        out.insert(String::from("unembed"), alloc::vec![d, cfg.vocab_size]);
        out
    }

    /// Seeded initialization: Xavier-uniform matrices, unit layer-norm gains,
    /// zero biases, gates at `config.gate_init`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape) in Self::expected_shapes(&config) {
            let numel: usize = shape.iter().product();
            let data: Vec<f64> = if shape.len() == 2 {
                let bound = math::sqrt(6.0 / (shape[0] + shape[1]) as f64);
                (0..numel).map(|_| rng.gen_range(-bound..bound)).collect()
            } else if name.ends_with("_g") {
                alloc::vec![1.0; numel]
            } else if name.ends_with("gate") {
                alloc::vec![config.gate_init; numel]
            } else {
                alloc::vec![0.0; numel]
            };
            tensors.insert(name, Tensor::new(shape, data).expect("shape matches data"));
        }
        Ok(Self { config, tensors })
    }

    /// Rebuilds params from named tensors, checking names and shapes.
    pub fn from_tensors(
        config: ModelConfig,
        tensors: BTreeMap<String, Tensor>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = Self::expected_shapes(&config);
        if tensors.len() != expected.len() {
            return Err(ModelError::ParamMismatch {
                msg: alloc::format!("{} tensors, expected {}", tensors.len(), expected.len()),
            });
        }
        for (name, shape) in &expected {
            match tensors.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(ModelError::ParamMismatch {
                        msg: alloc::format!("{name}: shape {:?}, expected {shape:?}", t.shape()),
                    })
                }
                None => {
                    return Err(ModelError::ParamMismatch {
                        msg: alloc::format!("missing tensor {name}"),
                    })
                }
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[name]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors.get_mut(name).expect("known parameter name")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_complete() {
        let cfg = ModelConfig::toy(50);
        let a = ModelParams::init(cfg.clone(), 7).unwrap();
        let b = ModelParams::init(cfg.clone(), 7).unwrap();
        assert_eq!(a.num_tensors(), ModelParams::expected_shapes(&cfg).len());
        for (name, t) in a.iter() {
            let u = b.get(name);
            assert!(t
                .data()
                .iter()
                .zip(u.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let c = ModelParams::init(cfg, 8).unwrap();
        assert!(a.get("unembed").data() != c.get("unembed").data());
    }

    #[test]
    fn gates_start_at_configured_value() {
        let mut cfg = ModelConfig::toy(50);
        cfg.gate_init = 0.25;
        let p = ModelParams::init(cfg, 0).unwrap();
        assert_eq!(p.get("dec0.xattn_gate").data(), &[0.25]);
        assert_eq!(p.get("dec1.xattn_gate").data(), &[0.25]);
        assert_eq!(p.get("dec0.attn_ln_g").data()[0], 1.0);
        assert_eq!(p.get("dec0.mlp_b1").data()[0], 0.0);
    }

    #[test]
    fn from_tensors_validates_shapes() {
        let cfg = ModelConfig::toy(50);
        let p = ModelParams::init(cfg.clone(), 1).unwrap();
        let mut map: BTreeMap<String, Tensor> =
            p.iter().map(|(n, t)| (n.clone(), t.clone())).collect();
        assert!(ModelParams::from_tensors(cfg.clone(), map.clone()).is_ok());
        map.insert(String::from("unembed"), Tensor::zeros(&[2, 2]));
        assert!(ModelParams::from_tensors(cfg.clone(), map.clone()).is_err());
        map.remove("unembed");
        assert!(ModelParams::from_tensors(cfg, map).is_err());
    }

    #[test]
    fn parameter_count_is_desk_scale() {
        let p = ModelParams::init(ModelConfig::toy(50), 0).unwrap();
        let n = p.num_params();
        assert!(n > 100_000 && n < 400_000, "{n} parameters");
    }
}
