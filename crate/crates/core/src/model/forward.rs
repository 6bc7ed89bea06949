//! Forward passes: vision encoder, cross-attention decoder, next-token
//! logits, and the teacher-forced sequence log-likelihood.
//!
//! Text positions cross-attend to the features of the most recent image slot
//! at or before them; positions before any image get a zeroed cross-attention
//! row. Self-attention is causal throughout, so the logits at position l
//! depend only on tokens before l (and the images).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::ModelConfig;
use super::layout::PromptLayout;
use super::params::ModelParams;
use super::vocab::TokenSequence;
use super::ModelError;
use crate::tensor::{AttentionMask, GradientRecord, NodeId, Tape, Tensor};

const LN_EPS: f64 = 1e-5;

/// Parameter tensors inserted on a tape as leaves.
pub struct BoundParams {
    ids: BTreeMap<String, NodeId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> NodeId {
        self.ids[name]
    }
}

impl ModelParams {
    /// Inserts every parameter on the tape; `trainable` turns on gradient
    /// tracking (training wants parameter gradients, attacks do not).
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let ids = self
            .iter()
            .map(|(name, tensor)| {
                let mut t = tensor.clone();
                if trainable {
                    t = t.with_grad();
                }
                (name.clone(), tape.leaf(t))
            })
            .collect();
        BoundParams { ids }
    }
}

/// layer_norm followed by the learned affine.
fn ln_affine(tape: &mut Tape, x: NodeId, g: NodeId, b: NodeId) -> Result<NodeId, ModelError> {
    let n = tape.layer_norm(x, LN_EPS)?;
    let scaled = tape.mul(n, g)?;
    Ok(tape.add(scaled, b)?)
}

/// Multi-head attention with per-head slicing over shared projections.
#[allow(clippy::too_many_arguments)]
fn multi_head(
    tape: &mut Tape,
    cfg: &ModelConfig,
    q_src: NodeId,
    kv_src: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    wo: NodeId,
    mask: &AttentionMask,
) -> Result<NodeId, ModelError> {
    let q = tape.matmul(q_src, wq)?;
    let k = tape.matmul(kv_src, wk)?;
    let v = tape.matmul(kv_src, wv)?;
    let hd = cfg.head_dim();
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let qh = tape.slice(q, 1, h * hd, hd)?;
        let kh = tape.slice(k, 1, h * hd, hd)?;
        let vh = tape.slice(v, 1, h * hd, hd)?;
        heads.push(tape.attention(qh, kh, vh, mask)?);
    }
    let merged = tape.concat(&heads, 1)?;
    Ok(tape.matmul(merged, wo)?)
}

fn mlp(tape: &mut Tape, bp: &BoundParams, prefix: &str, x: NodeId) -> Result<NodeId, ModelError> {
    let h = tape.matmul(x, bp.id(&alloc::format!("{prefix}.mlp_w1")))?;
    let h = tape.add(h, bp.id(&alloc::format!("{prefix}.mlp_b1")))?;
    let h = tape.gelu(h)?;
    let h = tape.matmul(h, bp.id(&alloc::format!("{prefix}.mlp_w2")))?;
    Ok(tape.add(h, bp.id(&alloc::format!("{prefix}.mlp_b2")))?)
}

/// Vision encoder: patchify, project, add positions, transformer blocks,
/// final norm. Returns `[n_patches, d_model]` features, differentiable with
/// respect to the pixels.
pub fn encode_image_on_tape(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &ModelConfig,
    image: NodeId,
) -> Result<NodeId, ModelError> {
    let t = tape.value(image);
    let expected = [cfg.image_side, cfg.image_side, 3];
    if t.shape() != expected {
        return Err(ModelError::ImageShape {
            got: t.shape().to_vec(),
            expected: expected.to_vec(),
        });
    }
    if let Some(&bad) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ModelError::PixelOutOfRange { value: bad });
    }

    let patches = tape.patchify(image, cfg.patch_size)?;
    let projected = tape.matmul(patches, bp.id("patch_proj_w"))?;
    let projected = tape.add(projected, bp.id("patch_proj_b"))?;
    let mut x = tape.add(projected, bp.id("vis_pos_emb"))?;
    for i in 0..cfg.n_vision_layers {
        let p = alloc::format!("vis{i}");
        let h = ln_affine(
            tape,
            x,
            bp.id(&alloc::format!("{p}.attn_ln_g")),
            bp.id(&alloc::format!("{p}.attn_ln_b")),
        )?;
        let attn = multi_head(
            tape,
            cfg,
            h,
            h,
            bp.id(&alloc::format!("{p}.attn_wq")),
            bp.id(&alloc::format!("{p}.attn_wk")),
            bp.id(&alloc::format!("{p}.attn_wv")),
            bp.id(&alloc::format!("{p}.attn_wo")),
            &AttentionMask::None,
        )?;
        x = tape.add(x, attn)?;
        let h = ln_affine(
            tape,
            x,
            bp.id(&alloc::format!("{p}.mlp_ln_g")),
            bp.id(&alloc::format!("{p}.mlp_ln_b")),
        )?;
        let m = mlp(tape, bp, &p, h)?;
        x = tape.add(x, m)?;
    }
    ln_affine(tape, x, bp.id("vis_ln_f_g"), bp.id("vis_ln_f_b"))
}

/// Value-level convenience wrapper around [`encode_image_on_tape`].
pub fn encode_image(params: &ModelParams, image: &Tensor) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let img = tape.constant(image.clone());
    let feats = encode_image_on_tape(&mut tape, &bp, &params.config, img)?;
    Ok(tape.value(feats).clone())
}

/// Decoder over token ids. `visual` is `(per-image features, media index per
/// position)`; `None` runs the text-only path (cross-attention dropped),
/// which the zero-gate initialization is checked against.
pub(crate) fn decoder_logits_on_tape(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &ModelConfig,
    ids: &[usize],
    visual: Option<(&[NodeId], &[Option<usize>])>,
) -> Result<NodeId, ModelError> {
    if ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if ids.len() > cfg.max_seq_len {
        return Err(ModelError::ContextOverflow {
            len: ids.len(),
            max: cfg.max_seq_len,
        });
    }
    let t = ids.len();

    let vis_all = match visual {
        Some((features, media)) if !features.is_empty() => {
            debug_assert_eq!(media.len(), t);
            let all = tape.concat(features, 0)?;
            let p = cfg.n_patches();
            let cols = features.len() * p;
            let mut mask = alloc::vec![false; t * cols];
            for (i, m) in media.iter().enumerate() {
                if let Some(slot) = m {
                    for c in 0..p {
                        mask[i * cols + slot * p + c] = true;
                    }
                }
            }
            Some((all, AttentionMask::Explicit(mask)))
        }
        _ => None,
    };

    let tok = tape.gather(bp.id("tok_emb"), ids)?;
    let pos = tape.slice(bp.id("pos_emb"), 0, 0, t)?;
    let mut x = tape.add(tok, pos)?;

    for i in 0..cfg.n_decoder_layers {
        let p = alloc::format!("dec{i}");
        if let Some((vis, mask)) = &vis_all {
            let h = ln_affine(
                tape,
                x,
                bp.id(&alloc::format!("{p}.xattn_ln_g")),
                bp.id(&alloc::format!("{p}.xattn_ln_b")),
            )?;
            let xa = multi_head(
                tape,
                cfg,
                h,
                *vis,
                bp.id(&alloc::format!("{p}.xattn_wq")),
                bp.id(&alloc::format!("{p}.xattn_wk")),
                bp.id(&alloc::format!("{p}.xattn_wv")),
                bp.id(&alloc::format!("{p}.xattn_wo")),
                mask,
            )?;
            let gated = tape.mul(xa, bp.id(&alloc::format!("{p}.xattn_gate")))?;
            x = tape.add(x, gated)?;
        }
        let h = ln_affine(
            tape,
            x,
            bp.id(&alloc::format!("{p}.attn_ln_g")),
            bp.id(&alloc::format!("{p}.attn_ln_b")),
        )?;
        let sa = multi_head(
            tape,
            cfg,
            h,
            h,
            bp.id(&alloc::format!("{p}.attn_wq")),
            bp.id(&alloc::format!("{p}.attn_wk")),
            bp.id(&alloc::format!("{p}.attn_wv")),
            bp.id(&alloc::format!("{p}.attn_wo")),
            &AttentionMask::Causal,
        )?;
        x = tape.add(x, sa)?;
        let h = ln_affine(
            tape,
            x,
            bp.id(&alloc::format!("{p}.mlp_ln_g")),
            bp.id(&alloc::format!("{p}.mlp_ln_b")),
        )?;
        let m = mlp(tape, bp, &p, h)?;
        x = tape.add(x, m)?;
    }
    let x = ln_affine(tape, x, bp.id("ln_f_g"), bp.id("ln_f_b"))?;
    Ok(tape.matmul(x, bp.id("unembed"))?)
}

/// Full teacher-forced logits for prompt + continuation: `[T, vocab]`.
pub fn full_logits_on_tape(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &ModelConfig,
    layout: &PromptLayout,
    continuation: &[usize],
    images: &[NodeId],
) -> Result<NodeId, ModelError> {
    layout.validate()?;
    if images.len() != layout.image_slots() {
        return Err(ModelError::ImageCountMismatch {
            expected: layout.image_slots(),
            got: images.len(),
        });
    }
    let mut features = Vec::with_capacity(images.len());
    for &img in images {
        features.push(encode_image_on_tape(tape, bp, cfg, img)?);
    }
    let (ids, media) = layout.assemble(continuation);
    decoder_logits_on_tape(tape, bp, cfg, &ids, Some((&features, &media)))
}

/// Unnormalized scores for the next token after `layout ++ prefix`.
pub fn next_token_logits(
    params: &ModelParams,
    layout: &PromptLayout,
    prefix: &TokenSequence,
    images: &[Tensor],
) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let image_ids: Vec<NodeId> = images.iter().map(|t| tape.constant(t.clone())).collect();
    let logits = full_logits_on_tape(
        &mut tape,
        &bp,
        &params.config,
        layout,
        prefix.ids(),
        &image_ids,
    )?;
    let t = tape.value(logits).shape()[0];
    let last = tape.slice(logits, 0, t - 1, 1)?;
    let flat = tape.reshape(last, &[params.config.vocab_size])?;
    Ok(tape.value(flat).clone())
}

/// Teacher-forced sequence log-likelihood (<= 0) on an existing tape.
///
/// Exactly the sum over positions of the per-step log-probability: the
/// cross-entropy rows are sliced from one causal forward pass, so the value
/// is bit-identical to summing stepwise evaluations.
pub fn sequence_log_likelihood_on_tape(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &ModelConfig,
    y: &TokenSequence,
    layout: &PromptLayout,
    images: &[NodeId],
) -> Result<NodeId, ModelError> {
    if y.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let logits = full_logits_on_tape(tape, bp, cfg, layout, y.ids(), images)?;
    let m = y.ids().len();
    let total = tape.value(logits).shape()[0];
    let prompt_len = total - m;
    let rows = tape.slice(logits, 0, prompt_len - 1, m)?;
    let ce = tape.cross_entropy(rows, y.ids())?;
    let nll = tape.sum(ce)?;
    Ok(tape.scale(nll, -1.0)?)
}

/// Value-level sequence log-likelihood.
pub fn sequence_log_likelihood(
    params: &ModelParams,
    y: &TokenSequence,
    layout: &PromptLayout,
    images: &[Tensor],
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let image_ids: Vec<NodeId> = images.iter().map(|t| tape.constant(t.clone())).collect();
    let ll = sequence_log_likelihood_on_tape(&mut tape, &bp, &params.config, y, layout, &image_ids)?;
    Ok(tape.value(ll).item()?)
}

/// Gradient of a recorded scalar objective with respect to each image node.
/// Images that do not lie on the recorded path get exact zero tensors.
pub fn grad_wrt_images(
    tape: &Tape,
    objective: NodeId,
    images: &[NodeId],
) -> Result<Vec<Tensor>, ModelError> {
    let record: GradientRecord = tape.backward(objective)?;
    Ok(images
        .iter()
        .map(|&id| {
            record
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(id).shape()))
        })
        .collect())
}

/// Names of the parameters, in binding order (used by the optimizer).
pub fn parameter_names(params: &ModelParams) -> Vec<String> {
    params.names().cloned().collect()
}
