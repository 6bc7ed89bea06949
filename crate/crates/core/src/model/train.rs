//! Teacher-forced training: Adam with a cosine step schedule, per-sample
//! gradients summed in a fixed order so results are bit-identical regardless
//! of worker count.

use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::{full_logits_on_tape, parameter_names};
use super::layout::PromptLayout;
use super::params::ModelParams;
use super::vocab::{TokenSequence, Vocabulary, EOS_ID};
use super::ModelError;
use crate::data::DatasetRecord;
use crate::math;
use crate::tensor::{NodeId, Tape, Tensor};

/// Optimization constants. Everything lands in the run report, so a training
/// run is reproducible from its config echo alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global-norm gradient clip; 0 disables.
    pub grad_clip: f64,
    /// Fraction of caption samples presented in a four-shot layout.
    pub four_shot_fraction: f64,
    /// Fraction of samples trained as question answering when QA pairs exist.
    pub qa_fraction: f64,
    pub seed: u64,
    /// Threads for per-sample gradient computation (no effect on results).
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            four_shot_fraction: 0.2,
            qa_fraction: 0.3,
            seed: 0,
            workers: 1,
        }
    }
}

/// Trained parameters plus the per-epoch mean loss curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_curve: Vec<f64>,
}

/// One teacher-forcing example.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub layout: PromptLayout,
    pub images: Vec<Tensor>,
    /// Target tokens, terminated by end-of-text.
    pub target: TokenSequence,
}

fn encode_target(vocab: &Vocabulary, text: &str) -> Result<TokenSequence, ModelError> {
    let mut seq = vocab.encode(text)?;
    seq.push(EOS_ID);
    Ok(seq)
}

/// Majority answer for QA training: the pool select_ground_truth would use.
fn training_answer(answers: &[String]) -> &str {
    let unanswerable = answers.iter().filter(|a| *a == "unanswerable").count();
    if unanswerable * 2 > answers.len() {
        "unanswerable"
    } else {
        answers
            .iter()
            .find(|a| *a != "unanswerable")
            .map(String::as_str)
            .unwrap_or("unanswerable")
    }
}

/// Builds the epoch's samples: shuffled records, a random reference each, a
/// slice of four-shot layouts, and QA samples where pairs exist.
fn epoch_samples(
    records: &[&DatasetRecord],
    vocab: &Vocabulary,
    tc: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainSample>, ModelError> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(rng);
    let mut samples = Vec::with_capacity(order.len());
    for idx in order {
        let record = records[idx];
        if let Some(qa) = &record.qa {
            if rng.gen_range(0.0..1.0) < tc.qa_fraction {
                samples.push(TrainSample {
                    layout: PromptLayout::question(&vocab.encode(&qa.question)?)?,
                    images: alloc::vec![record.image.clone()],
                    target: encode_target(vocab, training_answer(&qa.answers))?,
                });
                continue;
            }
        }
        let reference = &record.references[rng.gen_range(0..record.references.len())];
        let target = encode_target(vocab, reference)?;
        let four_shot =
            records.len() > 8 && rng.gen_range(0.0..1.0) < tc.four_shot_fraction;
        if four_shot {
            let mut ctx_idx = Vec::with_capacity(4);
            while ctx_idx.len() < 4 {
                let c = rng.gen_range(0..records.len());
                if c != idx && !ctx_idx.contains(&c) {
                    ctx_idx.push(c);
                }
            }
            let ctx_caps: Vec<TokenSequence> = ctx_idx
                .iter()
                .map(|&c| vocab.encode(&records[c].references[0]))
                .collect::<Result<_, _>>()?;
            let mut images: Vec<Tensor> =
                ctx_idx.iter().map(|&c| records[c].image.clone()).collect();
            images.push(record.image.clone());
            samples.push(TrainSample {
                layout: PromptLayout::few_shot(&ctx_caps)?,
                images,
                target,
            });
        } else {
            samples.push(TrainSample {
                layout: PromptLayout::zero_shot(),
                images: alloc::vec![record.image.clone()],
                target,
            });
        }
    }
    Ok(samples)
}

/// Loss (mean cross-entropy over target tokens) and parameter gradients for
/// one sample, in `names` order.
fn sample_gradients(
    params: &ModelParams,
    names: &[String],
    sample: &TrainSample,
) -> Result<(f64, Vec<Tensor>), ModelError> {
    let cfg = &params.config;
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, true);
    let image_ids: Vec<NodeId> = sample
        .images
        .iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let logits = full_logits_on_tape(
        &mut tape,
        &bp,
        cfg,
        &sample.layout,
        sample.target.ids(),
        &image_ids,
    )?;
    let m = sample.target.ids().len();
    let total = tape.value(logits).shape()[0];
    let rows = tape.slice(logits, 0, total - m - 1, m)?;
    let ce = tape.cross_entropy(rows, sample.target.ids())?;
    let loss = tape.mean(ce)?;
    let loss_value = tape.value(loss).item()?;
    let mut record = tape.backward(loss)?;
    let grads = names
        .iter()
        .map(|n| {
            record
                .take(bp.id(n))
                .unwrap_or_else(|| Tensor::zeros(params.get(n).shape()))
        })
        .collect();
    Ok((loss_value, grads))
}

#[cfg(feature = "std")]
fn batch_gradients(
    params: &ModelParams,
    names: &[String],
    samples: &[TrainSample],
    workers: usize,
) -> Vec<Result<(f64, Vec<Tensor>), ModelError>> {
    crate::parallel::parallel_map(samples, workers, |_, s| sample_gradients(params, names, s))
}

#[cfg(not(feature = "std"))]
fn batch_gradients(
    params: &ModelParams,
    names: &[String],
    samples: &[TrainSample],
    _workers: usize,
) -> Vec<Result<(f64, Vec<Tensor>), ModelError>> {
    samples
        .iter()
        .map(|s| sample_gradients(params, names, s))
        .collect()
}

/// Cosine decay from the base rate to a tenth of it.
fn schedule(base: f64, step: usize, total: usize) -> f64 {
    let progress = if total <= 1 {
        0.0
    } else {
        step as f64 / (total - 1) as f64
    };
    base * (0.1 + 0.45 * (1.0 + libm::cos(core::f64::consts::PI * progress)))
}

/// Trains the captioner. Fixed seed gives bit-identical parameters; the loss
/// going non-finite aborts with a diagnostic instead of continuing.
pub fn train(
    records: &[&DatasetRecord],
    vocab: &Vocabulary,
    config: ModelConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if records.is_empty() {
        return Err(ModelError::Data(crate::data::DataError::EmptyDataset));
    }
    if tc.epochs == 0 || tc.batch_size == 0 {
        return Err(ModelError::ConfigInvalid {
            msg: String::from("epochs and batch_size must be positive"),
        });
    }
    let mut params = ModelParams::init(config, math::derive_seed(tc.seed, 0x494e, 0))?;
    let names = parameter_names(&params);
    let sizes: Vec<usize> = names.iter().map(|n| params.get(n).numel()).collect();

    let mut adam_m: Vec<Vec<f64>> = sizes.iter().map(|&s| alloc::vec![0.0; s]).collect();
    let mut adam_v: Vec<Vec<f64>> = sizes.iter().map(|&s| alloc::vec![0.0; s]).collect();
    let mut step = 0usize;
    let steps_per_epoch = records.len().div_ceil(tc.batch_size);
    let total_steps = steps_per_epoch * tc.epochs;

    let mut loss_curve = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(math::derive_seed(tc.seed, 0x4550, epoch as u64));
        let samples = epoch_samples(records, vocab, tc, &mut rng)?;
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in samples.chunks(tc.batch_size) {
            let results = batch_gradients(&params, &names, batch, tc.workers);
            let mut batch_loss = 0.0;
            let mut sum: Vec<Vec<f64>> = sizes.iter().map(|&s| alloc::vec![0.0; s]).collect();
            for result in results {
                let (loss, grads) = result?;
                batch_loss += loss;
                for (acc, g) in sum.iter_mut().zip(&grads) {
                    for (a, &v) in acc.iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(ModelError::Diverged { epoch, step });
            }
            let inv = 1.0 / batch.len() as f64;
            for g in sum.iter_mut() {
                for v in g.iter_mut() {
                    *v *= inv;
                }
            }
            if tc.grad_clip > 0.0 {
                let norm_sq: f64 = sum
                    .iter()
                    .map(|g| g.iter().map(|v| v * v).sum::<f64>())
                    .sum();
                let norm = math::sqrt(norm_sq);
                if norm > tc.grad_clip {
                    let scale = tc.grad_clip / norm;
                    for g in sum.iter_mut() {
                        for v in g.iter_mut() {
                            *v *= scale;
                        }
                    }
                }
            }

            step += 1;
            let lr = schedule(tc.learning_rate, step - 1, total_steps);
            let bias1 = 1.0 - math::powi(tc.beta1, step as i32);
            let bias2 = 1.0 - math::powi(tc.beta2, step as i32);
            for ((name, g), (m, v)) in names
                .iter()
                .zip(&sum)
                .zip(adam_m.iter_mut().zip(adam_v.iter_mut()))
            {
                let p = params.get_mut(name);
                for i in 0..g.len() {
                    m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * g[i];
                    v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * g[i] * g[i];
                    let mhat = m[i] / bias1;
                    let vhat = v[i] / bias2;
                    p.data_mut()[i] -= lr * mhat / (math::sqrt(vhat) + tc.adam_eps);
                }
            }
            epoch_loss += batch_loss;
            epoch_batches += 1;
        }
        loss_curve.push(epoch_loss / epoch_batches as f64);
    }
    Ok(TrainOutcome { params, loss_curve })
}
