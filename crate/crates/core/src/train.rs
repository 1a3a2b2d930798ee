use std::fmt;

use rayon::prelude::*;

use crate::augment::{augment_with_stats, AugmentStats, SynonymLexicon};
use crate::error::{Error, Result};
use crate::model::{backward, forward, predict_logits, Gradients, Mode, ModelConfig, ModelParams};
use crate::numerics::{log_softmax, Rng, Tensor};
use crate::textpipe::{encode, EncodedExample, Label, Vocabulary, PAD_ID};

// Stream tags for `Rng::derive`.
const SHUFFLE_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

/// Examples per work unit inside a batch. Fixed so the reduction order (and thus
/// every bit of the result) does not depend on the number of worker threads.
const REDUCTION_GROUP: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub augment_p: f64,
    /// `false` is the no-augmentation ablation.
    pub augmentation: bool,
    pub seeds: Vec<u64>,
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 3,
            lr_init: 5e-4,
            lr_min: 1e-5,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            augment_p: 0.1,
            augmentation: true,
            seeds: vec![0, 1, 2],
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_init && self.lr_init.is_finite()) {
            return fail(format!(
                "need 0 <= lr_min <= lr_init, got lr_min={} lr_init={}",
                self.lr_min, self.lr_init
            ));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return fail(format!("clip_norm must be > 0, got {}", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) || !(self.weight_decay >= 0.0) {
            return fail("adam_eps must be > 0 and weight_decay >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.augment_p) {
            return fail(format!("augment_p must lie in [0, 1], got {}", self.augment_p));
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        Ok(())
    }
}

/// AdamW moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl OptState {
    pub fn new(params: &ModelParams) -> Self {
        let mut m = params.clone();
        for (_, t) in m.named_tensors_mut() {
            t.fill(0.0);
        }
        OptState {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "class weights need at least one labelled example".into(),
        ));
    }
    let c = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|&n| total as f64 / (c * n.max(1) as f64))
        .collect())
}

/// Returns `(loss, dlogits)` for one example.
pub fn weighted_ce(logits: &[f64], label: usize, weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() || label >= weights.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let log_p = log_softmax(logits)?;
    let w = weights[label];
    let dlogits = log_p
        .iter()
        .enumerate()
        .map(|(c, lp)| w * (lp.exp() - if c == label { 1.0 } else { 0.0 }))
        .collect();
    Ok((-w * log_p[label], dlogits))
}

pub fn cosine_lr(step: u64, total_steps: u64, lr_init: f64, lr_min: f64) -> f64 {
    if step == 0 {
        return lr_init;
    }
    if total_steps == 0 || step >= total_steps {
        return lr_min;
    }
    let progress = step as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_init - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Clips a list of flat gradient buffers jointly; returns the pre-clip norm.
pub fn clip_slices(grads: &mut [&mut [f64]], clip_norm: f64) -> Result<f64> {
    if !(clip_norm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "clip_norm must be > 0, got {clip_norm}"
        )));
    }
    let sum: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
    let norm = sum.sqrt();
    if !norm.is_finite() {
        return Err(Error::NumericalFailure("non-finite gradient norm".into()));
    }
    if norm > clip_norm {
        let scale = clip_norm / norm;
        grads
            .iter_mut()
            .for_each(|g| g.iter_mut().for_each(|v| *v *= scale));
    }
    Ok(norm)
}

pub fn clip_global_norm(grads: &mut Gradients, clip_norm: f64) -> Result<f64> {
    let mut slices: Vec<&mut [f64]> = grads
        .embedding_rows
        .values_mut()
        .map(|r| r.as_mut_slice())
        .collect();
    slices.extend(grads.net.named_tensors_mut().into_iter().map(|(_, t)| t.data_mut()));
    clip_slices(&mut slices, clip_norm)
}

/// Element-wise AdamW update; `step` is the 1-based step being taken.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    theta: &mut [f64],
    grad: Option<&[f64]>,
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    step: u64,
    config: &TrainConfig,
) {
    let (b1, b2) = (config.beta1, config.beta2);
    let bias1 = 1.0 - b1.powi(step as i32);
    let bias2 = 1.0 - b2.powi(step as i32);
    for i in 0..theta.len() {
        let g = grad.map_or(0.0, |g| g[i]);
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + config.adam_eps) + lr * config.weight_decay * theta[i];
    }
}

/// One decoupled-decay Adam step over every parameter. Embedding rows without a
/// gradient still see decay and moment updates; the PAD row is never touched.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptState,
    lr: f64,
    config: &TrainConfig,
) {
    state.step += 1;
    let t = state.step;
    for id in 0..params.vocab_size() {
        if id == PAD_ID as usize {
            continue;
        }
        adamw_update(
            params.embedding.row_mut(id),
            grads.embedding_rows.get(&(id as u32)).map(|r| r.as_slice()),
            state.m.embedding.row_mut(id),
            state.v.embedding.row_mut(id),
            lr,
            t,
            config,
        );
    }
    let theta = params.net.named_tensors_mut();
    let g = grads.net.named_tensors();
    let m = state.m.net.named_tensors_mut();
    let v = state.v.net.named_tensors_mut();
    for (((theta, g), m), v) in theta.into_iter().zip(g).zip(m).zip(v) {
        adamw_update(
            theta.1.data_mut(),
            Some(g.1.data()),
            m.1.data_mut(),
            v.1.data_mut(),
            lr,
            t,
            config,
        );
    }
}

/// A tokenized, labelled example; the token form is kept so it can be re-augmented.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub tokens: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub lr_last: f64,
    /// `None` when augmentation is disabled.
    pub augmentation: Option<AugmentStats>,
}

impl fmt::Display for EpochStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={} lr_last={}", self.epoch, self.loss, self.lr_last)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub epochs: Vec<EpochStats>,
    pub steps: u64,
}

pub struct TrainInputs<'a> {
    pub examples: &'a [TrainExample],
    pub vocab: &'a Vocabulary,
    pub lexicon: &'a SynonymLexicon,
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub seed: u64,
}

pub fn label_counts(labels: impl IntoIterator<Item = Label>, n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for label in labels {
        counts[label.id()] += 1;
    }
    counts
}

/// Sum of losses and gradients over a contiguous slice, in index order.
fn group_gradients(
    params: &ModelParams,
    config: &ModelConfig,
    group: &[(EncodedExample, Rng)],
    weights: &[f64],
    batch_len: usize,
) -> Result<(f64, Gradients)> {
    let mut loss = 0.0;
    let mut grads = Gradients::zeros(config);
    for (example, rng) in group {
        let mut rng = rng.clone();
        let (logits, cache) = forward(params, config, example, Mode::Train, &mut rng)?;
        let (l, mut dlogits) = weighted_ce(&logits, example.label.id(), weights)?;
        dlogits.iter_mut().for_each(|d| *d /= batch_len as f64);
        loss += l;
        grads.add_assign(&backward(&cache, params, config, &dlogits)?);
    }
    Ok((loss, grads))
}

/// Per epoch: shuffle, re-augment, then mini-batch AdamW under a per-step cosine
/// schedule. `on_epoch` sees each epoch's statistics as soon as it finishes.
pub fn train_loop(
    mut params: ModelParams,
    inputs: &TrainInputs<'_>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let TrainInputs {
        examples,
        vocab,
        lexicon,
        model,
        train,
        seed,
    } = *inputs;
    model.validate()?;
    train.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    params.check_shapes(model)?;

    let counts = label_counts(examples.iter().map(|e| e.label), model.n_classes);
    let weights = if train.class_weighting {
        class_weights(&counts)?
    } else {
        vec![1.0; model.n_classes]
    };
    let n = examples.len();
    let steps_per_epoch = n.div_ceil(train.batch_size) as u64;
    let total_steps = train.epochs as u64 * steps_per_epoch;
    let mut state = OptState::new(&params);
    let mut epochs = Vec::with_capacity(train.epochs);

    for epoch in 0..train.epochs {
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..n).collect();
        Rng::derive(seed, &[SHUFFLE_STREAM, e]).shuffle(&mut order);

        let mut aug_stats = AugmentStats::default();
        let encoded: Vec<EncodedExample> = order
            .iter()
            .map(|&idx| {
                let ex = &examples[idx];
                if train.augmentation {
                    let mut rng = Rng::derive(seed, &[AUGMENT_STREAM, e, idx as u64]);
                    let (tokens, stats) =
                        augment_with_stats(&ex.tokens, lexicon, train.augment_p, &mut rng);
                    aug_stats.merge(stats);
                    encode(&tokens, vocab, model.seq_len, ex.label)
                } else {
                    encode(&ex.tokens, vocab, model.seq_len, ex.label)
                }
            })
            .collect();

        let mut loss_sum = 0.0;
        let mut lr = train.lr_init;
        for (b, batch) in encoded.chunks(train.batch_size).enumerate() {
            let step_index = state.step;
            let work: Vec<(EncodedExample, Rng)> = batch
                .iter()
                .enumerate()
                .map(|(i, ex)| {
                    let rng = Rng::derive(seed, &[DROPOUT_STREAM, e, b as u64, i as u64]);
                    (ex.clone(), rng)
                })
                .collect();
            let partials: Vec<Result<(f64, Gradients)>> = work
                .par_chunks(REDUCTION_GROUP)
                .map(|group| group_gradients(&params, model, group, &weights, batch.len()))
                .collect();
            let mut grads = Gradients::zeros(model);
            for partial in partials {
                let (l, g) = partial.map_err(|err| at_step(err, step_index))?;
                loss_sum += l;
                grads.add_assign(&g);
            }
            clip_global_norm(&mut grads, train.clip_norm).map_err(|err| at_step(err, step_index))?;
            lr = cosine_lr(step_index, total_steps, train.lr_init, train.lr_min);
            adamw_step(&mut params, &grads, &mut state, lr, train);
            if !params.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "parameters became non-finite at step {step_index}"
                )));
            }
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n as f64,
            lr_last: lr,
            augmentation: train.augmentation.then_some(aug_stats),
        };
        on_epoch(&stats);
        epochs.push(stats);
    }
    Ok(TrainOutcome {
        params,
        epochs,
        steps: state.step,
    })
}

fn at_step(err: Error, step: u64) -> Error {
    match err {
        Error::NumericalFailure(msg) => Error::NumericalFailure(format!("step {step}: {msg}")),
        other => other,
    }
}

/// Lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(
    params: &ModelParams,
    config: &ModelConfig,
    examples: &[EncodedExample],
) -> Result<Vec<usize>> {
    examples
        .par_iter()
        .map(|ex| predict_logits(params, config, ex).map(|l| argmax(&l)))
        .collect()
}

/// Rounds every parameter to the nearest `f32`, the precision checkpoints store.
pub fn round_to_f32(params: &mut ModelParams) {
    for (_, t) in params.named_tensors_mut() {
        round_tensor(t);
    }
}

fn round_tensor(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
}
