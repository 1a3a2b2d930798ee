//! Prompt-augmented embeddings -> Conv1D + ReLU + max-pool -> BiLSTM -> attention
//! pooling -> layer norm -> dropout -> linear classifier, with exact gradients.

pub mod attention;
pub mod conv;
pub mod embed;
pub mod head;
pub mod lstm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{layer_norm_backward, layer_norm_forward, LayerNormCache, ParamSet, Rng, Tensor};
use crate::textpipe::{EncodedExample, DEFAULT_SEQ_LEN};

pub use attention::{attention_pool, mean_pool};
pub use conv::conv_relu_maxpool;
pub use embed::embed_with_prompt;
pub use lstm::{bilstm, BiLstmCache, LstmParams};

pub const N_CLASSES: usize = 3;

/// How the BiLSTM outputs are reduced to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pooling {
    Attention,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub prompt_len: usize,
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub lstm_hidden: usize,
    pub n_classes: usize,
    pub keep_prob: f64,
    pub lstm_input_dropout: f64,
    pub seq_len: usize,
    pub pooling: Pooling,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_emb: 300,
            prompt_len: 10,
            conv_filters: 128,
            kernel_size: 3,
            pool_size: 2,
            lstm_hidden: 256,
            n_classes: N_CLASSES,
            keep_prob: 0.7,
            lstm_input_dropout: 0.2,
            seq_len: DEFAULT_SEQ_LEN,
            pooling: Pooling::Attention,
            norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_emb", self.d_emb),
            ("conv_filters", self.conv_filters),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("lstm_hidden", self.lstm_hidden),
            ("n_classes", self.n_classes),
            ("seq_len", self.seq_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "keep_prob must lie in (0, 1], got {}",
                self.keep_prob
            )));
        }
        if !(0.0..1.0).contains(&self.lstm_input_dropout) {
            return Err(Error::InvalidArgument(format!(
                "lstm_input_dropout must lie in [0, 1), got {}",
                self.lstm_input_dropout
            )));
        }
        if !(self.norm_eps > 0.0) {
            return Err(Error::InvalidArgument("norm_eps must be > 0".into()));
        }
        Ok(())
    }

    /// Rows of `E'`.
    pub fn input_len(&self) -> usize {
        self.prompt_len + self.seq_len
    }

    /// `T = ceil((m + seq_len) / s)`.
    pub fn pooled_len(&self) -> usize {
        conv::pooled_len(self.input_len(), self.pool_size)
    }

    pub fn context_width(&self) -> usize {
        2 * self.lstm_hidden
    }
}

/// Per-position validity flags. Always a prefix of `true` followed by `false`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask(Vec<bool>);

impl AttentionMask {
    pub fn new(flags: Vec<bool>) -> Self {
        AttentionMask(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Length of the leading run of `true`.
    pub fn valid_len(&self) -> usize {
        self.0.iter().take_while(|&&b| b).count()
    }
}

/// Everything except the embedding table (which gets sparse gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    /// `m x d_emb`; absent when the prompt length is 0.
    pub prompt: Option<Tensor>,
    /// `filters x kernel x d_emb`
    pub conv_weight: Tensor,
    pub conv_bias: Tensor,
    pub lstm_forward: LstmParams,
    pub lstm_backward: LstmParams,
    /// `2H`
    pub attention: Tensor,
    pub norm_gamma: Tensor,
    pub norm_beta: Tensor,
    /// `classes x 2H`
    pub classifier_weight: Tensor,
    pub classifier_bias: Tensor,
}

impl NetParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let width = config.context_width();
        NetParams {
            prompt: (config.prompt_len > 0).then(|| Tensor::zeros(&[config.prompt_len, config.d_emb])),
            conv_weight: Tensor::zeros(&[config.conv_filters, config.kernel_size, config.d_emb]),
            conv_bias: Tensor::zeros(&[config.conv_filters]),
            lstm_forward: LstmParams::zeros(config.conv_filters, config.lstm_hidden),
            lstm_backward: LstmParams::zeros(config.conv_filters, config.lstm_hidden),
            attention: Tensor::zeros(&[width]),
            norm_gamma: Tensor::zeros(&[width]),
            norm_beta: Tensor::zeros(&[width]),
            classifier_weight: Tensor::zeros(&[config.n_classes, width]),
            classifier_bias: Tensor::zeros(&[config.n_classes]),
        }
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = Vec::with_capacity(14);
        if let Some(p) = &self.prompt {
            out.push(("prompt", p));
        }
        out.extend([
            ("conv.weight", &self.conv_weight),
            ("conv.bias", &self.conv_bias),
            ("lstm.forward.w_input", &self.lstm_forward.w_input),
            ("lstm.forward.w_recurrent", &self.lstm_forward.w_recurrent),
            ("lstm.forward.bias", &self.lstm_forward.bias),
            ("lstm.backward.w_input", &self.lstm_backward.w_input),
            ("lstm.backward.w_recurrent", &self.lstm_backward.w_recurrent),
            ("lstm.backward.bias", &self.lstm_backward.bias),
            ("attention.w", &self.attention),
            ("norm.gamma", &self.norm_gamma),
            ("norm.beta", &self.norm_beta),
            ("classifier.weight", &self.classifier_weight),
            ("classifier.bias", &self.classifier_bias),
        ]);
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = Vec::with_capacity(14);
        if let Some(p) = &mut self.prompt {
            out.push(("prompt", p));
        }
        out.extend([
            ("conv.weight", &mut self.conv_weight),
            ("conv.bias", &mut self.conv_bias),
            ("lstm.forward.w_input", &mut self.lstm_forward.w_input),
            ("lstm.forward.w_recurrent", &mut self.lstm_forward.w_recurrent),
            ("lstm.forward.bias", &mut self.lstm_forward.bias),
            ("lstm.backward.w_input", &mut self.lstm_backward.w_input),
            ("lstm.backward.w_recurrent", &mut self.lstm_backward.w_recurrent),
            ("lstm.backward.bias", &mut self.lstm_backward.bias),
            ("attention.w", &mut self.attention),
            ("norm.gamma", &mut self.norm_gamma),
            ("norm.beta", &mut self.norm_beta),
            ("classifier.weight", &mut self.classifier_weight),
            ("classifier.bias", &mut self.classifier_bias),
        ]);
        out
    }

    pub fn add_assign(&mut self, other: &NetParams) {
        for ((_, a), (_, b)) in self.named_tensors_mut().into_iter().zip(other.named_tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.named_tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.named_tensors().iter().map(|(_, t)| t.sum_squares()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `vocab x d_emb`; row 0 (PAD) is zero and frozen.
    pub embedding: Tensor,
    pub net: NetParams,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        ModelParams {
            embedding: Tensor::zeros(&[vocab_size, config.d_emb]),
            net: NetParams::zeros(config),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn d_emb(&self) -> usize {
        self.embedding.shape()[1]
    }

    pub fn prompt_len(&self) -> usize {
        self.net.prompt.as_ref().map_or(0, |p| p.shape()[0])
    }

    /// Canonical order: embedding first, then [`NetParams::named_tensors`].
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![("embedding", &self.embedding)];
        out.extend(self.net.named_tensors());
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = vec![("embedding", &mut self.embedding)];
        out.extend(self.net.named_tensors_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Checks that every array matches the shapes implied by `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = ModelParams::zeros(config, self.vocab_size());
        let got = self.named_tensors();
        let want = expected.named_tensors();
        if got.len() != want.len() {
            return Err(Error::InvalidState(format!(
                "parameter set has {} arrays, config implies {}",
                got.len(),
                want.len()
            )));
        }
        for ((name, a), (_, b)) in got.iter().zip(&want) {
            if a.shape() != b.shape() {
                return Err(Error::InvalidState(format!(
                    "{name}: shape {:?}, config implies {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

impl ParamSet for ModelParams {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        self.named_tensors()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.data()))
            .collect()
    }

    fn named_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.named_tensors_mut()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.data_mut()))
            .collect()
    }

    fn is_frozen(&self, name: &str, index: usize) -> bool {
        name == "embedding" && index < self.d_emb()
    }
}

/// Gradients: sparse over embedding rows, dense elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding_rows: BTreeMap<u32, Vec<f64>>,
    pub net: NetParams,
}

impl Gradients {
    pub fn zeros(config: &ModelConfig) -> Self {
        Gradients {
            embedding_rows: BTreeMap::new(),
            net: NetParams::zeros(config),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (&id, row) in &other.embedding_rows {
            match self.embedding_rows.get_mut(&id) {
                Some(dst) => crate::numerics::axpy(1.0, row, dst),
                None => {
                    self.embedding_rows.insert(id, row.clone());
                }
            }
        }
        self.net.add_assign(&other.net);
    }

    pub fn scale(&mut self, factor: f64) {
        for row in self.embedding_rows.values_mut() {
            row.iter_mut().for_each(|v| *v *= factor);
        }
        self.net.scale(factor);
    }

    pub fn sum_squares(&self) -> f64 {
        let rows: f64 = self
            .embedding_rows
            .values()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum();
        rows + self.net.sum_squares()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding_rows
            .values()
            .all(|r| r.iter().all(|v| v.is_finite()))
            && self.net.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Dense view shaped like [`ModelParams`].
    pub fn to_dense(&self, vocab_size: usize) -> ModelParams {
        let d_emb = self.net.conv_weight.shape()[2];
        let mut embedding = Tensor::zeros(&[vocab_size, d_emb]);
        for (&id, row) in &self.embedding_rows {
            embedding.row_mut(id as usize).copy_from_slice(row);
        }
        ModelParams {
            embedding,
            net: self.net.clone(),
        }
    }
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(shape, -limit, limit, rng)
}

/// Row-orthonormal `n x n` block from a Gaussian matrix (modified Gram-Schmidt).
fn orthogonal_block(n: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
        let mut degenerate = false;
        for i in 0..n {
            for j in 0..i {
                let proj: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                for k in 0..n {
                    m[i * n + k] -= proj * m[j * n + k];
                }
            }
            let norm: f64 = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-10 {
                degenerate = true;
                break;
            }
            for k in 0..n {
                m[i * n + k] /= norm;
            }
        }
        if !degenerate {
            return m;
        }
    }
}

fn init_lstm(input: usize, hidden: usize, rng: &mut Rng) -> LstmParams {
    let mut p = LstmParams::zeros(input, hidden);
    p.w_input = glorot(&[4 * hidden, input], input, 4 * hidden, rng);
    for gate in 0..4 {
        let block = orthogonal_block(hidden, rng);
        p.w_recurrent.data_mut()[gate * hidden * hidden..(gate + 1) * hidden * hidden]
            .copy_from_slice(&block);
    }
    p.bias.data_mut()[hidden..2 * hidden].fill(1.0);
    p
}

pub fn init_params(config: &ModelConfig, vocab_size: usize, rng: &mut Rng) -> Result<ModelParams> {
    config.validate()?;
    if vocab_size < 3 {
        return Err(Error::InvalidArgument(format!(
            "vocab_size must be >= 3, got {vocab_size}"
        )));
    }
    let d = config.d_emb;
    let width = config.context_width();
    let mut embedding = Tensor::uniform(&[vocab_size, d], -0.05, 0.05, rng);
    embedding.row_mut(0).fill(0.0);
    let prompt = (config.prompt_len > 0)
        .then(|| Tensor::uniform(&[config.prompt_len, d], -0.05, 0.05, rng));
    let k = config.kernel_size;
    let conv_weight = glorot(
        &[config.conv_filters, k, d],
        k * d,
        k * config.conv_filters,
        rng,
    );
    let lstm_forward = init_lstm(config.conv_filters, config.lstm_hidden, rng);
    let lstm_backward = init_lstm(config.conv_filters, config.lstm_hidden, rng);
    let attention = glorot(&[width], width, 1, rng);
    let classifier_weight = glorot(&[config.n_classes, width], width, config.n_classes, rng);
    let mut norm_gamma = Tensor::zeros(&[width]);
    norm_gamma.fill(1.0);
    Ok(ModelParams {
        embedding,
        net: NetParams {
            prompt,
            conv_weight,
            conv_bias: Tensor::zeros(&[config.conv_filters]),
            lstm_forward,
            lstm_backward,
            attention,
            norm_gamma,
            norm_beta: Tensor::zeros(&[width]),
            classifier_weight,
            classifier_bias: Tensor::zeros(&[config.n_classes]),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Activations retained for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub mode: Mode,
    pub ids: Vec<u32>,
    /// `E'`, `(m + seq_len) x d_emb`.
    pub embedded: Tensor,
    pub input_mask: AttentionMask,
    pub conv: conv::ConvCache,
    /// `H`, `T x filters`.
    pub pooled: Tensor,
    pub pooled_mask: AttentionMask,
    /// BiLSTM input over the valid prefix after input dropout, `valid x filters`.
    pub lstm_input: Vec<f64>,
    pub lstm_dropout: Option<Vec<f64>>,
    pub bilstm: BiLstmCache,
    /// Concatenated states, `T x 2H`, zero on masked rows.
    pub hidden: Tensor,
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
    pub norm: LayerNormCache,
    pub normalized: Vec<f64>,
    pub dropout: Option<Vec<f64>>,
    /// Classifier input (post-dropout).
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
}

/// In train mode draws, in order: BiLSTM input dropout over `valid x filters`, then
/// the post-norm dropout over `2H`. Eval mode draws nothing.
pub fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    example: &EncodedExample,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Vec<f64>, ForwardCache)> {
    if example.ids.len() != config.seq_len {
        return Err(Error::InvalidArgument(format!(
            "example has {} ids, config expects {}",
            example.ids.len(),
            config.seq_len
        )));
    }
    if params.prompt_len() != config.prompt_len || params.d_emb() != config.d_emb {
        return Err(Error::InvalidState(
            "parameters were built for a different config".into(),
        ));
    }
    let net = &params.net;
    let (embedded, input_mask) = embed_with_prompt(params, example)?;
    let conv_out = conv_relu_maxpool(
        &embedded,
        &input_mask,
        &net.conv_weight,
        &net.conv_bias,
        config.pool_size,
    );
    let filters = config.conv_filters;
    let width = config.context_width();
    let valid = conv_out.mask.valid_len();

    let mut lstm_input = conv_out.pooled.data()[..valid * filters].to_vec();
    let lstm_dropout = (mode == Mode::Train && config.lstm_input_dropout > 0.0).then(|| {
        head::dropout_mask(valid * filters, 1.0 - config.lstm_input_dropout, rng)
    });
    if let Some(mask) = &lstm_dropout {
        lstm_input.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }

    let (states, bilstm_cache) = bilstm(&net.lstm_forward, &net.lstm_backward, &lstm_input, valid);
    let mut hidden = Tensor::zeros(&[conv_out.mask.len(), width]);
    hidden.data_mut()[..valid * width].copy_from_slice(&states);

    let (context, alpha) = match config.pooling {
        Pooling::Attention => attention_pool(hidden.data(), net.attention.data(), &conv_out.mask)?,
        Pooling::Mean => mean_pool(hidden.data(), width, &conv_out.mask)?,
    };
    let (normalized, norm) = layer_norm_forward(
        &context,
        net.norm_gamma.data(),
        net.norm_beta.data(),
        config.norm_eps,
    )?;
    let dropout = (mode == Mode::Train && config.keep_prob < 1.0)
        .then(|| head::dropout_mask(width, config.keep_prob, rng));
    let features: Vec<f64> = match &dropout {
        Some(mask) => normalized.iter().zip(mask).map(|(v, m)| v * m).collect(),
        None => normalized.clone(),
    };
    let logits = head::classifier_forward(&net.classifier_weight, &net.classifier_bias, &features);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite logits".into()));
    }
    let cache = ForwardCache {
        mode,
        ids: example.ids.clone(),
        embedded,
        input_mask,
        conv: conv_out.cache,
        pooled: conv_out.pooled,
        pooled_mask: conv_out.mask,
        lstm_input,
        lstm_dropout,
        bilstm: bilstm_cache,
        hidden,
        alpha,
        context,
        norm,
        normalized,
        dropout,
        features,
        logits: logits.clone(),
    };
    Ok((logits, cache))
}

/// Eval-mode logits without keeping the cache.
pub fn predict_logits(
    params: &ModelParams,
    config: &ModelConfig,
    example: &EncodedExample,
) -> Result<Vec<f64>> {
    let mut rng = Rng::new(0);
    forward(params, config, example, Mode::Eval, &mut rng).map(|(logits, _)| logits)
}

pub fn backward(
    cache: &ForwardCache,
    params: &ModelParams,
    config: &ModelConfig,
    d_logits: &[f64],
) -> Result<Gradients> {
    let width = config.context_width();
    let filters = config.conv_filters;
    let valid = cache.pooled_mask.valid_len();
    let consistent = d_logits.len() == config.n_classes
        && cache.logits.len() == config.n_classes
        && cache.embedded.shape() == [config.input_len(), config.d_emb]
        && cache.pooled.shape() == [config.pooled_len(), filters]
        && cache.hidden.shape() == [config.pooled_len(), width]
        && cache.lstm_input.len() == valid * filters
        && cache.alpha.len() == config.pooled_len()
        && params.prompt_len() == config.prompt_len;
    if !consistent {
        return Err(Error::InvalidState(
            "forward cache does not match the model config".into(),
        ));
    }
    let net = &params.net;
    let mut grads = Gradients::zeros(config);
    let g = &mut grads.net;

    let d_features = head::classifier_backward(
        &net.classifier_weight,
        &cache.features,
        d_logits,
        &mut g.classifier_weight,
        &mut g.classifier_bias,
    );
    let d_normalized: Vec<f64> = match &cache.dropout {
        Some(mask) => d_features.iter().zip(mask).map(|(d, m)| d * m).collect(),
        None => d_features,
    };
    let (d_context, d_gamma, d_beta) =
        layer_norm_backward(&cache.norm, net.norm_gamma.data(), &d_normalized);
    g.norm_gamma.data_mut().copy_from_slice(&d_gamma);
    g.norm_beta.data_mut().copy_from_slice(&d_beta);

    let d_hidden = match config.pooling {
        Pooling::Attention => {
            let (d_w, d_hidden) = attention::attention_backward(
                cache.hidden.data(),
                net.attention.data(),
                &cache.alpha,
                &d_context,
            );
            g.attention.data_mut().copy_from_slice(&d_w);
            d_hidden
        }
        Pooling::Mean => attention::mean_pool_backward(width, &cache.alpha, &d_context),
    };

    let mut d_lstm_input = lstm::bilstm_backward(
        &net.lstm_forward,
        &net.lstm_backward,
        &cache.bilstm,
        &cache.lstm_input,
        &d_hidden[..valid * width],
        &mut g.lstm_forward,
        &mut g.lstm_backward,
    );
    if let Some(mask) = &cache.lstm_dropout {
        d_lstm_input.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }

    let (d_conv_w, d_conv_b, d_embedded) = conv::conv_backward(
        &cache.embedded,
        &net.conv_weight,
        &cache.conv,
        &d_lstm_input,
    );
    g.conv_weight = d_conv_w;
    g.conv_bias = d_conv_b;

    let (d_prompt, rows) =
        embed::embed_backward(d_embedded.data(), &cache.ids, config.prompt_len, config.d_emb);
    if let (Some(dst), Some(src)) = (g.prompt.as_mut(), d_prompt) {
        dst.data_mut().copy_from_slice(&src);
    }
    grads.embedding_rows = rows;
    Ok(grads)
}

/// Model-side ablations. Removing augmentation is a training switch, not a model change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    Full,
    NoPrompt,
    NoAttention,
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelVariant::Full),
            "no_prompt" => Ok(ModelVariant::NoPrompt),
            "no_attention" => Ok(ModelVariant::NoAttention),
            other => Err(Error::InvalidArgument(format!("unknown model variant {other:?}"))),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Full => "full",
            ModelVariant::NoPrompt => "no_prompt",
            ModelVariant::NoAttention => "no_attention",
        })
    }
}

pub fn ablation_variant(config: &ModelConfig, variant: ModelVariant) -> ModelConfig {
    let mut out = config.clone();
    match variant {
        ModelVariant::Full => {}
        ModelVariant::NoPrompt => out.prompt_len = 0,
        ModelVariant::NoAttention => out.pooling = Pooling::Mean,
    }
    out
}

#[cfg(test)]
mod tests;
