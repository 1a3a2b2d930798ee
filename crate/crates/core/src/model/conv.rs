//! 'Same'-padded 1-D convolution over positions, ReLU, and non-overlapping max-pooling.

use crate::numerics::{axpy, dot, Tensor};

use super::AttentionMask;

#[derive(Debug, Clone)]
pub struct ConvCache {
    /// Pre-activations for the first `active` positions, `active x filters`.
    pub pre: Vec<f64>,
    /// Winning input position per (pooled position, filter), `valid x filters`.
    pub argmax: Vec<usize>,
    pub active: usize,
}

#[derive(Debug, Clone)]
pub struct ConvOutput {
    /// `T x filters`; rows past the mask's valid prefix are zero.
    pub pooled: Tensor,
    pub mask: AttentionMask,
    pub cache: ConvCache,
}

pub fn pooled_len(input_len: usize, pool: usize) -> usize {
    input_len.div_ceil(pool)
}

/// Input rows `[lo, hi)` read by the kernel centred on `t`, plus the first kernel tap used.
fn window(t: usize, kernel: usize, len: usize) -> (usize, usize, usize) {
    let half = kernel / 2;
    let lo = t.saturating_sub(half);
    let hi = (t + half + 1).min(len);
    (lo, hi, lo + half - t)
}

/// Positions past the mask's valid prefix never reach the pooled output: their conv
/// outputs are not computed and pooling windows only compare unmasked positions.
pub fn conv_relu_maxpool(
    embedded: &Tensor,
    mask: &AttentionMask,
    weight: &Tensor,
    bias: &Tensor,
    pool: usize,
) -> ConvOutput {
    let len = embedded.shape()[0];
    let d = embedded.shape()[1];
    let filters = weight.shape()[0];
    let kernel = weight.shape()[1];
    let active = mask.valid_len();
    let x = embedded.data();
    let w = weight.data();

    let mut pre = vec![0.0; active * filters];
    for t in 0..active {
        let (lo, hi, tap) = window(t, kernel, len);
        let xs = &x[lo * d..hi * d];
        for f in 0..filters {
            let wf = &w[(f * kernel + tap) * d..(f * kernel + tap + hi - lo) * d];
            pre[t * filters + f] = bias.data()[f] + dot(wf, xs);
        }
    }

    let total = pooled_len(len, pool);
    let valid = pooled_len(active, pool);
    let mut pooled = Tensor::zeros(&[total, filters]);
    let mut argmax = vec![0usize; valid * filters];
    for j in 0..valid {
        let start = j * pool;
        let end = (start + pool).min(active);
        for f in 0..filters {
            let mut best = start;
            for t in start + 1..end {
                if pre[t * filters + f] > pre[best * filters + f] {
                    best = t;
                }
            }
            argmax[j * filters + f] = best;
            pooled.data_mut()[j * filters + f] = pre[best * filters + f].max(0.0);
        }
    }
    let pooled_mask = AttentionMask::new((0..total).map(|j| j < valid).collect());
    ConvOutput {
        pooled,
        mask: pooled_mask,
        cache: ConvCache {
            pre,
            argmax,
            active,
        },
    }
}

/// Returns `(d_weight, d_bias, d_embedded)` for `d_pooled` over the valid rows.
pub fn conv_backward(
    embedded: &Tensor,
    weight: &Tensor,
    cache: &ConvCache,
    d_pooled: &[f64],
) -> (Tensor, Tensor, Tensor) {
    let len = embedded.shape()[0];
    let d = embedded.shape()[1];
    let filters = weight.shape()[0];
    let kernel = weight.shape()[1];
    let x = embedded.data();
    let w = weight.data();
    let mut d_weight = weight.zeros_like();
    let mut d_bias = Tensor::zeros(&[filters]);
    let mut d_embedded = embedded.zeros_like();
    let valid = cache.argmax.len() / filters;
    for j in 0..valid {
        for f in 0..filters {
            let g = d_pooled[j * filters + f];
            let t = cache.argmax[j * filters + f];
            if g == 0.0 || cache.pre[t * filters + f] <= 0.0 {
                continue;
            }
            let (lo, hi, tap) = window(t, kernel, len);
            let span = (f * kernel + tap) * d..(f * kernel + tap + hi - lo) * d;
            d_bias.data_mut()[f] += g;
            axpy(g, &x[lo * d..hi * d], &mut d_weight.data_mut()[span.clone()]);
            axpy(g, &w[span], &mut d_embedded.data_mut()[lo * d..hi * d]);
        }
    }
    (d_weight, d_bias, d_embedded)
}
