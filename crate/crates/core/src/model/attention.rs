use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, softmax};

use super::AttentionMask;

/// `u_t = w . h_t` over unmasked rows, `alpha = softmax(u)` (exactly 0 where masked),
/// `c = sum_t alpha_t h_t`. `hidden` is `T x W` with `T = mask.len()`.
pub fn attention_pool(
    hidden: &[f64],
    w: &[f64],
    mask: &AttentionMask,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let width = w.len();
    let live: Vec<usize> = mask.positions().collect();
    if live.is_empty() {
        return Err(Error::InvalidArgument("attention over a fully masked sequence".into()));
    }
    let scores: Vec<f64> = live
        .iter()
        .map(|&t| dot(w, &hidden[t * width..(t + 1) * width]))
        .collect();
    let weights = softmax(&scores)?;
    let mut alpha = vec![0.0; mask.len()];
    let mut context = vec![0.0; width];
    for (&t, &a) in live.iter().zip(&weights) {
        alpha[t] = a;
        axpy(a, &hidden[t * width..(t + 1) * width], &mut context);
    }
    Ok((context, alpha))
}

/// Uniform weights over unmasked rows (the attention-free ablation).
pub fn mean_pool(hidden: &[f64], width: usize, mask: &AttentionMask) -> Result<(Vec<f64>, Vec<f64>)> {
    let live: Vec<usize> = mask.positions().collect();
    if live.is_empty() {
        return Err(Error::InvalidArgument("mean pooling over a fully masked sequence".into()));
    }
    let a = 1.0 / live.len() as f64;
    let mut alpha = vec![0.0; mask.len()];
    let mut context = vec![0.0; width];
    for &t in &live {
        alpha[t] = a;
        axpy(a, &hidden[t * width..(t + 1) * width], &mut context);
    }
    Ok((context, alpha))
}

/// Returns `(d_w, d_hidden)`.
pub fn attention_backward(
    hidden: &[f64],
    w: &[f64],
    alpha: &[f64],
    d_context: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let width = w.len();
    let mut d_hidden = vec![0.0; hidden.len()];
    let d_alpha: Vec<f64> = (0..alpha.len())
        .map(|t| dot(d_context, &hidden[t * width..(t + 1) * width]))
        .collect();
    let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    let mut d_w = vec![0.0; width];
    for (t, &a) in alpha.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let du = a * (d_alpha[t] - weighted);
        let row = &hidden[t * width..(t + 1) * width];
        axpy(du, row, &mut d_w);
        let d_row = &mut d_hidden[t * width..(t + 1) * width];
        axpy(a, d_context, d_row);
        axpy(du, w, d_row);
    }
    (d_w, d_hidden)
}

pub fn mean_pool_backward(width: usize, alpha: &[f64], d_context: &[f64]) -> Vec<f64> {
    let mut d_hidden = vec![0.0; alpha.len() * width];
    for (t, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            axpy(a, d_context, &mut d_hidden[t * width..(t + 1) * width]);
        }
    }
    d_hidden
}
