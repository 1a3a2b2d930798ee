use crate::numerics::{axpy, dot, Rng, Tensor};

/// `logits = W x + b` with `W` of shape `classes x width`.
pub fn classifier_forward(weight: &Tensor, bias: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..weight.shape()[0])
        .map(|c| bias.data()[c] + dot(weight.row(c), x))
        .collect()
}

/// Accumulates into `d_weight`/`d_bias`, returns `dx`.
pub fn classifier_backward(
    weight: &Tensor,
    x: &[f64],
    d_logits: &[f64],
    d_weight: &mut Tensor,
    d_bias: &mut Tensor,
) -> Vec<f64> {
    let mut dx = vec![0.0; x.len()];
    for (c, &g) in d_logits.iter().enumerate() {
        d_bias.data_mut()[c] += g;
        axpy(g, x, d_weight.row_mut(c));
        axpy(g, weight.row(c), &mut dx);
    }
    dx
}

/// Inverted-dropout scale factors: `1/keep` with probability `keep`, else 0.
pub fn dropout_mask(len: usize, keep: f64, rng: &mut Rng) -> Vec<f64> {
    (0..len)
        .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
        .collect()
}
