use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{axpy, Tensor};
use crate::textpipe::{EncodedExample, PAD_ID};

use super::{AttentionMask, ModelParams};

/// Builds `E' = [P; E]` of shape `((m + seq_len) x d_emb)` and its mask.
///
/// Prompt rows are always unmasked, token rows are unmasked below `true_length`.
/// When nothing would be unmasked (no prompt, empty input) row 0 is kept so the
/// pooled sequence is never empty.
pub fn embed_with_prompt(
    params: &ModelParams,
    example: &EncodedExample,
) -> Result<(Tensor, AttentionMask)> {
    let vocab_size = params.vocab_size();
    let d_emb = params.d_emb();
    if let Some(&bad) = example.ids.iter().find(|&&id| id as usize >= vocab_size) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} out of range for vocabulary of {vocab_size}"
        )));
    }
    if example.true_length > example.ids.len() {
        return Err(Error::InvalidArgument(format!(
            "true_length {} exceeds sequence length {}",
            example.true_length,
            example.ids.len()
        )));
    }
    let m = params.prompt_len();
    let rows = m + example.ids.len();
    let mut embedded = Tensor::zeros(&[rows, d_emb]);
    if let Some(prompt) = &params.net.prompt {
        embedded.data_mut()[..m * d_emb].copy_from_slice(prompt.data());
    }
    for (i, &id) in example.ids.iter().enumerate() {
        if id != PAD_ID {
            embedded
                .row_mut(m + i)
                .copy_from_slice(params.embedding.row(id as usize));
        }
    }
    let mut mask: Vec<bool> = (0..rows).map(|r| r < m + example.true_length).collect();
    if m + example.true_length == 0 {
        mask[0] = true;
    }
    Ok((embedded, AttentionMask::new(mask)))
}

/// Splits `d_embedded` into the prompt gradient and sparse embedding-row gradients.
/// PAD rows never receive gradient.
pub fn embed_backward(
    d_embedded: &[f64],
    ids: &[u32],
    prompt_len: usize,
    d_emb: usize,
) -> (Option<Vec<f64>>, BTreeMap<u32, Vec<f64>>) {
    let d_prompt = (prompt_len > 0).then(|| d_embedded[..prompt_len * d_emb].to_vec());
    let mut rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        let src = &d_embedded[(prompt_len + i) * d_emb..(prompt_len + i + 1) * d_emb];
        axpy(1.0, src, rows.entry(id).or_insert_with(|| vec![0.0; d_emb]));
    }
    (d_prompt, rows)
}
