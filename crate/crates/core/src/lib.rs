//! Few-shot hate speech classifier: prompt-augmented CNN-BiLSTM with attention
//! pooling, synonym-replacement augmentation, training loop, metrics and a batch CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod data;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod numerics;
pub mod textpipe;
pub mod train;

pub use error::{Error, Result};
