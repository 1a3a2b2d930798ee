//! Checkpoint layout: a UTF-8 manifest terminated by a line `end`, followed by the
//! payload of little-endian `f32` values, arrays in manifest order.
//!
//! ```text
//! fslhate-checkpoint 1
//! config d_emb = 300
//! ...
//! vocab_sha256 <hex>
//! array embedding 15000x300 0
//! array prompt 10x300 18000000
//! ...
//! payload_bytes <n>
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::config::{model_config_from_pairs, model_pairs};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

const MAGIC: &str = "fslhate-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub params: ModelParams,
}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::ArtifactMismatch(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = format!("{MAGIC} {VERSION}\n");
        for (k, v) in model_pairs(&self.config) {
            let _ = writeln!(manifest, "config {k} = {v}");
        }
        let _ = writeln!(manifest, "vocab_sha256 {}", self.vocab_hash);
        let mut offset = 0usize;
        let tensors = self.params.named_tensors();
        for (name, t) in &tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(manifest, "array {name} {} {offset}", dims.join("x"));
            offset += 4 * t.len();
        }
        let _ = writeln!(manifest, "payload_bytes {offset}");
        manifest.push_str("end\n");

        let mut bytes = manifest.into_bytes();
        bytes.reserve(offset);
        for (_, t) in &tensors {
            for &v in t.data() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| mismatch("checkpoint manifest is not terminated by `end`"))?;
            let line = std::str::from_utf8(&rest[..nl])
                .map_err(|_| mismatch("checkpoint manifest is not UTF-8"))?;
            pos += nl + 1;
            if line == "end" {
                break;
            }
            lines.push(line);
        }
        let payload = &bytes[pos..];

        let header = lines.first().copied().unwrap_or_default();
        match header.split_once(' ') {
            Some((MAGIC, v)) if v == VERSION.to_string() => {}
            Some((MAGIC, v)) => return Err(mismatch(format!("unsupported checkpoint version {v}"))),
            _ => return Err(mismatch("not a checkpoint file")),
        }

        let mut config_pairs = Vec::new();
        let mut vocab_hash = None;
        let mut arrays: Vec<(&str, Vec<usize>, usize)> = Vec::new();
        let mut declared_payload = None;
        for line in &lines[1..] {
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "config" => {
                    let (k, v) = rest
                        .split_once(" = ")
                        .ok_or_else(|| mismatch(format!("bad config line {line:?}")))?;
                    config_pairs.push((k, v));
                }
                "vocab_sha256" => vocab_hash = Some(rest.to_string()),
                "array" => {
                    let parts: Vec<&str> = rest.split(' ').collect();
                    let [name, shape, offset] = parts[..] else {
                        return Err(mismatch(format!("bad array line {line:?}")));
                    };
                    let shape = shape
                        .split('x')
                        .map(str::parse)
                        .collect::<std::result::Result<Vec<usize>, _>>()
                        .map_err(|_| mismatch(format!("bad shape in {line:?}")))?;
                    let offset = offset
                        .parse()
                        .map_err(|_| mismatch(format!("bad offset in {line:?}")))?;
                    arrays.push((name, shape, offset));
                }
                "payload_bytes" => {
                    declared_payload = Some(
                        rest.parse::<usize>()
                            .map_err(|_| mismatch("bad payload_bytes line"))?,
                    )
                }
                _ => return Err(mismatch(format!("unknown manifest line {line:?}"))),
            }
        }
        let config = model_config_from_pairs(config_pairs)
            .map_err(|e| mismatch(format!("checkpoint config: {e}")))?;
        let vocab_hash = vocab_hash.ok_or_else(|| mismatch("manifest lacks vocab_sha256"))?;

        let expected: usize = arrays.iter().map(|(_, s, _)| 4 * s.iter().product::<usize>()).sum();
        if declared_payload != Some(expected) || payload.len() != expected {
            return Err(mismatch(format!(
                "payload is {} bytes, manifest implies {expected}",
                payload.len()
            )));
        }

        let vocab_size = arrays
            .iter()
            .find(|(n, _, _)| *n == "embedding")
            .and_then(|(_, s, _)| s.first().copied())
            .ok_or_else(|| mismatch("manifest lacks the embedding array"))?;
        let mut params = ModelParams::zeros(&config, vocab_size);
        {
            let mut targets = params.named_tensors_mut();
            if targets.len() != arrays.len() {
                return Err(mismatch("array list does not match the model config"));
            }
            let mut cursor = 0;
            for ((name, t), (m_name, shape, offset)) in targets.iter_mut().zip(&arrays) {
                if name != m_name || t.shape() != shape.as_slice() || *offset != cursor {
                    return Err(mismatch(format!("array {m_name} does not match the model layout")));
                }
                let chunk = &payload[cursor..cursor + 4 * t.len()];
                for (dst, src) in t.data_mut().iter_mut().zip(chunk.chunks_exact(4)) {
                    *dst = f32::from_le_bytes(src.try_into().expect("4-byte chunk")) as f64;
                }
                cursor += 4 * t.len();
            }
        }
        if !params.is_finite() {
            return Err(mismatch("checkpoint contains non-finite values"));
        }
        Ok(Checkpoint {
            config,
            vocab_hash,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}
