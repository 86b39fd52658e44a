//! Feature-hashing bag-of-words embedder for transcripts.
//!
//! Tokens are maximal runs of alphanumeric characters (optionally lowercased).
//! Each token is hashed with 64-bit FNV-1a over its UTF-8 bytes (offset basis
//! `0xcbf29ce484222325`, prime `0x100000001b3`, no seed). The bucket is
//! `hash & (dim - 1)` and the sign is `+1` when bit 63 is clear, `-1` otherwise.

use std::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedConfig {
    dim: usize,
    pub lowercase: bool,
    pub normalize: bool,
}

impl HashEmbedConfig {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "embedding dimension must be a power of two >= 2, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            lowercase: true,
            normalize: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for HashEmbedConfig {
    fn default() -> Self {
        Self::new(64).expect("valid default dimension")
    }
}

pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

pub fn token_hash(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

/// `(bucket, sign)` for a token.
pub fn token_slot(token: &str, dim: usize) -> (usize, f64) {
    let h = token_hash(token);
    let bucket = (h & (dim as u64 - 1)) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Signed bucket counts before normalization.
pub fn embed_raw(text: &str, cfg: &HashEmbedConfig) -> Vec<f64> {
    let mut v = vec![0.0; cfg.dim];
    for token in tokenize(text, cfg.lowercase) {
        let (bucket, sign) = token_slot(&token, cfg.dim);
        v[bucket] += sign;
    }
    v
}

pub fn embed(text: &str, cfg: &HashEmbedConfig) -> Vec<f64> {
    let mut v = embed_raw(text, cfg);
    if cfg.normalize {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    v
}
