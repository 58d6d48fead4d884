use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters of the pixel transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_embed: usize,
    /// Palette size; the input vocabulary is `vocab_k + 1` with the start token.
    pub vocab_k: usize,
    /// Pixels per image (height x width).
    pub seq_len: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    /// 24 layers, 8 heads, width 512 over 64x64 images with a 512-color palette.
    pub const fn igpt_s(init_seed: u64) -> Self {
        Self {
            n_layers: 24,
            n_heads: 8,
            d_embed: 512,
            vocab_k: 512,
            seq_len: 64 * 64,
            init_seed,
        }
    }

    /// 6 layers, 2 heads, width 512.
    pub const fn igpt_mini(init_seed: u64) -> Self {
        Self {
            n_layers: 6,
            n_heads: 2,
            d_embed: 512,
            vocab_k: 512,
            seq_len: 64 * 64,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_heads == 0 || self.d_embed == 0 || !self.d_embed.is_multiple_of(self.n_heads) {
            problems.push(format!(
                "d_embed ({}) must be a positive multiple of n_heads ({})",
                self.d_embed, self.n_heads
            ));
        }
        if self.seq_len == 0 {
            problems.push("seq_len must be at least 1".to_string());
        }
        if self.vocab_k < 2 {
            problems.push(format!("vocab_k must be at least 2, got {}", self.vocab_k));
        }
        if self.vocab_k > usize::from(u16::MAX) {
            problems.push(format!("vocab_k {} does not fit 16-bit tokens", self.vocab_k));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ModelConfig(problems.join("; ")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_embed / self.n_heads
    }

    pub fn start_token(&self) -> usize {
        self.vocab_k
    }

    /// Closed-form parameter count:
    /// `(k+1)d + Td + L(12d^2 + 13d) + 2d + dk + k`.
    pub fn param_count(&self) -> usize {
        let d = self.d_embed;
        let k = self.vocab_k;
        (k + 1) * d + self.seq_len * d + self.n_layers * (12 * d * d + 13 * d) + 2 * d + d * k + k
    }
}
