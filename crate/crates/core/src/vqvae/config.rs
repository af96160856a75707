use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecVariant {
    /// One encoder and codebook per joint group.
    PartBased,
    /// One whole-body encoder and codebook at the same latent width.
    Unsplit,
}

impl CodecVariant {
    pub fn name(self) -> &'static str {
        match self {
            CodecVariant::PartBased => "part_based",
            CodecVariant::Unsplit => "unsplit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqvaeConfig {
    pub variant: CodecVariant,
    pub num_joints: usize,
    /// Codes per codebook.
    pub codebook_size: usize,
    /// Width of one group's code. The unsplit variant uses `6 * code_dim`.
    pub code_dim: usize,
    /// Temporal downsampling; a power of two, one stride-2 stage per factor.
    pub downsample: usize,
    pub enc_width: usize,
    pub dec_width: usize,
    /// Residual blocks per resolution stage.
    pub res_depth: usize,
    pub dilation_growth: usize,
    pub beta: f64,
    pub ema_decay: f64,
    /// EMA usage below which a code is re-seeded.
    pub reset_threshold: f64,
    pub reset_warmup_steps: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Training crop length in frames (multiple of `downsample`).
    pub window: usize,
}

impl Default for VqvaeConfig {
    fn default() -> Self {
        VqvaeConfig {
            variant: CodecVariant::PartBased,
            num_joints: 22,
            codebook_size: 126,
            code_dim: 126,
            downsample: 4,
            enc_width: 256,
            dec_width: 512,
            res_depth: 2,
            dilation_growth: 3,
            beta: 1.0,
            ema_decay: 0.99,
            reset_threshold: 1.0,
            reset_warmup_steps: 100,
            lr: 2e-4,
            lr_final: 1e-5,
            weight_decay: 0.0,
            grad_clip: 1.0,
            batch_size: 32,
            epochs: 200,
            window: 64,
        }
    }
}

impl VqvaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("vqvae: {m}")));
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad("ema_decay must lie in (0, 1)");
        }
        if self.downsample < 2 || !self.downsample.is_power_of_two() {
            return bad("downsample must be a power of two >= 2");
        }
        if self.codebook_size == 0 || self.code_dim == 0 || self.enc_width == 0 || self.dec_width == 0 {
            return bad("sizes must be positive");
        }
        if self.window == 0 || self.window % self.downsample != 0 {
            return bad("window must be a positive multiple of downsample");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.num_joints < 2 {
            return bad("num_joints must be at least 2");
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.downsample.trailing_zeros() as usize
    }

    /// Latent slots per step: 6 groups, or 1 for the unsplit variant.
    pub fn slots(&self) -> usize {
        match self.variant {
            CodecVariant::PartBased => 6,
            CodecVariant::Unsplit => 1,
        }
    }

    pub fn slot_dim(&self) -> usize {
        match self.variant {
            CodecVariant::PartBased => self.code_dim,
            CodecVariant::Unsplit => 6 * self.code_dim,
        }
    }

    /// Concatenated per-step latent width, equal across variants.
    pub fn latent_width(&self) -> usize {
        6 * self.code_dim
    }
}
