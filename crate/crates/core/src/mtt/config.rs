use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MttConfig {
    pub stage1_width: usize,
    pub stage1_layers: usize,
    pub stage2_width: usize,
    pub stage2_layers: usize,
    pub heads: usize,
    /// Feed-forward width as a multiple of the layer width.
    pub ff_mult: usize,
    /// Waypoints per trajectory token; must equal the codec downsampling.
    pub bundle: usize,
    /// Longest clip in frames; sets the size of the position table.
    pub max_len: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Final continuous-mask proportion of the curriculum.
    pub mask_max: f64,
    /// Weight on the decoded-reconstruction term.
    pub recon_weight: f64,
}

impl Default for MttConfig {
    fn default() -> Self {
        MttConfig {
            stage1_width: 512,
            stage1_layers: 4,
            stage2_width: 256,
            stage2_layers: 3,
            heads: 8,
            ff_mult: 4,
            bundle: 4,
            max_len: 196,
            lr: 2e-4,
            lr_final: 1e-5,
            weight_decay: 0.0,
            grad_clip: 1.0,
            batch_size: 32,
            epochs: 300,
            tau_start: 1.0,
            tau_end: 0.5,
            mask_max: 0.75,
            recon_weight: 1.0,
        }
    }
}

impl MttConfig {
    pub fn validate(&self, downsample: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("mtt: {m}")));
        if self.bundle != downsample {
            return bad(format!("bundle {} must equal the codec downsampling {downsample}", self.bundle));
        }
        if self.max_len == 0 || self.max_len % self.bundle != 0 {
            return bad("max_len must be a positive multiple of bundle".into());
        }
        if self.heads == 0 || self.stage1_width % self.heads != 0 || self.stage2_width % self.heads != 0 {
            return bad("layer widths must be divisible by heads".into());
        }
        if !(self.tau_start > 0.0 && self.tau_end > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mask_max) {
            return bad("mask_max must lie in [0, 1]".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }

    /// Continuous-mask proportion at training progress `u` in [0, 1].
    pub fn mask_proportion(&self, u: f64) -> f64 {
        crate::schedule::linear(u, 0.0, self.mask_max)
    }

    pub fn temperature(&self, u: f64) -> f64 {
        crate::schedule::linear(u, self.tau_start, self.tau_end)
    }
}
