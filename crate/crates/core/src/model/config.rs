use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual block normalization placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockNorm {
    /// `x + f(LN(x))` blocks; final layer norm before the output projection.
    #[default]
    Pre,
    /// `LN(x + f(x))` blocks; the final layer norm is kept.
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub context: usize,
    pub vocab: usize,
    /// Storage precision used for the `ln|W|` capacity proxy.
    #[serde(default = "default_precision")]
    pub precision_bits: u32,
    #[serde(default)]
    pub block_norm: BlockNorm,
}

fn default_precision() -> u32 {
    32
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 2,
            hidden: 64,
            context: 64,
            vocab: crate::synthdata::vocab::BASE_SIZE,
            precision_bits: 32,
            block_norm: BlockNorm::Pre,
        }
    }
}

impl ModelConfig {
    pub fn mlp(&self) -> usize {
        4 * self.hidden
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 || self.context == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden {} is not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if self.vocab < 2 {
            return Err(Error::config("vocab must hold at least two tokens"));
        }
        if self.precision_bits != 16 && self.precision_bits != 32 {
            return Err(Error::config("precision_bits must be 16 or 32"));
        }
        Ok(())
    }

    /// Closed-form parameter count:
    /// `2·V·D + V + 2·D + L·(12·D² + 13·D)`.
    pub fn param_count(&self) -> usize {
        let (v, d, l) = (self.vocab, self.hidden, self.layers);
        2 * v * d + v + 2 * d + l * (12 * d * d + 13 * d)
    }

    /// Hard capacity proxy `ln|W| = P · precision_bits · ln 2`.
    pub fn ln_model_space(&self) -> crate::units::Nats {
        crate::units::Nats(
            self.param_count() as f64 * f64::from(self.precision_bits) * std::f64::consts::LN_2,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub max_lr: f64,
    #[serde(default = "d_warmup")]
    pub warmup_frac: f64,
    #[serde(default = "d_floor")]
    pub floor_factor: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_clip")]
    pub clip_norm: f64,
    #[serde(default = "d_b1")]
    pub beta1: f64,
    #[serde(default = "d_b2")]
    pub beta2: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
}

fn d_warmup() -> f64 {
    0.025
}
fn d_floor() -> f64 {
    0.1
}
fn d_wd() -> f64 {
    0.1
}
fn d_clip() -> f64 {
    1.0
}
fn d_b1() -> f64 {
    0.9
}
fn d_b2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 64,
            max_lr: 1e-3,
            warmup_frac: d_warmup(),
            floor_factor: d_floor(),
            weight_decay: d_wd(),
            clip_norm: d_clip(),
            beta1: d_b1(),
            beta2: d_b2(),
            eps: d_eps(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be positive");
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return bad("warmup_frac must lie in (0, 1)");
        }
        if !(self.floor_factor > 0.0 && self.floor_factor <= 1.0) {
            return bad("floor_factor must lie in (0, 1]");
        }
        if !(self.max_lr > 0.0 && self.weight_decay >= 0.0 && self.clip_norm > 0.0) {
            return bad("max_lr and clip_norm must be positive, weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("AdamW betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    /// Records consumed by a full run (`steps × batch_size`).
    pub fn dataset_size(&self) -> u64 {
        self.steps * self.batch_size as u64
    }
}

/// Linear warmup from 0 to `max_lr`, then cosine decay to
/// `floor_factor · max_lr` at `steps`.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    let total = cfg.steps as f64;
    let warm = cfg.warmup_frac * total;
    let s = (step as f64).min(total);
    if s < warm {
        return cfg.max_lr * s / warm;
    }
    let progress = if total > warm { (s - warm) / (total - warm) } else { 1.0 };
    let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    cfg.max_lr * (cfg.floor_factor + (1.0 - cfg.floor_factor) * cosine)
}
