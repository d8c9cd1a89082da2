use super::config::{lr_at, ModelConfig, TrainConfig};
use super::transformer::{ForwardPass, Transformer};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng, Stream};

/// Trainable f32 model plus AdamW moments and the step counter.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub model: Transformer<f32>,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub lr: f64,
    /// Weighted sum of token cross-entropies over the batch.
    pub sum_loss: f64,
    /// `sum_loss` divided by the total token weight.
    pub mean_loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub tokens: u64,
}

pub fn init_model(config: ModelConfig, seed: u64) -> Result<ModelState> {
    ModelState::init(config, &mut stream(seed, Stream::ModelInit))
}

/// Clips `grads` in place to global norm `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [f32], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|&g| f64::from(g) * f64::from(g)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

impl ModelState {
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let model = Transformer::init(config, rng)?;
        Ok(Self::from_model(model))
    }

    pub fn from_model(model: Transformer<f32>) -> Self {
        let n = model.param_count();
        ModelState {
            model,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    /// One optimizer step on the (optionally weighted) summed cross-entropy.
    pub fn train_step<S: AsRef<[u32]>>(
        &mut self,
        batch: &[S],
        weights: Option<&[Vec<f64>]>,
        cfg: &TrainConfig,
    ) -> Result<StepStats> {
        self.train_step_with(batch, cfg, |fwd| match weights {
            Some(w) => w.to_vec(),
            None => (0..fwd.num_sequences())
                .map(|s| vec![1.0; fwd.seq_len(s).saturating_sub(1)])
                .collect(),
        })
    }

    /// Like [`train_step`](Self::train_step) but lets the caller derive token
    /// weights from the forward pass of the batch being trained on.
    pub fn train_step_with<S, F>(&mut self, batch: &[S], cfg: &TrainConfig, weigh: F) -> Result<StepStats>
    where
        S: AsRef<[u32]>,
        F: FnOnce(&ForwardPass<f32>) -> Vec<Vec<f64>>,
    {
        if batch.is_empty() {
            return Err(Error::config("train_step needs a non-empty batch"));
        }
        let fwd = self.model.forward(batch)?;
        let weights = weigh(&fwd);
        let mut grads = vec![0.0f32; self.model.param_count()];
        let sum_loss = self.model.backward(&fwd, &weights, &mut grads);
        let total_weight: f64 = weights.iter().flat_map(|w| w.iter()).sum();
        let tokens = weights.iter().map(|w| w.len() as u64).sum();
        drop(fwd);
        let step = self.step + 1;
        if !sum_loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss".into(),
                step,
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient".into(),
                step,
            });
        }
        let grad_norm = clip_global_norm(&mut grads, cfg.clip_norm);
        let lr = lr_at(step, cfg);
        self.adamw_update(&grads, lr, cfg);
        self.step = step;
        if self.model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                what: "parameter".into(),
                step,
            });
        }
        Ok(StepStats {
            step,
            lr,
            sum_loss,
            mean_loss: if total_weight > 0.0 { sum_loss / total_weight } else { 0.0 },
            grad_norm,
            tokens,
        })
    }

    fn adamw_update(&mut self, grads: &[f32], lr: f64, cfg: &TrainConfig) {
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let specs = self.model.layout().specs.clone();
        for spec in &specs {
            let decay = if spec.decay { lr * cfg.weight_decay } else { 0.0 };
            for i in spec.range() {
                let g = f64::from(grads[i]);
                let m = b1 * f64::from(self.first_moment[i]) + (1.0 - b1) * g;
                let v = b2 * f64::from(self.second_moment[i]) + (1.0 - b2) * g * g;
                self.first_moment[i] = m as f32;
                self.second_moment[i] = v as f32;
                let mhat = m / bc1;
                let vhat = v / bc2;
                let p = f64::from(self.model.params[i]);
                let updated = p - lr * mhat / (vhat.sqrt() + cfg.eps) - decay * p;
                self.model.params[i] = updated as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;

    fn small() -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            hidden: 8,
            context: 12,
            vocab: 39,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_mask_only_decays() {
        let mut st = init_model(small(), 1).unwrap();
        let before = st.model.params.clone();
        let cfg = TrainConfig {
            steps: 10,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let batch = vec![vec![0u32, 13, 14, 2, 3, 1]];
        let stats = st.train_step(&batch, Some(&[vec![0.0; 5]]), &cfg).unwrap();
        assert_eq!(stats.sum_loss, 0.0);
        let factor = 1.0 - stats.lr * cfg.weight_decay;
        for spec in &st.model.layout().specs {
            for i in spec.range() {
                let want = if spec.decay {
                    (f64::from(before[i]) * factor) as f32
                } else {
                    before[i]
                };
                let got = st.model.params[i];
                assert!((got - want).abs() <= 1e-7 * want.abs().max(1e-3), "{}", spec.name);
            }
        }
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.37).sin()).collect();
        let pre = clip_global_norm(&mut g, 1.0);
        assert!(pre > 1.0);
        let post = g.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        assert!((post - 1.0).abs() < 1e-6);
        let mut small: Vec<f32> = vec![0.1, 0.2];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.2]);
    }

    #[test]
    fn sum_is_mean_times_count() {
        let mut st = init_model(small(), 2).unwrap();
        let cfg = TrainConfig {
            steps: 10,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let batch = vec![vec![0u32, 13, 14, 2, 3, 1], vec![0u32, 20, 2, 5]];
        let s = st.train_step(&batch, None, &cfg).unwrap();
        assert_eq!(s.tokens, 8);
        assert!((s.sum_loss - s.mean_loss * 8.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_trajectory() {
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let batch = vec![vec![0u32, 13, 14, 2, 3, 1], vec![0u32, 20, 2, 5]];
        let run = || {
            let mut st = init_model(small(), 9).unwrap();
            for _ in 0..5 {
                st.train_step(&batch, None, &cfg).unwrap();
            }
            st.model.params
        };
        assert_eq!(run(), run());
    }
}
