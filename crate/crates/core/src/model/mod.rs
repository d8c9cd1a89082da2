//! Tiny decoder-only transformer, AdamW and the learning-rate schedule.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod layout;
pub mod real;
pub mod state;
pub mod transformer;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{lr_at, BlockNorm, ModelConfig, TrainConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layout::{ParamLayout, TensorSpec};
pub use real::Real;
pub use state::{clip_global_norm, init_model, ModelState, StepStats};
pub use transformer::{ForwardPass, Transformer};

/// Summed cross-entropy of every predicted position of `record`.
pub fn sum_loss<T: Real>(model: &Transformer<T>, record: &[u32]) -> crate::Result<f64> {
    Ok(model.forward(&[record])?.token_losses()[0].iter().sum())
}

/// Summed cross-entropy of `answer` tokens given `context`.
pub fn conditional_loss<T: Real>(model: &Transformer<T>, context: &[u32], answer: &[u32]) -> crate::Result<f64> {
    if answer.is_empty() {
        return Ok(0.0);
    }
    let mut seq = context.to_vec();
    seq.extend_from_slice(answer);
    let losses = &model.forward(&[&seq])?.token_losses()[0];
    Ok(losses[context.len() - 1..].iter().sum())
}
