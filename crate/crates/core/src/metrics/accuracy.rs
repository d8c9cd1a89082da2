use crate::error::Result;
use crate::model::{Real, Transformer};
use crate::selection::span_losses;
use crate::synthdata::{AnnotatedRecord, FactTable};

const EVAL_CHUNK: usize = 256;

/// Per-fact losses of every record of a table under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactScores {
    /// Answer tokens plus eos given bos, question and separator.
    pub conditional: Vec<f64>,
    /// Sum over every predicted token of the record.
    pub sequence_sum: Vec<f64>,
    /// `sequence_sum` over the number of predicted tokens.
    pub sequence_mean: Vec<f64>,
}

pub fn score_facts<T: Real>(model: &Transformer<T>, table: &FactTable) -> Result<FactScores> {
    let n = table.len();
    let mut out = FactScores {
        conditional: Vec::with_capacity(n),
        sequence_sum: Vec::with_capacity(n),
        sequence_mean: Vec::with_capacity(n),
    };
    for start in (0..n).step_by(EVAL_CHUNK) {
        let ids: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let recs: Vec<Vec<u32>> = ids.iter().map(|&i| table.record(i)).collect();
        let losses = model.forward(&recs)?.token_losses();
        for (&i, l) in ids.iter().zip(&losses) {
            let ctx = table.context_len(i);
            let total: f64 = l.iter().sum();
            out.conditional.push(l[ctx - 1..].iter().sum());
            out.sequence_sum.push(total);
            out.sequence_mean.push(total / l.len() as f64);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactAccuracy {
    /// exp(-conditional loss) per fact: the probability that stochastic
    /// decoding reproduces the answer exactly.
    pub probs: Vec<f64>,
    pub mean: f64,
    pub count: f64,
}

impl FactAccuracy {
    pub fn from_losses(conditional: &[f64]) -> Self {
        let probs: Vec<f64> = conditional.iter().map(|&l| (-l).exp().clamp(0.0, 1.0)).collect();
        let count: f64 = probs.iter().sum();
        let mean = if probs.is_empty() { 0.0 } else { count / probs.len() as f64 };
        FactAccuracy { probs, mean, count }
    }
}

pub fn fact_accuracy<T: Real>(model: &Transformer<T>, table: &FactTable) -> Result<FactAccuracy> {
    Ok(FactAccuracy::from_losses(&score_facts(model, table)?.conditional))
}

/// Sum of `weights[i] * probs[i]`.
pub fn weighted_fact_accuracy(probs: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(probs.len(), weights.len());
    probs.iter().zip(weights).map(|(p, w)| p * w).sum()
}

/// exp(-answer loss) of every span in `records`, in record order.
pub fn span_accuracy<T: Real>(model: &Transformer<T>, records: &[AnnotatedRecord]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for chunk in records.chunks(EVAL_CHUNK) {
        let seqs: Vec<&[u32]> = chunk.iter().map(|r| r.tokens.as_slice()).collect();
        let losses = model.forward(&seqs)?.token_losses();
        for (r, l) in chunk.iter().zip(&losses) {
            out.extend(span_losses(r, l).into_iter().map(|x| (-x).exp()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_from_losses() {
        let a = FactAccuracy::from_losses(&[0.0, 22.0 * 10f64.ln(), 2f64.ln()]);
        assert_eq!(a.probs[0], 1.0);
        assert!((a.probs[1] - 1e-22).abs() < 1e-34);
        assert!((a.probs[2] - 0.5).abs() < 1e-15);
        assert!((a.count - 1.5).abs() < 1e-12);
        assert!((a.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weighted() {
        assert_eq!(weighted_fact_accuracy(&[1.0, 0.0], &[0.75, 0.25]), 0.75);
        assert_eq!(weighted_fact_accuracy(&[1.0; 3], &[0.2, 0.3, 0.5]), 1.0);
        let p = [0.1, 0.7, 0.4, 0.9];
        let u = weighted_fact_accuracy(&p, &[0.25; 4]);
        assert!((u - p.iter().sum::<f64>() / 4.0).abs() < 1e-15);
    }
}
