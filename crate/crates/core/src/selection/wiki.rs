//! Span-level masked selection inside mixed fact/filler records.

use super::policy::SelectionMode;
use super::rules::{bernoulli, losshf_keep_prob, lower_percentile};
use crate::error::{Error, Result};
use crate::model::Transformer;
use crate::model::Real;
use crate::rng::Rng;
use crate::synthdata::AnnotatedRecord;

/// Per-token training weights for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    /// `weights[r][p]` weighs the loss of predicting token `p + 1` of record `r`.
    pub weights: Vec<Vec<f64>>,
    /// Keep decision per span, per record.
    pub span_keep: Vec<Vec<bool>>,
    /// Conditional answer loss per span, per record.
    pub span_losses: Vec<Vec<f64>>,
    pub tau: Option<f64>,
    /// All answer tokens over selected answer tokens; 0 when nothing was selected.
    pub upscale: f64,
    pub answer_tokens: usize,
    pub selected_tokens: usize,
}

impl SelectionMask {
    /// Nothing was selected although the batch contained answers.
    pub fn is_degenerate(&self) -> bool {
        self.answer_tokens > 0 && self.selected_tokens == 0
    }
}

/// Summed cross-entropy of each span's answer tokens given everything before
/// them, from the record's per-position token losses.
pub fn span_losses(record: &AnnotatedRecord, token_losses: &[f64]) -> Vec<f64> {
    record
        .spans
        .iter()
        .map(|s| (s.answer_start..s.answer_end).map(|i| token_losses[i - 1]).sum())
        .collect()
}

/// Builds the mask from precomputed per-token losses of the batch.
pub fn wiki_masks_from_losses(
    batch: &[AnnotatedRecord],
    token_losses: &[Vec<f64>],
    alpha: f64,
    mode: SelectionMode,
    rng: &mut Rng,
) -> Result<SelectionMask> {
    if !mode.is_wiki() {
        return Err(Error::config(format!("{mode} is not a masked span mode")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if token_losses.len() != batch.len() {
        return Err(Error::config("one loss row per record is required"));
    }
    let span_losses: Vec<Vec<f64>> = batch.iter().zip(token_losses).map(|(r, l)| span_losses(r, l)).collect();
    let flat: Vec<f64> = span_losses.iter().flatten().copied().collect();
    let tau = (!flat.is_empty()).then(|| lower_percentile(&flat, alpha));
    let mut span_keep = Vec::with_capacity(batch.len());
    let (mut answer_tokens, mut selected_tokens) = (0usize, 0usize);
    for (rec, losses) in batch.iter().zip(&span_losses) {
        let t = tau.unwrap_or(0.0);
        let keep: Vec<bool> = losses
            .iter()
            .map(|&l| match mode {
                SelectionMode::LossHWiki => l <= t,
                _ => bernoulli(losshf_keep_prob(l, t), rng),
            })
            .collect();
        for (s, &k) in rec.spans.iter().zip(&keep) {
            answer_tokens += s.answer_len();
            if k {
                selected_tokens += s.answer_len();
            }
        }
        span_keep.push(keep);
    }
    let upscale = if answer_tokens == 0 {
        1.0
    } else if selected_tokens == 0 {
        0.0
    } else {
        answer_tokens as f64 / selected_tokens as f64
    };
    let weights = batch
        .iter()
        .zip(&span_keep)
        .map(|(rec, keep)| {
            let mut w = vec![1.0; rec.tokens.len().saturating_sub(1)];
            for (s, &k) in rec.spans.iter().zip(keep) {
                let v = if k { upscale } else { 0.0 };
                w[s.answer_start - 1..s.answer_end - 1].iter_mut().for_each(|x| *x = v);
            }
            w
        })
        .collect();
    let mask = SelectionMask {
        weights,
        span_keep,
        span_losses,
        tau,
        upscale,
        answer_tokens,
        selected_tokens,
    };
    if mask.is_degenerate() {
        log::warn!("masked selection kept no answer tokens in this batch");
    }
    Ok(mask)
}

/// Negative control that ignores fact boundaries: every answer token is
/// scored on its own loss against a percentile over all answer tokens of the
/// batch. `span_keep` marks spans whose tokens were all kept.
pub fn token_level_masks(
    batch: &[AnnotatedRecord],
    token_losses: &[Vec<f64>],
    alpha: f64,
    mode: SelectionMode,
    rng: &mut Rng,
) -> Result<SelectionMask> {
    if !mode.is_wiki() {
        return Err(Error::config(format!("{mode} is not a masked span mode")));
    }
    if token_losses.len() != batch.len() {
        return Err(Error::config("one loss row per record is required"));
    }
    let flat: Vec<f64> = batch
        .iter()
        .zip(token_losses)
        .flat_map(|(r, l)| r.spans.iter().flat_map(move |s| (s.answer_start..s.answer_end).map(move |i| l[i - 1])))
        .collect();
    let tau = (!flat.is_empty()).then(|| lower_percentile(&flat, alpha));
    let t = tau.unwrap_or(0.0);
    let mut token_keep: Vec<Vec<Vec<bool>>> = Vec::with_capacity(batch.len());
    let mut selected_tokens = 0usize;
    for (rec, l) in batch.iter().zip(token_losses) {
        let mut per_span = Vec::with_capacity(rec.spans.len());
        for s in &rec.spans {
            let keep: Vec<bool> = (s.answer_start..s.answer_end)
                .map(|i| match mode {
                    SelectionMode::LossHWiki => l[i - 1] <= t,
                    _ => bernoulli(losshf_keep_prob(l[i - 1], t), rng),
                })
                .collect();
            selected_tokens += keep.iter().filter(|&&k| k).count();
            per_span.push(keep);
        }
        token_keep.push(per_span);
    }
    let answer_tokens = flat.len();
    let upscale = if answer_tokens == 0 {
        1.0
    } else if selected_tokens == 0 {
        0.0
    } else {
        answer_tokens as f64 / selected_tokens as f64
    };
    let weights = batch
        .iter()
        .zip(&token_keep)
        .map(|(rec, spans)| {
            let mut w = vec![1.0; rec.tokens.len().saturating_sub(1)];
            for (s, keep) in rec.spans.iter().zip(spans) {
                for (i, &k) in (s.answer_start..s.answer_end).zip(keep) {
                    w[i - 1] = if k { upscale } else { 0.0 };
                }
            }
            w
        })
        .collect();
    let mask = SelectionMask {
        weights,
        span_keep: token_keep.iter().map(|r| r.iter().map(|k| k.iter().all(|&x| x)).collect()).collect(),
        span_losses: batch.iter().zip(token_losses).map(|(r, l)| span_losses(r, l)).collect(),
        tau,
        upscale,
        answer_tokens,
        selected_tokens,
    };
    if mask.is_degenerate() {
        log::warn!("token-level selection kept no answer tokens in this batch");
    }
    Ok(mask)
}

/// Scores every span of the batch under `model` and builds the token mask.
pub fn wiki_select_masks<T: Real>(
    batch: &[AnnotatedRecord],
    model: &Transformer<T>,
    alpha: f64,
    mode: SelectionMode,
    rng: &mut Rng,
) -> Result<SelectionMask> {
    let seqs: Vec<&[u32]> = batch.iter().map(|r| r.tokens.as_slice()).collect();
    let losses = model.forward(&seqs)?.token_losses();
    wiki_masks_from_losses(batch, &losses, alpha, mode, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::synthdata::vocab::{BOS, END_OF_FACT, EOS, SEP, START_OF_FACT};

    /// Two records; answers of length 3 and 2 in the first, 5 in the second.
    fn batch() -> Vec<AnnotatedRecord> {
        let f = |ans: usize| {
            let mut v = vec![20, 21, SEP, 13, 14, START_OF_FACT];
            v.extend(std::iter::repeat(5).take(ans));
            v.push(END_OF_FACT);
            v
        };
        let mut a = vec![BOS];
        a.extend(f(3));
        a.extend(f(2));
        a.push(EOS);
        let mut b = vec![BOS];
        b.extend(f(5));
        b.push(EOS);
        vec![AnnotatedRecord::from_tokens(a).unwrap(), AnnotatedRecord::from_tokens(b).unwrap()]
    }

    fn losses_with(b: &[AnnotatedRecord], per_span: &[&[f64]]) -> Vec<Vec<f64>> {
        // spread each span's loss evenly over its answer tokens, filler loss 0.7
        b.iter()
            .zip(per_span)
            .map(|(r, ls)| {
                let mut v = vec![0.7; r.tokens.len() - 1];
                for (s, &l) in r.spans.iter().zip(*ls) {
                    for i in s.answer_start..s.answer_end {
                        v[i - 1] = l / s.answer_len() as f64;
                    }
                }
                v
            })
            .collect()
    }

    #[test]
    fn alpha_one_is_identity() {
        let b = batch();
        let l = losses_with(&b, &[&[3.0, 1.0], &[2.0]]);
        let m = wiki_masks_from_losses(&b, &l, 1.0, SelectionMode::LossHWiki, &mut seeded(0)).unwrap();
        assert_eq!(m.upscale, 1.0);
        assert!(m.weights.iter().flatten().all(|&w| w == 1.0));
    }

    #[test]
    fn threshold_selection_and_conservation() {
        let b = batch();
        let l = losses_with(&b, &[&[3.0, 1.0], &[2.0]]);
        let m = wiki_masks_from_losses(&b, &l, 0.34, SelectionMode::LossHWiki, &mut seeded(0)).unwrap();
        // k = ceil(0.34 * 3) = 2, tau = 2: keeps the 2-token and the 5-token spans
        assert_eq!(m.tau, Some(2.0));
        assert_eq!(m.span_keep, vec![vec![false, true], vec![true]]);
        assert!((m.span_losses[0][0] - 3.0).abs() < 1e-12);
        assert_eq!((m.answer_tokens, m.selected_tokens), (10, 7));
        assert_eq!(m.upscale, 10.0 / 7.0);
        let mask_sum: f64 = b
            .iter()
            .zip(&m.weights)
            .map(|(r, w)| r.answer_mask()[1..].iter().zip(w).filter(|(a, _)| **a).map(|(_, w)| w).sum::<f64>())
            .sum();
        assert!((mask_sum - 10.0).abs() < 1e-12);
        for (r, w) in b.iter().zip(&m.weights) {
            let am = r.answer_mask();
            for p in 0..w.len() {
                if !am[p + 1] {
                    assert_eq!(w[p], 1.0);
                }
            }
        }
    }

    #[test]
    fn factor_is_count_ratio() {
        // 100 answer tokens, 25 selected -> factor 4
        let mut t = vec![BOS];
        for _ in 0..4 {
            t.extend([13, SEP, 14, START_OF_FACT]);
            t.extend(std::iter::repeat(6).take(25));
            t.push(END_OF_FACT);
        }
        t.push(EOS);
        let b = vec![AnnotatedRecord::from_tokens(t).unwrap()];
        let l = losses_with(&b, &[&[1.0, 2.0, 3.0, 4.0]]);
        let m = wiki_masks_from_losses(&b, &l, 0.25, SelectionMode::LossHWiki, &mut seeded(0)).unwrap();
        assert_eq!((m.answer_tokens, m.selected_tokens), (100, 25));
        assert_eq!(m.upscale, 4.0);
    }

    #[test]
    fn token_level_ignores_span_boundaries() {
        let b = batch();
        let losses: Vec<Vec<f64>> = b
            .iter()
            .map(|r| (0..r.tokens.len() - 1).map(|i| (i % 4) as f64).collect())
            .collect();
        let m = token_level_masks(&b, &losses, 0.5, SelectionMode::LossHWiki, &mut seeded(0)).unwrap();
        let sum: f64 = b
            .iter()
            .zip(&m.weights)
            .flat_map(|(r, w)| r.spans.iter().flat_map(move |s| (s.answer_start..s.answer_end).map(move |i| w[i - 1])))
            .sum();
        assert!((sum - m.answer_tokens as f64).abs() < 1e-12);
        // some span is cut in the middle
        let partial = b.iter().zip(&m.weights).any(|(r, w)| {
            r.spans.iter().any(|s| {
                let v: Vec<f64> = (s.answer_start..s.answer_end).map(|i| w[i - 1]).collect();
                v.iter().any(|&x| x == 0.0) && v.iter().any(|&x| x > 0.0)
            })
        });
        assert!(partial);
    }

    #[test]
    fn degenerate_batch() {
        let b = batch();
        // every span at zero loss: tau = 0 keeps all under LossHF (prob 1)
        let l = losses_with(&b, &[&[0.0, 0.0], &[0.0]]);
        let m = wiki_masks_from_losses(&b, &l, 0.5, SelectionMode::LossHFWiki, &mut seeded(0)).unwrap();
        assert_eq!(m.upscale, 1.0);
        // LossHF with positive tau drops zero-loss spans with certainty
        let l = losses_with(&b, &[&[0.0, 0.0], &[5.0]]);
        let m = wiki_masks_from_losses(&b, &l, 0.2, SelectionMode::LossHFWiki, &mut seeded(0)).unwrap();
        assert_eq!(m.tau, Some(0.0));
        assert!(!m.is_degenerate());
        let l = losses_with(&b, &[&[1.0, 2.0], &[5.0]]);
        let mut m = wiki_masks_from_losses(&b, &l, 0.2, SelectionMode::LossHFWiki, &mut seeded(0)).unwrap();
        // tau = 1 keeps span 0 with probability 1; force the empty case by hand
        assert_eq!(m.span_keep[0][0], true);
        m.selected_tokens = 0;
        assert!(m.is_degenerate());
        assert!(wiki_masks_from_losses(&b, &l, 0.2, SelectionMode::LossH, &mut seeded(0)).is_err());
    }
}
