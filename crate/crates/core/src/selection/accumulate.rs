//! Record-level selection with pool accumulation.

use super::audit::{record_hash, AuditRow};
use super::policy::{SelectionMode, SelectionPolicy};
use super::rules::{bernoulli, hash_unit, losshf_keep_prob, lower_percentile, oracle_keep_probs};
use crate::error::{Error, Result};
use crate::model::Transformer;
use crate::rng::Rng;
use crate::synthdata::FactTable;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub fact: usize,
    pub tokens: Vec<u32>,
}

/// Per-fact keep probabilities for the modes that decide from ground truth
/// (oracles) or from the question alone (content hash).
#[derive(Debug, Clone, PartialEq)]
pub struct FactRule {
    probs: Vec<f64>,
}

impl FactRule {
    pub fn new(policy: &SelectionPolicy, table: &FactTable) -> Option<Self> {
        let mode = policy.mode;
        let probs = if mode.is_oracle() {
            oracle_keep_probs(&table.weights, policy.alpha, mode)
        } else if mode == SelectionMode::RandomHash {
            table
                .facts
                .iter()
                .map(|f| if hash_unit(&f.question) < policy.alpha { 1.0 } else { 0.0 })
                .collect()
        } else {
            return None;
        };
        Some(FactRule { probs })
    }

    pub fn keep_prob(&self, fact: usize) -> f64 {
        self.probs[fact]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Debug, Clone)]
pub struct SelectedBatch {
    /// The first `target` selected records, in selection order.
    pub records: Vec<Candidate>,
    pub rounds: usize,
    pub drawn: usize,
    /// Records that passed the rule, including any beyond the target.
    pub selected: usize,
    pub audit: Vec<AuditRow>,
}

impl SelectedBatch {
    pub fn tokens(&self) -> Vec<&[u32]> {
        self.records.iter().map(|c| c.tokens.as_slice()).collect()
    }
}

/// Draws pool batches from `sample`, selects with a per-pool threshold and
/// appends until `target` records are collected; returns the first `target`.
///
/// `Full` takes the first pool truncated to the target without scoring, so
/// under a shared data stream it consumes exactly the records `LossH` with
/// `alpha = 1` would.
pub fn accumulate_batch<F>(
    mut sample: F,
    model: &Transformer<f32>,
    policy: &SelectionPolicy,
    rule: Option<&FactRule>,
    target: usize,
    step: u64,
    rng: &mut Rng,
) -> Result<SelectedBatch>
where
    F: FnMut() -> Candidate,
{
    policy.validate(target)?;
    if target == 0 {
        return Err(Error::config("target batch size must be positive"));
    }
    let mode = policy.mode;
    if mode.is_wiki() {
        return Err(Error::config(format!("{mode} selects spans, not records")));
    }
    let fact_rule = if mode.is_oracle() || mode == SelectionMode::RandomHash {
        Some(rule.ok_or_else(|| Error::config(format!("{mode} needs per-fact keep probabilities")))?)
    } else {
        None
    };
    let m = policy.pool_size(target);
    let mut out = SelectedBatch {
        records: Vec::with_capacity(target),
        rounds: 0,
        drawn: 0,
        selected: 0,
        audit: Vec::new(),
    };
    for round in 1..=policy.max_rounds {
        let pool: Vec<Candidate> = (0..m).map(|_| sample()).collect();
        out.rounds = round;
        out.drawn += m;
        let (losses, tau, probs): (Option<Vec<f64>>, Option<f64>, Vec<f64>) = match mode {
            SelectionMode::Full => (None, None, vec![1.0; m]),
            SelectionMode::LossH | SelectionMode::LossHF => {
                let seqs: Vec<&[u32]> = pool.iter().map(|c| c.tokens.as_slice()).collect();
                let losses = model.sum_losses(&seqs)?;
                let tau = lower_percentile(&losses, policy.alpha);
                let probs = losses
                    .iter()
                    .map(|&l| match mode {
                        SelectionMode::LossH => f64::from(u8::from(l <= tau)),
                        _ => losshf_keep_prob(l, tau),
                    })
                    .collect();
                (Some(losses), Some(tau), probs)
            }
            _ => {
                let r = fact_rule.expect("checked above");
                (None, None, pool.iter().map(|c| r.keep_prob(c.fact)).collect())
            }
        };
        for (i, cand) in pool.into_iter().enumerate() {
            let keep = if mode == SelectionMode::Full {
                i < target
            } else {
                bernoulli(probs[i], rng)
            };
            let enters = keep && out.records.len() < target;
            out.audit.push(AuditRow {
                step,
                pool_round: round,
                record_hash: record_hash(&cand.tokens),
                sum_loss: losses.as_ref().map(|l| l[i]),
                tau,
                keep_prob: probs[i],
                kept: enters,
            });
            if keep {
                out.selected += 1;
            }
            if enters {
                out.records.push(cand);
            }
        }
        if out.records.len() >= target {
            return Ok(out);
        }
    }
    Err(Error::Starvation {
        alpha: policy.alpha,
        keep_rate: out.selected as f64 / out.drawn as f64,
        kept: out.records.len(),
        drawn: out.drawn,
        rounds: out.rounds,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockNorm, ModelConfig};
    use crate::rng::{seeded, stream, Stream};
    use crate::synthdata::{generate_fact_table, sample_record, FactTemplate};

    fn tiny() -> (FactTable, Transformer<f32>) {
        let table = generate_fact_table(FactTemplate::new(2, 3).unwrap(), 40, 1.0, 3).unwrap();
        let cfg = ModelConfig {
            layers: 1,
            heads: 1,
            hidden: 8,
            context: 8,
            vocab: 39,
            precision_bits: 32,
            block_norm: BlockNorm::Pre,
        };
        (table, Transformer::init(cfg, &mut seeded(2)).unwrap())
    }

    fn sampler<'a>(table: &'a FactTable, rng: &'a mut Rng) -> impl FnMut() -> Candidate + 'a {
        let dist = table.distribution();
        move || {
            let (fact, tokens) = sample_record(&dist, table, rng);
            Candidate { fact, tokens }
        }
    }

    #[test]
    fn full_truncates_first_pool() {
        let (table, model) = tiny();
        let mut data = stream(9, Stream::DataSampling);
        let p = SelectionPolicy::full().with_pool(10);
        let b = accumulate_batch(sampler(&table, &mut data), &model, &p, None, 4, 1, &mut seeded(0)).unwrap();
        assert_eq!((b.records.len(), b.rounds, b.drawn), (4, 1, 10));
        assert!(b.audit.iter().all(|r| r.sum_loss.is_none()));
        assert_eq!(b.audit.iter().filter(|r| r.kept).count(), 4);
    }

    #[test]
    fn lossh_alpha_one_matches_full() {
        let (table, model) = tiny();
        let run = |mode| {
            let mut data = stream(9, Stream::DataSampling);
            let mut sel = stream(9, Stream::Selection);
            let p = SelectionPolicy::new(mode, 1.0).with_pool(12);
            let mut s = sampler(&table, &mut data);
            (0..3)
                .map(|step| {
                    accumulate_batch(&mut s, &model, &p, None, 5, step, &mut sel)
                        .unwrap()
                        .records
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(SelectionMode::Full), run(SelectionMode::LossH));
    }

    #[test]
    fn lossh_half_fills_in_one_round() {
        let (table, model) = tiny();
        let mut data = stream(4, Stream::DataSampling);
        let p = SelectionPolicy::new(SelectionMode::LossH, 0.5).with_pool(16);
        let b = accumulate_batch(sampler(&table, &mut data), &model, &p, None, 8, 0, &mut seeded(0)).unwrap();
        assert_eq!(b.rounds, 1);
        assert!(b.selected >= 8);
        for r in &b.audit {
            assert_eq!(r.keep_prob == 1.0, r.sum_loss.unwrap() <= r.tau.unwrap());
        }
    }

    #[test]
    fn starvation_is_reported() {
        let (table, model) = tiny();
        let mut data = stream(4, Stream::DataSampling);
        let mut p = SelectionPolicy::new(SelectionMode::LossH, 0.05).with_pool(10);
        p.max_rounds = 3;
        // ceil(0.05 * 10) * 3 = 3 < 8, unless ties at tau happen
        let err = accumulate_batch(sampler(&table, &mut data), &model, &p, None, 8, 0, &mut seeded(0)).unwrap_err();
        match err {
            Error::Starvation { rounds, drawn, target, .. } => assert_eq!((rounds, drawn, target), (3, 30, 8)),
            e => panic!("{e}"),
        }
        assert_eq!(Error::Starvation { alpha: 0.0, keep_rate: 0.0, kept: 0, drawn: 0, rounds: 0, target: 0 }.exit_code(), 3);
    }

    #[test]
    fn oracle_head_never_selects_tail() {
        let (table, model) = tiny();
        let p = SelectionPolicy::new(SelectionMode::OracleHead, 0.5);
        let rule = FactRule::new(&p, &table).unwrap();
        let mut data = stream(4, Stream::DataSampling);
        let mut sel = seeded(0);
        let mut s = sampler(&table, &mut data);
        for step in 0..20 {
            let b = accumulate_batch(&mut s, &model, &p, Some(&rule), 6, step, &mut sel).unwrap();
            assert!(b.records.iter().all(|c| c.fact < 20));
        }
        assert!(accumulate_batch(&mut s, &model, &p, None, 6, 0, &mut sel).is_err());
    }

    #[test]
    fn wiki_modes_rejected() {
        let (table, model) = tiny();
        let mut data = seeded(0);
        let p = SelectionPolicy::new(SelectionMode::LossHWiki, 0.5);
        assert!(accumulate_batch(sampler(&table, &mut data), &model, &p, None, 4, 0, &mut seeded(0)).is_err());
    }
}
