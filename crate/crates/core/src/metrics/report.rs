use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::accuracy::{score_facts, weighted_fact_accuracy, FactAccuracy, FactScores};
use super::bounds::{exposures, mem_bits_lower_bound};
use super::stats::{spearman, Spearman};
use crate::error::{Error, Result};
use crate::model::{Real, Transformer};
use crate::selection::span_losses;
use crate::synthdata::{AnnotatedRecord, FactTable};

pub const EVALS_HEADER: &str =
    "run_id,step,fact_acc,acc_count,weighted_acc,mem_nats,mem_bits,bits_per_param,exposures,spearman_sum,spearman_mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub step: u64,
    /// Per-fact accuracy probabilities; not serialized to `evals.csv`.
    #[serde(skip)]
    pub per_fact: Vec<f64>,
    pub fact_acc: f64,
    pub acc_count: f64,
    pub weighted_acc: f64,
    /// Loss-based memorization lower bound clamped at zero.
    pub mem_nats: f64,
    pub mem_nats_raw: f64,
    pub mem_bits: f64,
    pub bits_per_param: f64,
    pub exposures: f64,
    /// Spearman rank correlation of negative per-sequence sum loss with the
    /// fact weight-to-bits ratio.
    pub spearman_sum: f64,
    /// Same with per-sequence mean loss.
    pub spearman_mean: f64,
    pub spearman_degenerate: bool,
    /// Mean loss of tokens outside answer spans; annotated corpora only.
    #[serde(default)]
    pub nonfact_loss: Option<f64>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.step,
            self.fact_acc,
            self.acc_count,
            self.weighted_acc,
            self.mem_nats,
            self.mem_bits,
            self.bits_per_param,
            self.exposures,
            self.spearman_sum,
            self.spearman_mean
        )
    }

    pub fn from_csv(line: &str, location: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::parse(location, format!("expected 11 fields, found {}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| Error::parse(location, format!("bad number {:?}", f[i])))
        };
        Ok(EvalReport {
            run_id: f[0].to_string(),
            step: f[1].parse().map_err(|_| Error::parse(location, "bad step"))?,
            per_fact: Vec::new(),
            fact_acc: num(2)?,
            acc_count: num(3)?,
            weighted_acc: num(4)?,
            mem_nats: num(5)?,
            mem_nats_raw: num(5)?,
            mem_bits: num(6)?,
            bits_per_param: num(7)?,
            exposures: num(8)?,
            spearman_sum: num(9)?,
            spearman_mean: num(10)?,
            spearman_degenerate: false,
            nonfact_loss: None,
        })
    }

    pub fn write_csv<W: Write>(&self, header: bool, mut w: W) -> Result<()> {
        let mut buf = String::new();
        if header {
            buf.push_str(EVALS_HEADER);
            buf.push('\n');
        }
        buf.push_str(&self.to_csv());
        buf.push('\n');
        // one write per report keeps appends line-atomic
        w.write_all(buf.as_bytes())?;
        Ok(())
    }
}

pub fn read_evals_csv<R: BufRead>(r: R) -> Result<Vec<EvalReport>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line == EVALS_HEADER {
            continue;
        }
        out.push(EvalReport::from_csv(&line, &format!("evals line {}", n + 1))?);
    }
    Ok(out)
}

/// Evaluates every metric of the report for one model snapshot.
pub fn evaluate<T: Real>(
    model: &Transformer<T>,
    table: &FactTable,
    tokens_seen: u64,
    run_id: &str,
    step: u64,
) -> Result<EvalReport> {
    let scores = score_facts(model, table)?;
    Ok(report_from_scores(model.param_count(), table, &scores, tokens_seen, run_id, step))
}

/// Evaluates facts through a probe corpus in which every fact of `table`
/// appears exactly once. Per-sequence losses are the span answer losses.
pub fn evaluate_annotated<T: Real>(
    model: &Transformer<T>,
    table: &FactTable,
    probe: &[AnnotatedRecord],
    tokens_seen: u64,
    run_id: &str,
    step: u64,
) -> Result<EvalReport> {
    let n = table.len();
    let mut cond = vec![f64::NAN; n];
    let mut mean = vec![f64::NAN; n];
    let (mut other_sum, mut other_count) = (0.0, 0usize);
    for chunk in probe.chunks(128) {
        let seqs: Vec<&[u32]> = chunk.iter().map(|r| r.tokens.as_slice()).collect();
        let losses = model.forward(&seqs)?.token_losses();
        for (r, l) in chunk.iter().zip(&losses) {
            for ((s, &f), sl) in r.spans.iter().zip(&r.fact_ids).zip(span_losses(r, l)) {
                cond[f] = sl;
                mean[f] = sl / s.answer_len().max(1) as f64;
            }
            let answer = r.answer_mask();
            for (p, &x) in l.iter().enumerate() {
                if !answer[p + 1] {
                    other_sum += x;
                    other_count += 1;
                }
            }
        }
    }
    if cond.iter().any(|x| x.is_nan()) {
        return Err(Error::config("probe corpus does not cover every fact"));
    }
    let scores = FactScores {
        conditional: cond.clone(),
        sequence_sum: cond,
        sequence_mean: mean,
    };
    let mut r = report_from_scores(model.param_count(), table, &scores, tokens_seen, run_id, step);
    r.nonfact_loss = Some(other_sum / other_count.max(1) as f64);
    Ok(r)
}

fn report_from_scores(
    param_count: usize,
    table: &FactTable,
    scores: &FactScores,
    tokens_seen: u64,
    run_id: &str,
    step: u64,
) -> EvalReport {
    let acc = FactAccuracy::from_losses(&scores.conditional);
    let mem = mem_bits_lower_bound(table.joint_entropy(), &scores.conditional);
    let ratio: Vec<f64> = (0..table.len())
        .map(|i| table.weights[i] / table.fact_entropy(i).to_bits().0.max(f64::MIN_POSITIVE))
        .collect();
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
    let (s_sum, s_mean) = if table.len() >= 2 {
        (
            spearman(&neg(&scores.sequence_sum), &ratio),
            spearman(&neg(&scores.sequence_mean), &ratio),
        )
    } else {
        let d = Spearman {
            rho: 0.0,
            degenerate: true,
        };
        (d, d)
    };
    EvalReport {
        run_id: run_id.to_string(),
        step,
        weighted_acc: weighted_fact_accuracy(&acc.probs, &table.weights),
        fact_acc: acc.mean,
        acc_count: acc.count,
        per_fact: acc.probs,
        mem_nats: mem.nats.0,
        mem_nats_raw: mem.raw.0,
        mem_bits: mem.bits(),
        bits_per_param: mem.bits() / param_count as f64,
        exposures: exposures(tokens_seen, table.total_record_tokens()),
        spearman_sum: s_sum.rho,
        spearman_mean: s_mean.rho,
        spearman_degenerate: s_sum.degenerate || s_mean.degenerate,
        nonfact_loss: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockNorm, ModelConfig};
    use crate::rng::seeded;
    use crate::synthdata::{generate_fact_table, FactTemplate};

    #[test]
    fn csv_round_trip_and_evaluate() {
        let table = generate_fact_table(FactTemplate::new(2, 4).unwrap(), 30, 1.0, 1).unwrap();
        let cfg = ModelConfig {
            layers: 1,
            heads: 1,
            hidden: 8,
            context: 16,
            vocab: 39,
            precision_bits: 32,
            block_norm: BlockNorm::Pre,
        };
        let m: Transformer<f32> = Transformer::init(cfg, &mut seeded(0)).unwrap();
        let r = evaluate(&m, &table, 9 * 30, "run", 5).unwrap();
        assert_eq!(r.per_fact.len(), 30);
        assert!((r.exposures - 1.0).abs() < 1e-12);
        assert!(r.per_fact.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!((0.0..=30.0).contains(&r.acc_count));
        assert!(r.mem_nats_raw <= table.joint_entropy().0);
        assert!((r.mem_bits - r.mem_nats / std::f64::consts::LN_2).abs() < 1e-9);
        let mut buf = Vec::new();
        r.write_csv(true, &mut buf).unwrap();
        let back = read_evals_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].fact_acc, r.fact_acc);
        assert_eq!(back[0].spearman_sum, r.spearman_sum);
    }
}
