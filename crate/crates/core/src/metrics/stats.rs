use std::collections::HashMap;

use crate::selection::{record_hash, AuditRow};
use crate::synthdata::FactTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    /// One of the inputs was constant; `rho` is reported as 0.
    pub degenerate: bool,
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Spearman {
    assert_eq!(xs.len(), ys.len(), "spearman needs equal lengths");
    assert!(xs.len() >= 2, "spearman needs at least two points");
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Spearman {
            rho: 0.0,
            degenerate: true,
        };
    }
    Spearman {
        rho: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Earliest index whose loss is within 2% multiplicative or 0.01 additive of
/// the best loss in the trace.
pub fn convergence_point(trace: &[f64]) -> usize {
    assert!(!trace.is_empty(), "convergence_point of an empty trace");
    let best = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let cut = (best * 1.02).max(best + 0.01);
    trace.iter().position(|&l| l <= cut).expect("best is within its own cut")
}

/// Median with the mean of the middle two for even counts.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty list");
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Fact-entropy proxy: median of first-visit per-fact training losses.
pub fn entropy_median_estimate(first_visit_losses: &[f64]) -> f64 {
    median(first_visit_losses)
}

/// Normalized training usage per fact from the `kept` rows of an audit log.
/// Rows whose record hash matches no fact are ignored.
pub fn usage_histogram(audit: &[AuditRow], table: &FactTable) -> Vec<f64> {
    let by_hash: HashMap<u64, usize> = (0..table.len()).map(|i| (record_hash(&table.record(i)), i)).collect();
    let ids: Vec<usize> = audit
        .iter()
        .filter(|r| r.kept)
        .filter_map(|r| by_hash.get(&r.record_hash).copied())
        .collect();
    usage_from_facts(&ids, table.len())
}

/// Normalized counts of `fact_ids` over `n` facts.
pub fn usage_from_facts(fact_ids: &[usize], n: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n];
    for &i in fact_ids {
        counts[i] += 1.0;
    }
    let total = fact_ids.len() as f64;
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}
