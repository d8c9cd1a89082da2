//! Stateless keep rules shared by record-level and span-level selection.

use rand::Rng;

use super::policy::SelectionMode;
use crate::rng::stable_hash;

/// Nearest-rank lower percentile: the k-th smallest loss with
/// `k = max(1, ceil(alpha * m))`.
pub fn lower_percentile(losses: &[f64], alpha: f64) -> f64 {
    assert!(!losses.is_empty(), "lower_percentile of an empty list");
    let m = losses.len();
    let k = rank(alpha, m);
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[k - 1]
}

pub(crate) fn rank(alpha: f64, m: usize) -> usize {
    // guard against alpha * m landing a hair above an integer
    let x = alpha * m as f64;
    let k = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    (k as usize).clamp(1, m)
}

/// LossH: keep exactly the records whose loss is at most the threshold.
pub fn select_lossh(losses: &[f64], alpha: f64) -> Vec<bool> {
    let tau = lower_percentile(losses, alpha);
    losses.iter().map(|&l| l <= tau).collect()
}

/// LossHF keep probability `l / tau` below the threshold, zero above.
pub fn losshf_keep_prob(loss: f64, tau: f64) -> f64 {
    if loss > tau {
        0.0
    } else if tau <= 0.0 {
        1.0
    } else {
        (loss / tau).clamp(0.0, 1.0)
    }
}

/// LossHF: independent Bernoulli(l / tau) draws for records at or below the
/// threshold. Draws are only consumed for probabilities strictly inside (0, 1).
pub fn select_losshf<R: Rng + ?Sized>(losses: &[f64], alpha: f64, rng: &mut R) -> Vec<bool> {
    let tau = lower_percentile(losses, alpha);
    losses.iter().map(|&l| bernoulli(losshf_keep_prob(l, tau), rng)).collect()
}

pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.gen::<f64>() < p
    }
}

/// Weight of the `ceil(alpha * N)`-th most frequent fact.
pub fn oracle_threshold(weights: &[f64], alpha: f64) -> f64 {
    assert!(!weights.is_empty(), "oracle_threshold of an empty table");
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[rank(alpha, weights.len()) - 1]
}

/// Keep probability of a fact with weight `w` under an oracle mode.
pub fn oracle_keep_prob(w: f64, w_tau: f64, mode: SelectionMode) -> f64 {
    match mode {
        SelectionMode::OracleHead => {
            if w >= w_tau {
                1.0
            } else {
                0.0
            }
        }
        SelectionMode::OracleHeadFlattened => {
            if w >= w_tau {
                w_tau / w
            } else {
                0.0
            }
        }
        SelectionMode::OracleFlattened => {
            if w > 0.0 {
                (w_tau / w).min(1.0)
            } else {
                1.0
            }
        }
        other => panic!("{other} is not an oracle mode"),
    }
}

pub fn oracle_keep_probs(weights: &[f64], alpha: f64, mode: SelectionMode) -> Vec<f64> {
    let w_tau = oracle_threshold(weights, alpha);
    weights.iter().map(|&w| oracle_keep_prob(w, w_tau, mode)).collect()
}

/// Keep probability and decision for fact `i` under an oracle mode.
pub fn oracle_select<R: Rng + ?Sized>(
    i: usize,
    weights: &[f64],
    alpha: f64,
    mode: SelectionMode,
    rng: &mut R,
) -> (f64, bool) {
    let p = oracle_keep_prob(weights[i], oracle_threshold(weights, alpha), mode);
    (p, bernoulli(p, rng))
}

/// Content-hash baseline: the question's stable hash mapped to [0, 1) is kept
/// iff below `alpha`, so a fact gets the same decision every epoch.
pub fn random_hash_select(question: &[u32], alpha: f64) -> bool {
    hash_unit(question) < alpha
}

pub(crate) fn hash_unit(question: &[u32]) -> f64 {
    let bytes: Vec<u8> = question.iter().flat_map(|t| t.to_le_bytes()).collect();
    (stable_hash(&bytes) >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::RngCore;

    #[test]
    fn percentile_examples() {
        let l = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(lower_percentile(&l, 1.0), 5.0);
        assert_eq!(lower_percentile(&l, 0.4), 2.0);
        assert_eq!(lower_percentile(&l, 0.01), 1.0);
        for a in [0.1, 0.5, 0.9, 1.0] {
            assert_eq!(lower_percentile(&[3.0; 7], a), 3.0);
        }
    }

    #[test]
    fn rank_is_exact_at_grid_points() {
        // 0.3 * 10 is 3.0000000000000004 in binary floating point
        assert_eq!(rank(0.3, 10), 3);
        assert_eq!(rank(0.7, 10), 7);
        assert_eq!(rank(0.35, 10), 4);
        assert_eq!(rank(1e-9, 10), 1);
    }

    #[test]
    fn lossh_examples() {
        let l = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(select_lossh(&l, 0.4), vec![false, true, false, true, false]);
        assert!(select_lossh(&l, 1.0).iter().all(|&k| k));
        // ties at the threshold are all kept
        let t = [1.0, 2.0, 2.0, 2.0, 9.0];
        assert_eq!(select_lossh(&t, 0.4).iter().filter(|&&k| k).count(), 4);
    }

    #[test]
    fn losshf_boundaries() {
        assert_eq!(losshf_keep_prob(2.0, 2.0), 1.0);
        assert_eq!(losshf_keep_prob(0.0, 2.0), 0.0);
        assert_eq!(losshf_keep_prob(3.0, 2.0), 0.0);
        assert_eq!(losshf_keep_prob(0.0, 0.0), 1.0);
        assert_eq!(losshf_keep_prob(1.0, 4.0), 0.25);
    }

    #[test]
    fn losshf_skips_rng_for_certain_outcomes() {
        let mut a = seeded(1);
        let mut b = seeded(1);
        // probabilities are 0 (above tau) or 1 (at tau)
        select_losshf(&[1.0, 1.0, 5.0], 0.5, &mut a);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn oracle_example() {
        let w = [12.0 / 25.0, 6.0 / 25.0, 4.0 / 25.0, 3.0 / 25.0];
        let wt = oracle_threshold(&w, 0.5);
        assert!((wt - 6.0 / 25.0).abs() < 1e-15);
        let head = oracle_keep_probs(&w, 0.5, SelectionMode::OracleHead);
        assert_eq!(head, vec![1.0, 1.0, 0.0, 0.0]);
        let hf = oracle_keep_probs(&w, 0.5, SelectionMode::OracleHeadFlattened);
        assert!((hf[0] - 0.5).abs() < 1e-15 && (hf[1] - 1.0).abs() < 1e-15);
        assert_eq!(&hf[2..], &[0.0, 0.0]);
        let fl = oracle_keep_probs(&w, 0.5, SelectionMode::OracleFlattened);
        assert!((fl[0] - 0.5).abs() < 1e-15);
        assert_eq!(&fl[1..], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn oracle_uniform_weights_are_symmetric() {
        let w = [0.2; 5];
        for mode in [
            SelectionMode::OracleHead,
            SelectionMode::OracleFlattened,
            SelectionMode::OracleHeadFlattened,
        ] {
            let p = oracle_keep_probs(&w, 0.3, mode);
            assert!(p.iter().all(|&x| x == p[0]), "{mode}: {p:?}");
        }
    }

    #[test]
    fn hash_rule() {
        let q = [13u32, 14, 15];
        assert!(random_hash_select(&q, 1.0));
        let d = random_hash_select(&q, 0.5);
        for _ in 0..5 {
            assert_eq!(random_hash_select(&q, 0.5), d);
        }
        let u = hash_unit(&q);
        assert!((0.0..1.0).contains(&u));
    }
}
