use crate::theory::binary_entropy;
use crate::units::Nats;

/// Loss-based memorization lower bound `H - sum of conditional losses`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemBound {
    pub raw: Nats,
    /// `raw` clamped at zero.
    pub nats: Nats,
}

impl MemBound {
    pub fn bits(&self) -> f64 {
        self.nats.to_bits().0
    }
}

pub fn mem_bits_lower_bound(joint_entropy: Nats, conditional_losses: &[f64]) -> MemBound {
    let raw = joint_entropy.0 - conditional_losses.iter().sum::<f64>();
    MemBound {
        raw: Nats(raw),
        nats: Nats(raw.max(0.0)),
    }
}

/// Per-fact lower bound `H - sum(p * H[A | I = 0] + h(p))`, `p` the failure
/// probability and `h` the binary entropy.
pub fn fano_bound(joint_entropy: Nats, per_fact: &[(f64, Nats)]) -> Nats {
    let penalty: f64 = per_fact.iter().map(|&(p, h)| p * h.0 + binary_entropy(p).0).sum();
    Nats(joint_entropy.0 - penalty)
}

/// Training tokens divided by the total token count of all fact records.
pub fn exposures(tokens_seen: u64, total_fact_tokens: u64) -> f64 {
    assert!(total_fact_tokens > 0, "exposures over an empty table");
    tokens_seen as f64 / total_fact_tokens as f64
}
