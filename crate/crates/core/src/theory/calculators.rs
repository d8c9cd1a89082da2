use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::FactTemplate;
use crate::units::{Bits, Nats};

/// Empirical storage constant in bits per parameter. Configuration, not a
/// theorem: the hard bound is `precision_bits` per parameter.
pub const DEFAULT_BITS_PER_PARAM: f64 = 2.0;

const QUESTION_ALPHABET: f64 = 26.0;
const ANSWER_ALPHABET: f64 = 10.0;

/// `-p ln p - (1 - p) ln(1 - p)` with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> Nats {
    let t = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    Nats(t(p) + t(1.0 - p))
}

/// Facts of `b` bits each that fit in `params * bits_per_param` bits.
pub fn capacity_limit_facts(params: f64, bits_per_param: f64, b: Bits) -> f64 {
    bits_per_param * params / b.0
}

/// `(ln|W| + N ln 2) / b`: the expected accurate fact count ceiling for `N`
/// independent uniform facts of entropy `b`.
pub fn acc_count_upper(ln_w: Nats, n_facts: f64, b: Nats) -> f64 {
    (ln_w.0 + n_facts * std::f64::consts::LN_2) / b.0
}

/// Answer entropy of one fact.
pub fn fact_entropy(template: &FactTemplate) -> Nats {
    Nats(template.suffix_len as f64 * ANSWER_ALPHABET.ln())
}

/// Average entropy per question-and-answer token.
pub fn per_token_entropy(template: &FactTemplate) -> Nats {
    let (p, s) = (template.prefix_len as f64, template.suffix_len as f64);
    if p + s == 0.0 {
        return Nats(0.0);
    }
    Nats((p * QUESTION_ALPHABET.ln() + s * ANSWER_ALPHABET.ln()) / (p + s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `beta = 0`: grows linearly in ln|W|.
    Linear,
    /// `0 < beta < 1`: grows like ln|W|^(1 - beta).
    Polynomial,
    /// `beta = 1`: grows like ln ln|W|.
    LogLog,
    /// `beta > 1`: approaches a constant.
    Saturating,
}

impl Regime {
    pub fn of(beta: f64) -> Self {
        if beta == 0.0 {
            Regime::Linear
        } else if beta < 1.0 {
            Regime::Polynomial
        } else if beta == 1.0 {
            Regime::LogLog
        } else {
            Regime::Saturating
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaScaling {
    /// `floor(ln|W| / b)`: the number of head facts that fit.
    pub head_facts: u64,
    /// `sum_{i <= head_facts} i^-beta`, proportional to the memorizable
    /// fraction of training data.
    pub partial_sum: f64,
    pub regime: Regime,
}

pub fn alpha_scaling(beta: f64, ln_w: Nats, b: Nats) -> Result<AlphaScaling> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::config(format!("power-law exponent must be finite and >= 0, got {beta}")));
    }
    let k = ln_w.0 / b.0;
    if !(k >= 1.0) || !k.is_finite() {
        return Err(Error::config(format!("ln|W| / b must be at least 1, got {k}")));
    }
    let head = k.floor() as u64;
    // smallest terms first
    let partial_sum = (1..=head).rev().map(|i| (i as f64).powf(-beta)).sum();
    Ok(AlphaScaling {
        head_facts: head,
        partial_sum,
        regime: Regime::of(beta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryInputs {
    pub params: f64,
    #[serde(default = "default_c")]
    pub bits_per_param: f64,
    pub fact_entropy: Nats,
    pub n_facts: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_precision")]
    pub precision_bits: u32,
}

fn default_c() -> f64 {
    DEFAULT_BITS_PER_PARAM
}

fn default_precision() -> u32 {
    32
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.params > 0.0 && self.bits_per_param > 0.0 && self.fact_entropy.0 > 0.0) {
            return Err(Error::config("params, bits_per_param and fact entropy must be positive"));
        }
        if !(self.n_facts >= 0.0) || self.precision_bits == 0 || self.beta < 0.0 {
            return Err(Error::config("n_facts, precision_bits and beta must be non-negative"));
        }
        Ok(())
    }

    /// Hard model-space bound `precision_bits * P * ln 2`.
    pub fn hard_ln_w(&self) -> Nats {
        Bits(f64::from(self.precision_bits) * self.params).to_nats()
    }

    /// Empirical model-space size `c * P * ln 2`.
    pub fn empirical_ln_w(&self) -> Nats {
        Bits(self.bits_per_param * self.params).to_nats()
    }

    pub fn capacity_facts(&self) -> f64 {
        capacity_limit_facts(self.params, self.bits_per_param, self.fact_entropy.to_bits())
    }

    pub fn acc_count_upper_hard(&self) -> f64 {
        acc_count_upper(self.hard_ln_w(), self.n_facts, self.fact_entropy)
    }

    pub fn acc_count_upper_empirical(&self) -> f64 {
        acc_count_upper(self.empirical_ln_w(), self.n_facts, self.fact_entropy)
    }

    pub fn alpha_scaling(&self) -> Result<AlphaScaling> {
        alpha_scaling(self.beta, self.empirical_ln_w(), self.fact_entropy)
    }
}
