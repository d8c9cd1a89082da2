use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::powerlaw::PowerLawDist;
use super::vocab::{Vocab, BOS, EOS, SEP};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::units::Nats;

pub const QUESTION_ALPHABET: usize = 26;
pub const ANSWER_ALPHABET: usize = 10;

/// Shape of a phonebook fact: `<bos>` + `prefix_len` letters + `|` +
/// `suffix_len` digits + `<eos>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactTemplate {
    pub prefix_len: usize,
    pub suffix_len: usize,
}

impl Default for FactTemplate {
    fn default() -> Self {
        FactTemplate {
            prefix_len: 6,
            suffix_len: 22,
        }
    }
}

impl FactTemplate {
    pub fn new(prefix_len: usize, suffix_len: usize) -> Result<Self> {
        let t = FactTemplate {
            prefix_len,
            suffix_len,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prefix_len == 0 || self.suffix_len == 0 {
            return Err(Error::config(format!(
                "template ({}, {}) needs prefix_len >= 1 and suffix_len >= 1",
                self.prefix_len, self.suffix_len
            )));
        }
        Ok(())
    }

    /// Entropy of one uniformly drawn answer.
    pub fn answer_entropy(&self) -> Nats {
        Nats(self.suffix_len as f64 * (ANSWER_ALPHABET as f64).ln())
    }

    pub fn record_len(&self) -> usize {
        self.prefix_len + self.suffix_len + 3
    }

    /// Number of distinct questions, saturating at `u128::MAX`.
    pub fn name_space(&self) -> u128 {
        (0..self.prefix_len).fold(1u128, |acc, _| acc.saturating_mul(QUESTION_ALPHABET as u128))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub question: Vec<u32>,
    pub answer: Vec<u32>,
    /// Index into [`FactTable::templates`].
    pub group: usize,
}

/// A realized world: an ordered list of facts plus their sampling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FactTable {
    pub facts: Vec<Fact>,
    pub weights: Vec<f64>,
    pub templates: Vec<FactTemplate>,
    pub beta: f64,
    pub seed: u64,
}

impl FactTable {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn template_of(&self, i: usize) -> FactTemplate {
        self.templates[self.facts[i].group]
    }

    /// Per-fact answer entropy `b_i`.
    pub fn fact_entropy(&self, i: usize) -> Nats {
        self.template_of(i).answer_entropy()
    }

    /// Joint answer entropy, exact because answers are independent.
    pub fn joint_entropy(&self) -> Nats {
        (0..self.len()).map(|i| self.fact_entropy(i)).sum()
    }

    /// Full training record for fact `i`.
    pub fn record(&self, i: usize) -> Vec<u32> {
        let f = &self.facts[i];
        let mut r = Vec::with_capacity(f.question.len() + f.answer.len() + 3);
        r.push(BOS);
        r.extend_from_slice(&f.question);
        r.push(SEP);
        r.extend_from_slice(&f.answer);
        r.push(EOS);
        r
    }

    /// Length of the context (`<bos>`, question, `|`) preceding the answer.
    pub fn context_len(&self, i: usize) -> usize {
        self.facts[i].question.len() + 2
    }

    /// Total token count across one record of every fact.
    pub fn total_record_tokens(&self) -> u64 {
        self.facts
            .iter()
            .map(|f| (f.question.len() + f.answer.len() + 3) as u64)
            .sum()
    }

    pub fn distribution(&self) -> PowerLawDist {
        PowerLawDist::from_weights(self.beta, self.weights.clone())
    }

    pub fn max_record_len(&self) -> usize {
        self.templates.iter().map(|t| t.record_len()).max().unwrap_or(0)
    }

    pub fn question_string(&self, i: usize) -> String {
        Vocab::base()
            .decode(&self.facts[i].question)
            .expect("questions only hold letters")
    }
}

fn decode_question(mut index: u128, len: usize) -> Vec<u32> {
    let mut q = vec![0u32; len];
    for slot in q.iter_mut().rev() {
        *slot = Vocab::letter((index % QUESTION_ALPHABET as u128) as u8);
        index /= QUESTION_ALPHABET as u128;
    }
    q
}

fn uniform_u128<R: Rng + ?Sized>(rng: &mut R, bound: u128) -> u128 {
    if bound <= u64::MAX as u128 {
        u128::from(rng.gen_range(0..bound as u64))
    } else {
        rng.gen_range(0..bound)
    }
}

/// Draws `n` distinct question indices from `[0, space)` with Floyd's
/// algorithm, then shuffles them into a uniformly random order.
fn distinct_indices<R: Rng + ?Sized>(rng: &mut R, space: u128, n: usize) -> Vec<u128> {
    let mut chosen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let n128 = n as u128;
    for j in (space - n128)..space {
        let t = uniform_u128(rng, j + 1);
        let pick = if chosen.contains(&t) { j } else { t };
        chosen.insert(pick);
        out.push(pick);
    }
    out.shuffle(rng);
    out
}

fn random_answer<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<u32> {
    (0..len)
        .map(|_| Vocab::digit(rng.gen_range(0..ANSWER_ALPHABET as u8)))
        .collect()
}

/// Generates `n` facts with distinct questions and i.i.d. uniform answers.
/// Weights follow a power law with exponent `beta` over table order.
pub fn generate_fact_table(
    template: FactTemplate,
    n: usize,
    beta: f64,
    seed: u64,
) -> Result<FactTable> {
    template.validate()?;
    let space = template.name_space();
    if n as u128 > space {
        return Err(Error::NameSpaceExhausted {
            requested: n as u128,
            available: space,
        });
    }
    if n == 0 {
        return Err(Error::config("fact table needs at least one fact"));
    }
    let mut rng = seeded(derive_seed(seed, "fact-table"));
    let questions = distinct_indices(&mut rng, space, n);
    let facts = questions
        .into_iter()
        .map(|q| Fact {
            question: decode_question(q, template.prefix_len),
            answer: random_answer(&mut rng, template.suffix_len),
            group: 0,
        })
        .collect();
    Ok(FactTable {
        facts,
        weights: PowerLawDist::new(n, beta).weights().to_vec(),
        templates: vec![template],
        beta,
        seed,
    })
}

pub const MAX_COLLISION_RETRIES: usize = 100;

/// Equal-sized groups of facts with different templates. Each group carries
/// its own power law with exponent `beta`; groups share mass equally.
pub fn generate_heterogeneous_mixture(
    group_templates: &[FactTemplate],
    facts_per_group: usize,
    beta: f64,
    seed: u64,
) -> Result<FactTable> {
    if group_templates.is_empty() || facts_per_group == 0 {
        return Err(Error::config("mixture needs at least one non-empty group"));
    }
    let mut rng = seeded(derive_seed(seed, "mixture"));
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut facts = Vec::with_capacity(group_templates.len() * facts_per_group);
    let group_dist = PowerLawDist::new(facts_per_group, beta);
    let mut weights = Vec::with_capacity(facts.capacity());
    let g = group_templates.len() as f64;
    for (group, t) in group_templates.iter().enumerate() {
        t.validate()?;
        let space = t.name_space();
        if facts_per_group as u128 > space {
            return Err(Error::NameSpaceExhausted {
                requested: facts_per_group as u128,
                available: space,
            });
        }
        let mut idx = distinct_indices(&mut rng, space, facts_per_group);
        for slot in idx.iter_mut() {
            let mut q = decode_question(*slot, t.prefix_len);
            let mut retries = 0;
            while seen.contains(&q) {
                if retries == MAX_COLLISION_RETRIES {
                    return Err(Error::QuestionCollision { retries });
                }
                retries += 1;
                *slot = uniform_u128(&mut rng, space);
                q = decode_question(*slot, t.prefix_len);
            }
            seen.insert(q.clone());
            facts.push(Fact {
                question: q,
                answer: random_answer(&mut rng, t.suffix_len),
                group,
            });
        }
        weights.extend(group_dist.weights().iter().map(|w| w / g));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(FactTable {
        facts,
        weights,
        templates: group_templates.to_vec(),
        beta,
        seed,
    })
}

/// The sixteen (prefix, suffix) groups of the heterogeneous difficulty mixture.
pub fn difficulty_grid() -> Vec<FactTemplate> {
    let mut out = Vec::with_capacity(16);
    for prefix_len in [6, 9, 12, 15] {
        for suffix_len in [12, 18, 24, 30] {
            out.push(FactTemplate {
                prefix_len,
                suffix_len,
            });
        }
    }
    out
}

/// Draws a fact index from `dist` and returns its full record.
pub fn sample_record<R: Rng + ?Sized>(
    dist: &PowerLawDist,
    table: &FactTable,
    rng: &mut R,
) -> (usize, Vec<u32>) {
    debug_assert_eq!(dist.len(), table.len());
    let i = dist.sample(rng);
    (i, table.record(i))
}
