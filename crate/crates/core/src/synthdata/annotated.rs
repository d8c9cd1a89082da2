//! Mixed fact/filler corpus with marker-delimited answers.
//!
//! Each fact unit is laid out as
//! `filler... | question <|start_of_fact|> answer <|end_of_fact|>`
//! and a record is `<bos>` followed by one or more units and `<eos>`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::facts::FactTable;
use super::vocab::{Vocab, BOS, END_OF_FACT, EOS, SEP, START_OF_FACT};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Filler letters cycle through this pattern, always starting at its head.
pub const FILLER_PATTERN: &[u8] = b"thequickbrownfox";

/// One answer region. `context_end` is the index of the start-of-fact marker,
/// the answer occupies `answer_start..answer_end`, and `answer_end` is the
/// index of the end-of-fact marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSpan {
    pub context_end: usize,
    pub answer_start: usize,
    pub answer_end: usize,
}

impl FactSpan {
    pub fn answer_len(&self) -> usize {
        self.answer_end - self.answer_start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedRecord {
    pub tokens: Vec<u32>,
    pub spans: Vec<FactSpan>,
    /// Source fact index per span; empty when the record was parsed from disk.
    pub fact_ids: Vec<usize>,
}

impl AnnotatedRecord {
    pub fn from_tokens(tokens: Vec<u32>) -> Result<Self> {
        let spans = parse_spans(&tokens)?;
        Ok(AnnotatedRecord {
            tokens,
            spans,
            fact_ids: Vec::new(),
        })
    }

    pub fn answer_token_count(&self) -> usize {
        self.spans.iter().map(FactSpan::answer_len).sum()
    }

    /// Marks every token index that belongs to an answer span.
    pub fn answer_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.tokens.len()];
        for s in &self.spans {
            m[s.answer_start..s.answer_end].iter_mut().for_each(|x| *x = true);
        }
        m
    }
}

/// Recovers answer spans from marker tokens.
pub fn parse_spans(tokens: &[u32]) -> Result<Vec<FactSpan>> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tokens.iter().enumerate() {
        match (t, open) {
            (START_OF_FACT, None) => open = Some(i),
            (START_OF_FACT, Some(_)) => {
                return Err(Error::parse(format!("token {i}"), "nested start-of-fact"))
            }
            (END_OF_FACT, Some(s)) => {
                spans.push(FactSpan {
                    context_end: s,
                    answer_start: s + 1,
                    answer_end: i,
                });
                open = None;
            }
            (END_OF_FACT, None) => {
                return Err(Error::parse(format!("token {i}"), "unmatched end-of-fact"))
            }
            _ => {}
        }
    }
    if open.is_some() {
        return Err(Error::parse("end of record", "unterminated start-of-fact"));
    }
    Ok(spans)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_records: usize,
    pub facts_per_record: usize,
    pub filler_min: usize,
    pub filler_max: usize,
    pub context_len: usize,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.facts_per_record == 0 || self.n_records == 0 {
            return Err(Error::config("corpus needs records and facts per record"));
        }
        if self.filler_min > self.filler_max {
            return Err(Error::config("filler_min exceeds filler_max"));
        }
        Ok(())
    }
}

fn fact_unit(table: &FactTable, fact: usize, filler_len: usize) -> Vec<u32> {
    let f = &table.facts[fact];
    let mut unit = Vec::with_capacity(filler_len + f.question.len() + f.answer.len() + 3);
    unit.extend(
        FILLER_PATTERN
            .iter()
            .cycle()
            .take(filler_len)
            .map(|&c| Vocab::letter(c - b'a')),
    );
    unit.push(SEP);
    unit.extend_from_slice(&f.question);
    unit.push(START_OF_FACT);
    unit.extend_from_slice(&f.answer);
    unit.push(END_OF_FACT);
    unit
}

/// Builds the annotated corpus. Facts are drawn with replacement from the
/// table weights. A record that would exceed `context_len` is split between
/// fact units, never inside one.
pub fn generate_annotated_corpus(
    table: &FactTable,
    spec: &CorpusSpec,
    seed: u64,
) -> Result<Vec<AnnotatedRecord>> {
    spec.validate()?;
    let dist = table.distribution();
    let mut rng = seeded(derive_seed(seed, "annotated-corpus"));
    let mut out = Vec::with_capacity(spec.n_records);
    for _ in 0..spec.n_records {
        let units: Vec<(usize, Vec<u32>)> = (0..spec.facts_per_record)
            .map(|_| {
                let fact = dist.sample(&mut rng);
                let filler = rng.gen_range(spec.filler_min..=spec.filler_max);
                (fact, fact_unit(table, fact, filler))
            })
            .collect();
        pack_units(units, spec.context_len, &mut out)?;
    }
    Ok(out)
}

/// Held-out probe corpus: every fact of the table appears exactly once, in
/// shuffled order, with fresh filler. `spec.n_records` is ignored.
pub fn generate_probe_corpus(
    table: &FactTable,
    spec: &CorpusSpec,
    seed: u64,
) -> Result<Vec<AnnotatedRecord>> {
    spec.validate()?;
    let mut rng = seeded(derive_seed(seed, "probe-corpus"));
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.shuffle(&mut rng);
    let mut out = Vec::new();
    for chunk in order.chunks(spec.facts_per_record) {
        let units = chunk
            .iter()
            .map(|&fact| {
                let filler = rng.gen_range(spec.filler_min..=spec.filler_max);
                (fact, fact_unit(table, fact, filler))
            })
            .collect();
        pack_units(units, spec.context_len, &mut out)?;
    }
    Ok(out)
}

fn pack_units(
    units: Vec<(usize, Vec<u32>)>,
    context_len: usize,
    out: &mut Vec<AnnotatedRecord>,
) -> Result<()> {
    let mut tokens = vec![BOS];
    let mut ids = Vec::new();
    let flush = |tokens: &mut Vec<u32>, ids: &mut Vec<usize>, out: &mut Vec<AnnotatedRecord>| {
        tokens.push(EOS);
        let spans = parse_spans(tokens).expect("generated markers are balanced");
        out.push(AnnotatedRecord {
            tokens: std::mem::replace(tokens, vec![BOS]),
            spans,
            fact_ids: std::mem::take(ids),
        });
    };
    for (fact, unit) in units {
        if unit.len() + 2 > context_len {
            return Err(Error::SequenceTooLong {
                len: unit.len() + 2,
                context: context_len,
            });
        }
        if tokens.len() + unit.len() + 1 > context_len {
            flush(&mut tokens, &mut ids, out);
        }
        tokens.extend_from_slice(&unit);
        ids.push(fact);
    }
    flush(&mut tokens, &mut ids, out);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::facts::{generate_fact_table, FactTemplate};

    fn spec(n_records: usize, facts_per_record: usize, context_len: usize) -> CorpusSpec {
        CorpusSpec {
            n_records,
            facts_per_record,
            filler_min: 8,
            filler_max: 8,
            context_len,
        }
    }

    #[test]
    fn spans_per_record_and_round_trip() {
        let table = generate_fact_table(FactTemplate::new(4, 6).unwrap(), 50, 0.0, 1).unwrap();
        let corpus = generate_annotated_corpus(&table, &spec(20, 10, 1024), 2).unwrap();
        assert_eq!(corpus.len(), 20);
        for r in &corpus {
            assert_eq!(r.spans.len(), 10);
            assert_eq!(parse_spans(&r.tokens).unwrap(), r.spans);
            for (s, &f) in r.spans.iter().zip(&r.fact_ids) {
                assert_eq!(&r.tokens[s.answer_start..s.answer_end], &table.facts[f].answer[..]);
                assert_eq!(r.tokens[s.context_end], START_OF_FACT);
                assert_eq!(r.tokens[s.answer_end], END_OF_FACT);
            }
        }
    }

    #[test]
    fn markers_only_at_span_boundaries() {
        let table = generate_fact_table(FactTemplate::new(4, 6).unwrap(), 50, 1.0, 1).unwrap();
        let corpus = generate_annotated_corpus(&table, &spec(30, 5, 1024), 3).unwrap();
        for r in &corpus {
            let mask = r.answer_mask();
            for (i, &t) in r.tokens.iter().enumerate() {
                if t == START_OF_FACT || t == END_OF_FACT {
                    assert!(!mask[i]);
                    assert!(r
                        .spans
                        .iter()
                        .any(|s| s.context_end == i || s.answer_end == i));
                }
            }
            for w in r.spans.windows(2) {
                assert!(w[0].answer_end < w[1].context_end);
            }
        }
    }

    #[test]
    fn probe_corpus_covers_every_fact_once() {
        let table = generate_fact_table(FactTemplate::new(4, 6).unwrap(), 53, 1.0, 1).unwrap();
        let corpus = generate_probe_corpus(&table, &spec(1, 10, 1024), 5).unwrap();
        assert_eq!(corpus.len(), 6);
        let mut ids: Vec<usize> = corpus.iter().flat_map(|r| r.fact_ids.clone()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..53).collect::<Vec<_>>());
    }

    #[test]
    fn splits_between_facts_at_context_limit() {
        let table = generate_fact_table(FactTemplate::new(4, 6).unwrap(), 50, 0.0, 1).unwrap();
        // each unit is 8 + 1 + 4 + 1 + 6 + 1 = 21 tokens
        let corpus = generate_annotated_corpus(&table, &spec(3, 10, 64), 4).unwrap();
        assert!(corpus.len() > 3);
        let spans: usize = corpus.iter().map(|r| r.spans.len()).sum();
        assert_eq!(spans, 30);
        for r in &corpus {
            assert!(r.tokens.len() <= 64);
            assert_eq!(r.tokens[0], BOS);
            assert_eq!(*r.tokens.last().unwrap(), EOS);
        }
        assert!(matches!(
            generate_annotated_corpus(&table, &spec(1, 1, 20), 4),
            Err(Error::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn occurrence_histogram_matches_weights() {
        let table = generate_fact_table(FactTemplate::new(4, 4).unwrap(), 5000, 1.0, 5).unwrap();
        let corpus = generate_annotated_corpus(&table, &spec(20_000, 10, 4096), 6).unwrap();
        let mut counts = vec![0usize; table.len()];
        let mut total = 0usize;
        for r in &corpus {
            for &f in &r.fact_ids {
                counts[f] += 1;
                total += 1;
            }
        }
        for (c, w) in counts.iter().zip(&table.weights) {
            let mean = total as f64 * w;
            let sigma = (total as f64 * w * (1.0 - w)).sqrt();
            assert!((*c as f64 - mean).abs() <= 5.0 * sigma + 1e-9, "{c} vs {mean}");
        }
    }
}
