//! Plain-text dataset files.
//!
//! Fact tables: one `#template prefix_len suffix_len beta N seed` header per
//! template group followed by that group's `question|answer` lines.
//! Annotated corpora: a `#vocab annotated 41` header and one record per line
//! of space-separated decimal token ids.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::annotated::AnnotatedRecord;
use super::facts::{Fact, FactTable, FactTemplate};
use super::powerlaw::PowerLawDist;
use super::vocab::{Vocab, ANNOTATED_SIZE};
use crate::error::{Error, Result};

pub fn write_fact_table<W: Write>(table: &FactTable, mut w: W) -> Result<()> {
    let vocab = Vocab::base();
    for (g, t) in table.templates.iter().enumerate() {
        let members: Vec<&Fact> = table.facts.iter().filter(|f| f.group == g).collect();
        writeln!(
            w,
            "#template {} {} {} {} {}",
            t.prefix_len,
            t.suffix_len,
            table.beta,
            members.len(),
            table.seed
        )?;
        let mut line = String::new();
        for f in members {
            line.clear();
            line.push_str(&vocab.decode(&f.question)?);
            line.push('|');
            line.push_str(&vocab.decode(&f.answer)?);
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

/// Reads a fact table. Weights are recomputed from the header exponent, per
/// group, with groups sharing mass equally.
pub fn read_fact_table<R: BufRead>(r: R) -> Result<FactTable> {
    let vocab = Vocab::base();
    let mut templates = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut facts = Vec::new();
    let mut beta = 0.0;
    let mut seed = 0;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let loc = || format!("line {}", lineno + 1);
        if let Some(rest) = line.strip_prefix("#template") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(Error::parse(loc(), "expected 5 header fields"));
            }
            let num = |i: usize| -> Result<usize> {
                parts[i]
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("bad integer {:?}", parts[i])))
            };
            templates.push(FactTemplate::new(num(0)?, num(1)?)?);
            beta = parts[2]
                .parse()
                .map_err(|_| Error::parse(loc(), "bad beta"))?;
            counts.push(num(3)?);
            seed = parts[4]
                .parse()
                .map_err(|_| Error::parse(loc(), "bad seed"))?;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let group = templates
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::parse(loc(), "fact line before any #template header"))?;
        let (q, a) = line
            .split_once('|')
            .ok_or_else(|| Error::parse(loc(), "missing '|'"))?;
        let t = templates[group];
        let question = vocab.encode(q)?;
        let answer = vocab.encode(a)?;
        if question.len() != t.prefix_len
            || answer.len() != t.suffix_len
            || !question.iter().all(|&x| Vocab::is_letter(x))
            || !answer.iter().all(|&x| Vocab::is_digit(x))
        {
            return Err(Error::parse(loc(), "fact does not match its template"));
        }
        facts.push(Fact {
            question,
            answer,
            group,
        });
    }
    for (g, &n) in counts.iter().enumerate() {
        let got = facts.iter().filter(|f| f.group == g).count();
        if got != n {
            return Err(Error::parse(
                format!("group {g}"),
                format!("header declares {n} facts, found {got}"),
            ));
        }
    }
    if facts.is_empty() {
        return Err(Error::parse("file", "no facts"));
    }
    let groups = templates.len() as f64;
    let mut weights = Vec::with_capacity(facts.len());
    for &n in &counts {
        weights.extend(PowerLawDist::new(n, beta).weights().iter().map(|w| w / groups));
    }
    Ok(FactTable {
        facts,
        weights,
        templates,
        beta,
        seed,
    })
}

pub fn write_corpus<W: Write>(records: &[AnnotatedRecord], mut w: W) -> Result<()> {
    writeln!(w, "#vocab annotated {ANNOTATED_SIZE}")?;
    let mut line = String::new();
    for r in records {
        line.clear();
        for (i, t) in r.tokens.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{t}").expect("writing to a String cannot fail");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<AnnotatedRecord>> {
    let vocab = Vocab::annotated();
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != format!("#vocab annotated {ANNOTATED_SIZE}") {
                return Err(Error::parse("line 1", "expected '#vocab annotated 41' header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let tokens = line
            .split(' ')
            .map(|s| {
                s.parse::<u32>()
                    .map_err(|_| Error::parse(format!("line {}", lineno + 1), "bad token id"))
            })
            .collect::<Result<Vec<_>>>()?;
        vocab.check(&tokens)?;
        out.push(AnnotatedRecord::from_tokens(tokens)?);
    }
    Ok(out)
}
