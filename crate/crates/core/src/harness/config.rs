use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};
use crate::rng::derive_seed;
use crate::selection::{SelectionMode, SelectionPolicy};
use crate::synthdata::vocab::{ANNOTATED_SIZE, BASE_SIZE};
use crate::synthdata::{
    difficulty_grid, generate_annotated_corpus, generate_fact_table, generate_heterogeneous_mixture,
    generate_probe_corpus, AnnotatedRecord, CorpusSpec, FactTable, FactTemplate,
};

/// Which fact world a run trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Phonebook records `bos question | answer eos`.
    Phonebook {
        #[serde(default = "d_prefix")]
        prefix_len: usize,
        #[serde(default = "d_suffix")]
        suffix_len: usize,
        n_facts: usize,
        #[serde(default)]
        beta: f64,
        /// Defaults to a seed derived from the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Equal-sized phonebook groups of different difficulty.
    Mixture {
        facts_per_group: usize,
        #[serde(default = "d_beta_one")]
        beta: f64,
        /// `[prefix_len, suffix_len]` per group; defaults to the 4x4 grid.
        #[serde(default)]
        groups: Option<Vec<[usize; 2]>>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Fact units embedded in filler, answers wrapped in markers.
    Annotated {
        #[serde(default = "d_prefix")]
        prefix_len: usize,
        #[serde(default = "d_suffix")]
        suffix_len: usize,
        n_facts: usize,
        #[serde(default)]
        beta: f64,
        n_records: usize,
        facts_per_record: usize,
        filler_min: usize,
        filler_max: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn d_prefix() -> usize {
    6
}
fn d_suffix() -> usize {
    22
}
fn d_beta_one() -> f64 {
    1.0
}

/// Materialized training data for one run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: FactTable,
    /// Training corpus and held-out probe corpus for annotated data.
    pub corpus: Option<(Vec<AnnotatedRecord>, Vec<AnnotatedRecord>)>,
}

impl DataSpec {
    pub fn beta(&self) -> f64 {
        match self {
            DataSpec::Phonebook { beta, .. } | DataSpec::Mixture { beta, .. } | DataSpec::Annotated { beta, .. } => {
                *beta
            }
        }
    }

    pub fn set_beta(&mut self, b: f64) {
        match self {
            DataSpec::Phonebook { beta, .. } | DataSpec::Mixture { beta, .. } | DataSpec::Annotated { beta, .. } => {
                *beta = b
            }
        }
    }

    pub fn n_facts(&self) -> usize {
        match self {
            DataSpec::Phonebook { n_facts, .. } | DataSpec::Annotated { n_facts, .. } => *n_facts,
            DataSpec::Mixture {
                facts_per_group, groups, ..
            } => facts_per_group * groups.as_ref().map_or(16, Vec::len),
        }
    }

    pub fn set_n_facts(&mut self, n: usize) -> Result<()> {
        match self {
            DataSpec::Phonebook { n_facts, .. } | DataSpec::Annotated { n_facts, .. } => {
                *n_facts = n;
                Ok(())
            }
            DataSpec::Mixture { .. } => Err(Error::config("mixture size is set per group")),
        }
    }

    pub fn is_annotated(&self) -> bool {
        matches!(self, DataSpec::Annotated { .. })
    }

    pub fn vocab_size(&self) -> usize {
        if self.is_annotated() {
            ANNOTATED_SIZE
        } else {
            BASE_SIZE
        }
    }

    fn explicit_seed(&self) -> Option<u64> {
        match self {
            DataSpec::Phonebook { seed, .. } | DataSpec::Mixture { seed, .. } | DataSpec::Annotated { seed, .. } => {
                *seed
            }
        }
    }

    pub fn data_seed(&self, run_seed: u64) -> u64 {
        self.explicit_seed().unwrap_or_else(|| derive_seed(run_seed, "data"))
    }

    pub fn templates(&self) -> Result<Vec<FactTemplate>> {
        match self {
            DataSpec::Phonebook {
                prefix_len, suffix_len, ..
            }
            | DataSpec::Annotated {
                prefix_len, suffix_len, ..
            } => Ok(vec![FactTemplate::new(*prefix_len, *suffix_len)?]),
            DataSpec::Mixture { groups, .. } => match groups {
                None => Ok(difficulty_grid()),
                Some(g) => g.iter().map(|&[p, s]| FactTemplate::new(p, s)).collect(),
            },
        }
    }

    /// Longest sequence the model will see.
    pub fn max_sequence_len(&self) -> Result<usize> {
        let t = self.templates()?;
        Ok(match self {
            DataSpec::Annotated { .. } => 0,
            _ => t.iter().map(FactTemplate::record_len).max().unwrap_or(0),
        })
    }

    pub fn corpus_spec(&self, context_len: usize) -> Option<CorpusSpec> {
        match self {
            DataSpec::Annotated {
                n_records,
                facts_per_record,
                filler_min,
                filler_max,
                ..
            } => Some(CorpusSpec {
                n_records: *n_records,
                facts_per_record: *facts_per_record,
                filler_min: *filler_min,
                filler_max: *filler_max,
                context_len,
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.templates()?;
        if t.is_empty() || self.n_facts() == 0 {
            return Err(Error::config("data needs at least one fact"));
        }
        if !(self.beta() >= 0.0 && self.beta().is_finite()) {
            return Err(Error::config("beta must be finite and non-negative"));
        }
        if let Some(spec) = self.corpus_spec(usize::MAX) {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn build(&self, run_seed: u64, context_len: usize) -> Result<Dataset> {
        let seed = self.data_seed(run_seed);
        let templates = self.templates()?;
        let table = match self {
            DataSpec::Mixture { facts_per_group, beta, .. } => {
                generate_heterogeneous_mixture(&templates, *facts_per_group, *beta, seed)?
            }
            _ => generate_fact_table(templates[0], self.n_facts(), self.beta(), seed)?,
        };
        let corpus = match self.corpus_spec(context_len) {
            Some(spec) => {
                let train = generate_annotated_corpus(&table, &spec, seed)?;
                let probe = generate_probe_corpus(&table, &spec, derive_seed(seed, "held-out"))?;
                Some((train, probe))
            }
            None => None,
        };
        Ok(Dataset { table, corpus })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    #[serde(default)]
    pub seed: u64,
    /// Steps between evaluations; the final step is always evaluated.
    #[serde(default = "d_eval")]
    pub eval_every: u64,
    /// Write the selection audit log.
    #[serde(default)]
    pub audit: bool,
    pub data: DataSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub selection: SelectionPolicy,
}

fn d_eval() -> u64 {
    500
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\', ',']) || self.run_id == "." || self.run_id == ".." {
            return Err(Error::config(format!("run_id {:?} is not a plain name", self.run_id)));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be positive"));
        }
        self.data.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.selection.validate(self.train.batch_size)?;
        if self.model.vocab != self.data.vocab_size() {
            return Err(Error::config(format!(
                "model vocab {} does not match the data vocabulary of {}",
                self.model.vocab,
                self.data.vocab_size()
            )));
        }
        let longest = self.data.max_sequence_len()?;
        if longest > self.model.context {
            return Err(Error::config(format!(
                "records of {longest} tokens exceed the model context of {}",
                self.model.context
            )));
        }
        let mode = self.selection.mode;
        if self.data.is_annotated() {
            if !(mode == SelectionMode::Full || mode.is_wiki()) {
                return Err(Error::config(format!("{mode} does not apply to annotated data")));
            }
        } else if mode.is_wiki() {
            return Err(Error::config(format!("{mode} needs annotated data")));
        }
        Ok(())
    }

    pub fn run_dir(&self, out: &Path) -> PathBuf {
        out.join(&self.run_id)
    }
}
