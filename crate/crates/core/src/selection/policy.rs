use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ROUNDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum SelectionMode {
    #[default]
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "lossh")]
    LossH,
    #[serde(rename = "losshf")]
    LossHF,
    #[serde(rename = "oracle_head")]
    OracleHead,
    #[serde(rename = "oracle_flattened")]
    OracleFlattened,
    #[serde(rename = "oracle_head_flattened")]
    OracleHeadFlattened,
    #[serde(rename = "random_hash")]
    RandomHash,
    #[serde(rename = "lossh_wiki")]
    LossHWiki,
    #[serde(rename = "losshf_wiki")]
    LossHFWiki,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 9] = [
        SelectionMode::Full,
        SelectionMode::LossH,
        SelectionMode::LossHF,
        SelectionMode::OracleHead,
        SelectionMode::OracleFlattened,
        SelectionMode::OracleHeadFlattened,
        SelectionMode::RandomHash,
        SelectionMode::LossHWiki,
        SelectionMode::LossHFWiki,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::Full => "full",
            SelectionMode::LossH => "lossh",
            SelectionMode::LossHF => "losshf",
            SelectionMode::OracleHead => "oracle_head",
            SelectionMode::OracleFlattened => "oracle_flattened",
            SelectionMode::OracleHeadFlattened => "oracle_head_flattened",
            SelectionMode::RandomHash => "random_hash",
            SelectionMode::LossHWiki => "lossh_wiki",
            SelectionMode::LossHFWiki => "losshf_wiki",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown selection mode {s:?}")))
    }

    /// Modes that score records with the current model.
    pub fn is_loss_based(self) -> bool {
        matches!(
            self,
            SelectionMode::LossH | SelectionMode::LossHF | SelectionMode::LossHWiki | SelectionMode::LossHFWiki
        )
    }

    pub fn is_oracle(self) -> bool {
        matches!(
            self,
            SelectionMode::OracleHead | SelectionMode::OracleFlattened | SelectionMode::OracleHeadFlattened
        )
    }

    pub fn is_wiki(self) -> bool {
        matches!(self, SelectionMode::LossHWiki | SelectionMode::LossHFWiki)
    }

    /// Whether the loss rule keeps below-threshold items with probability
    /// proportional to their loss.
    pub fn is_flattening(self) -> bool {
        matches!(self, SelectionMode::LossHF | SelectionMode::LossHFWiki)
    }
}

impl std::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPolicy {
    #[serde(default)]
    pub mode: SelectionMode,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Records drawn per pool round; `None` means the target batch size.
    #[serde(default)]
    pub pool_batch: Option<usize>,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
    /// Negative control for the masked modes: select single answer tokens,
    /// ignoring fact boundaries.
    #[serde(default)]
    pub token_level: bool,
}

fn one() -> f64 {
    1.0
}

fn default_rounds() -> usize {
    DEFAULT_MAX_ROUNDS
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy::new(SelectionMode::Full, 1.0)
    }
}

impl SelectionPolicy {
    pub fn new(mode: SelectionMode, alpha: f64) -> Self {
        SelectionPolicy {
            mode,
            alpha,
            pool_batch: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
            token_level: false,
        }
    }

    pub fn full() -> Self {
        Self::new(SelectionMode::Full, 1.0)
    }

    pub fn with_pool(mut self, pool_batch: usize) -> Self {
        self.pool_batch = Some(pool_batch);
        self
    }

    pub fn pool_size(&self, target: usize) -> usize {
        self.pool_batch.unwrap_or(target)
    }

    pub fn validate(&self, target: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.pool_size(target) < target {
            return Err(Error::config(format!(
                "pool batch {} is smaller than the target batch {target}",
                self.pool_size(target)
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::config("max_rounds must be at least 1"));
        }
        if self.token_level && !self.mode.is_wiki() {
            return Err(Error::config("token_level applies only to the masked span modes"));
        }
        Ok(())
    }
}
