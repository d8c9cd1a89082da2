//! Loss-based data selection: LossH / LossHF with pool accumulation, their
//! masked Wiki variants, oracle baselines and the content-hash baseline.

pub mod accumulate;
pub mod audit;
pub mod policy;
pub mod rules;
pub mod wiki;

pub use accumulate::{accumulate_batch, Candidate, FactRule, SelectedBatch};
pub use audit::{read_audit_log, record_hash, write_audit_log, AuditRow, AUDIT_HEADER};
pub use policy::{SelectionMode, SelectionPolicy, DEFAULT_MAX_ROUNDS};
pub use rules::{
    lower_percentile, losshf_keep_prob, oracle_keep_prob, oracle_keep_probs, oracle_select, oracle_threshold,
    random_hash_select, select_lossh, select_losshf,
};
pub use wiki::{span_losses, token_level_masks, wiki_masks_from_losses, wiki_select_masks, SelectionMask};
