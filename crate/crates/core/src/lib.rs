//! Desk-scale laboratory for fact memorization capacity in small language models.
//!
//! The crate is organized around five subsystems:
//!
//! - [`synthdata`]: synthetic phonebook fact worlds, power-law sampling,
//!   heterogeneous mixtures and an annotated fact/filler corpus.
//! - [`model`]: a from-scratch decoder-only transformer with hand-written
//!   backpropagation, AdamW and a warmup-cosine schedule.
//! - [`selection`]: loss-based record and fact selection (LossH / LossHF and
//!   their masked variants), oracle baselines and a content-hash baseline.
//! - [`metrics`]: fact accuracy, memorization lower bounds, exposures,
//!   Spearman calibration and usage histograms.
//! - [`theory`]: closed-form capacity calculators and an exact brute-force
//!   mutual-information oracle over enumerable toy worlds.
//!
//! [`harness`] ties them together into seeded, reproducible experiments and
//! sweeps.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod selection;
pub mod synthdata;
pub mod theory;
pub mod units;

pub use error::{Error, Result};
pub use model::{ModelConfig, ModelState, TrainConfig};
pub use selection::{SelectionMode, SelectionPolicy};
pub use theory::TheoryInputs;
pub use metrics::EvalReport;
pub use synthdata::{AnnotatedRecord, FactTable, FactTemplate, PowerLawDist, Vocab};
pub use units::{Bits, Nats};
pub use harness::{ExperimentConfig, SweepSpec};
