//! Seeded experiment runs and hyperparameter sweeps.

pub mod config;
pub mod run;
pub mod sweep;

pub use config::{DataSpec, Dataset, ExperimentConfig};
pub use run::{run_capacity, run_experiment, RunOptions, RunOutcome, RunStatus};
pub use sweep::{
    run_sweep, select_best_run, sweep_run_dirs, CandidateRun, Objective, PointKey, SweepOutcome, SweepPoint, SweepRow, SweepSpec,
    SWEEP_CSV, SWEEP_HEADER,
};
