use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::Serialize;

use super::config::{Dataset, ExperimentConfig};
use crate::error::{Error, Result};
use crate::metrics::{entropy_median_estimate, evaluate, evaluate_annotated, EvalReport, EVALS_HEADER};
use crate::model::{init_model, write_checkpoint, ModelState, StepStats};
use crate::rng::{stream, Stream};
use crate::selection::{
    accumulate_batch, token_level_masks, wiki_masks_from_losses, write_audit_log, AuditRow, Candidate, FactRule, AUDIT_HEADER,
};
use crate::synthdata::{sample_record, AnnotatedRecord, FactTable};
use crate::theory::{capacity_limit_facts, DEFAULT_BITS_PER_PARAM};

pub const RUN_LOG: &str = "run.log";
pub const EVALS: &str = "evals.csv";
pub const SUMMARY: &str = "summary.toml";
pub const CHECKPOINT: &str = "model.ckpt";
pub const AUDIT: &str = "audit.csv";
pub const CONFIG_ECHO: &str = "config.toml";
pub const RUN_LOG_HEADER: &str = "step,lr,mean_loss,sum_loss,grad_norm";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Parent directory for the run directory; `None` keeps everything in memory.
    pub out: Option<PathBuf>,
    /// Replace an existing run directory.
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Starved,
    NonFinite,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Starved => "starved",
            RunStatus::NonFinite => "nonfinite",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::Starved => 3,
            RunStatus::NonFinite => 4,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub status: RunStatus,
    pub failure: Option<Error>,
    pub reports: Vec<EvalReport>,
    pub trace: Vec<StepStats>,
    pub tokens_seen: u64,
    pub state: ModelState,
    pub table: FactTable,
    /// Conditional loss of each fact at its first training visit during the
    /// first pass over the fact tokens.
    pub first_visit_losses: Vec<f64>,
    /// Selection audit rows, kept only when the config asks for them.
    pub audit: Vec<AuditRow>,
    /// Masked-selection steps that kept no answer tokens.
    pub degenerate_steps: u64,
}

impl RunOutcome {
    pub fn final_report(&self) -> Option<&EvalReport> {
        self.reports.last()
    }
}

struct Sinks {
    dir: PathBuf,
    run_log: File,
    evals: File,
    audit: Option<File>,
}

fn append(path: &Path, header: &str) -> Result<File> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(format!("{header}\n").as_bytes())?;
    Ok(f)
}

impl Sinks {
    fn open(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Option<Self>> {
        let Some(out) = &opts.out else { return Ok(None) };
        let dir = cfg.run_dir(out);
        if dir.exists() {
            if !opts.force {
                return Err(Error::AlreadyExists(dir));
            }
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(CONFIG_ECHO), cfg.to_toml())?;
        Ok(Some(Sinks {
            run_log: append(&dir.join(RUN_LOG), RUN_LOG_HEADER)?,
            evals: append(&dir.join(EVALS), EVALS_HEADER)?,
            audit: if cfg.audit {
                Some(append(&dir.join(AUDIT), AUDIT_HEADER)?)
            } else {
                None
            },
            dir,
        }))
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    run_id: &'a str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    steps_completed: u64,
    tokens_seen: u64,
    param_count: usize,
    n_facts: usize,
    capacity_facts: f64,
    seed: u64,
    data_seed: u64,
    degenerate_steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    entropy_median_estimate: Option<f64>,
    #[serde(rename = "final", skip_serializing_if = "Option::is_none")]
    final_report: Option<&'a EvalReport>,
}

/// Capacity in facts of the run's model at the empirical bits-per-parameter
/// constant, for facts of the table's mean entropy.
pub fn run_capacity(param_count: usize, table: &FactTable) -> f64 {
    let mean_bits = table.joint_entropy().to_bits().0 / table.len() as f64;
    capacity_limit_facts(param_count as f64, DEFAULT_BITS_PER_PARAM, crate::units::Bits(mean_bits))
}

/// Trains one configuration end to end. Starvation and non-finite failures
/// end the run early; they are reported in the outcome and the summary with
/// every artifact written so far preserved.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let Dataset { table, corpus } = cfg.data.build(cfg.seed, cfg.model.context)?;
    let mut sinks = Sinks::open(cfg, opts)?;
    let mut state = init_model(cfg.model, cfg.seed)?;
    let mut data_rng = stream(cfg.seed, Stream::DataSampling);
    let mut sel_rng = stream(cfg.seed, Stream::Selection);
    let rule = FactRule::new(&cfg.selection, &table);
    let dist = table.distribution();
    let total_fact_tokens = table.total_record_tokens();
    let b = cfg.train.batch_size;

    let mut out = RunOutcome {
        run_id: cfg.run_id.clone(),
        status: RunStatus::Completed,
        failure: None,
        reports: Vec::new(),
        trace: Vec::with_capacity(cfg.train.steps as usize),
        tokens_seen: 0,
        state: state.clone(),
        table: table.clone(),
        first_visit_losses: Vec::new(),
        audit: Vec::new(),
        degenerate_steps: 0,
    };
    let mut visited = vec![false; table.len()];

    for step in 1..=cfg.train.steps {
        let result = match &corpus {
            None => {
                let mut sample = || {
                    let (fact, tokens) = sample_record(&dist, &table, &mut data_rng);
                    Candidate { fact, tokens }
                };
                accumulate_batch(&mut sample, &state.model, &cfg.selection, rule.as_ref(), b, step, &mut sel_rng)
                    .and_then(|batch| {
                        if let Some(sinks) = sinks.as_mut().and_then(|s| s.audit.as_mut()) {
                            let mut buf = Vec::new();
                            write_audit_log(&batch.audit, false, &mut buf)?;
                            sinks.write_all(&buf)?;
                        }
                        if cfg.audit {
                            out.audit.extend_from_slice(&batch.audit);
                        }
                        let first_epoch = out.tokens_seen < total_fact_tokens;
                        let facts: Vec<usize> = batch.records.iter().map(|c| c.fact).collect();
                        let seqs = batch.tokens();
                        let firsts = &mut out.first_visit_losses;
                        let visited = &mut visited;
                        let stats = state.train_step_with(&seqs, &cfg.train, |fwd| {
                            if first_epoch {
                                let losses = fwd.token_losses();
                                for (l, &f) in losses.iter().zip(&facts) {
                                    if !visited[f] {
                                        visited[f] = true;
                                        firsts.push(l[table.context_len(f) - 1..].iter().sum());
                                    }
                                }
                            }
                            (0..fwd.num_sequences())
                                .map(|s| vec![1.0; fwd.seq_len(s) - 1])
                                .collect()
                        })?;
                        let tokens: u64 = seqs.iter().map(|s| s.len() as u64).sum();
                        Ok((stats, tokens))
                    })
            }
            Some((train, _)) => {
                let batch: Vec<AnnotatedRecord> =
                    (0..b).map(|_| train[data_rng.gen_range(0..train.len())].clone()).collect();
                let seqs: Vec<&[u32]> = batch.iter().map(|r| r.tokens.as_slice()).collect();
                let mode = cfg.selection.mode;
                let alpha = cfg.selection.alpha;
                let token_level = cfg.selection.token_level;
                let mut degenerate = false;
                let mut mask_err = None;
                let stats = state.train_step_with(&seqs, &cfg.train, |fwd| {
                    if mode.is_wiki() {
                        let losses = fwd.token_losses();
                        let mask = if token_level {
                            token_level_masks(&batch, &losses, alpha, mode, &mut sel_rng)
                        } else {
                            wiki_masks_from_losses(&batch, &losses, alpha, mode, &mut sel_rng)
                        };
                        match mask {
                            Ok(m) => {
                                degenerate = m.is_degenerate();
                                return m.weights;
                            }
                            Err(e) => mask_err = Some(e),
                        }
                    }
                    (0..fwd.num_sequences())
                        .map(|s| vec![1.0; fwd.seq_len(s) - 1])
                        .collect()
                });
                if let Some(e) = mask_err {
                    return Err(e);
                }
                out.degenerate_steps += u64::from(degenerate);
                stats.map(|s| (s, seqs.iter().map(|s| s.len() as u64).sum()))
            }
        };
        let (stats, tokens) = match result {
            Ok(x) => x,
            Err(e @ Error::Starvation { .. }) => {
                out.status = RunStatus::Starved;
                out.failure = Some(e);
                break;
            }
            Err(e @ Error::NonFinite { .. }) => {
                out.status = RunStatus::NonFinite;
                out.failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        out.tokens_seen += tokens;
        out.trace.push(stats);
        if let Some(s) = sinks.as_mut() {
            let line = format!(
                "{},{},{},{},{}\n",
                stats.step, stats.lr, stats.mean_loss, stats.sum_loss, stats.grad_norm
            );
            s.run_log.write_all(line.as_bytes())?;
        }
        if step % cfg.eval_every == 0 || step == cfg.train.steps {
            let report = match &corpus {
                None => evaluate(&state.model, &table, out.tokens_seen, &cfg.run_id, step)?,
                Some((_, probe)) => {
                    evaluate_annotated(&state.model, &table, probe, out.tokens_seen, &cfg.run_id, step)?
                }
            };
            log::info!(
                "{} step {step}: loss {:.4} acc {:.4} count {:.1}",
                cfg.run_id,
                stats.mean_loss,
                report.fact_acc,
                report.acc_count
            );
            if let Some(s) = sinks.as_mut() {
                report.write_csv(false, &mut s.evals)?;
            }
            out.reports.push(report);
        }
    }
    out.state = state;

    if let Some(s) = &sinks {
        if out.status != RunStatus::NonFinite {
            let f = File::create(s.dir.join(CHECKPOINT))?;
            write_checkpoint(&out.state.model, out.state.step, cfg.seed, std::io::BufWriter::new(f))?;
        }
        let summary = Summary {
            run_id: &cfg.run_id,
            status: out.status.name(),
            error: out.failure.as_ref().map(ToString::to_string),
            steps_completed: out.state.step,
            tokens_seen: out.tokens_seen,
            param_count: out.state.model.param_count(),
            n_facts: table.len(),
            capacity_facts: run_capacity(out.state.model.param_count(), &table),
            seed: cfg.seed,
            data_seed: cfg.data.data_seed(cfg.seed),
            degenerate_steps: out.degenerate_steps,
            entropy_median_estimate: (!out.first_visit_losses.is_empty())
                .then(|| entropy_median_estimate(&out.first_visit_losses)),
            final_report: out.final_report(),
        };
        let text = toml::to_string(&summary).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(s.dir.join(SUMMARY), text)?;
    }
    Ok(out)
}
