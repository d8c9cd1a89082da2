use std::cmp::Ordering;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_experiment, RunOptions};
use crate::error::{Error, Result};
use crate::metrics::{convergence_point, EvalReport};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "alpha,batch_size,beta,n_facts,seed,objective,fact_acc,acc_count,mem_bits,exposures,status";

/// Quantity maximized over the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    AccCount,
    WeightedAcc,
}

impl Objective {
    pub fn of(self, r: &EvalReport) -> f64 {
        match self {
            Objective::AccCount => r.acc_count,
            Objective::WeightedAcc => r.weighted_acc,
        }
    }
}

fn d_alphas() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}
fn d_seeds() -> Vec<u64> {
    vec![0]
}
fn d_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    #[serde(default = "d_alphas")]
    pub alphas: Vec<f64>,
    /// Overrides the base batch size when present.
    #[serde(default)]
    pub batch_sizes: Option<Vec<usize>>,
    /// Overrides the base data exponent when present.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub objective: Objective,
    /// Worker threads; each grid point is an isolated run.
    #[serde(default = "d_jobs")]
    pub jobs: usize,
}

impl SweepSpec {
    pub fn new(base: ExperimentConfig) -> Self {
        SweepSpec {
            base,
            alphas: d_alphas(),
            batch_sizes: None,
            betas: None,
            seeds: d_seeds(),
            objective: Objective::default(),
            jobs: 1,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn batch_grid(&self) -> Vec<usize> {
        self.batch_sizes.clone().unwrap_or_else(|| vec![self.base.train.batch_size])
    }

    fn beta_grid(&self) -> Vec<f64> {
        self.betas.clone().unwrap_or_else(|| vec![self.base.data.beta()])
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("sweep grids must be non-empty"));
        }
        if self.batch_sizes.as_ref().is_some_and(Vec::is_empty) || self.betas.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::config("sweep grids must be non-empty"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be positive"));
        }
        for p in self.points() {
            for &seed in &self.seeds {
                self.config_for(&p, seed).validate()?;
            }
        }
        Ok(())
    }

    /// Grid points in sorted order.
    pub fn points(&self) -> Vec<PointKey> {
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &batch_size in &self.batch_grid() {
                for &beta in &self.beta_grid() {
                    out.push(PointKey { alpha, batch_size, beta });
                }
            }
        }
        out.sort_by(PointKey::cmp);
        out.dedup_by(|a, b| a.cmp(b) == Ordering::Equal);
        out
    }

    /// Config of one grid point and seed.
    pub fn config_for(&self, p: &PointKey, seed: u64) -> ExperimentConfig {
        let mut c = self.base.clone();
        c.selection.alpha = p.alpha;
        c.train.batch_size = p.batch_size;
        c.data.set_beta(p.beta);
        c.seed = seed;
        c.run_id = format!("{}_a{}_b{}_beta{}_s{}", self.base.run_id, p.alpha, p.batch_size, p.beta, seed);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointKey {
    pub alpha: f64,
    pub batch_size: usize,
    pub beta: f64,
}

impl PointKey {
    fn cmp(&self, o: &Self) -> Ordering {
        self.alpha
            .total_cmp(&o.alpha)
            .then(self.batch_size.cmp(&o.batch_size))
            .then(self.beta.total_cmp(&o.beta))
    }
}

/// One run of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: PointKey,
    pub n_facts: usize,
    pub seed: u64,
    /// NaN when the run failed before its first evaluation.
    pub objective: f64,
    pub fact_acc: f64,
    pub acc_count: f64,
    pub mem_bits: f64,
    pub exposures: f64,
    /// `completed`, `starved`, `nonfinite` or `error`.
    pub status: String,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.point.alpha,
            self.point.batch_size,
            self.point.beta,
            self.n_facts,
            self.seed,
            self.objective,
            self.fact_acc,
            self.acc_count,
            self.mem_bits,
            self.exposures,
            self.status
        )
    }

    pub fn is_completed(&self) -> bool {
        self.status == "completed"
    }
}

/// Seed-averaged objective of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub point: PointKey,
    /// Mean over completed seeds; NaN if none completed.
    pub objective: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
    /// Index into `points`; `None` when every point failed.
    pub best: Option<usize>,
}

impl SweepOutcome {
    pub fn best_point(&self) -> Option<&SweepPoint> {
        self.best.map(|i| &self.points[i])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn row_for(spec: &SweepSpec, p: PointKey, seed: u64, out: Option<&Path>) -> SweepRow {
    let cfg = spec.config_for(&p, seed);
    let n_facts = cfg.data.n_facts();
    let opts = RunOptions {
        out: out.map(Path::to_path_buf),
        force: false,
    };
    let nan = f64::NAN;
    let mut row = SweepRow {
        point: p,
        n_facts,
        seed,
        objective: nan,
        fact_acc: nan,
        acc_count: nan,
        mem_bits: nan,
        exposures: nan,
        status: "error".into(),
    };
    match run_experiment(&cfg, &opts) {
        Ok(o) => {
            row.status = o.status.name().into();
            if let Some(r) = o.final_report() {
                row.fact_acc = r.fact_acc;
                row.acc_count = r.acc_count;
                row.mem_bits = r.mem_bits;
                row.exposures = r.exposures;
                if o.failure.is_none() {
                    row.objective = spec.objective.of(r);
                }
            }
        }
        Err(e) => log::warn!("sweep point {} failed: {e}", cfg.run_id),
    }
    row
}

/// Runs every grid point for every seed, averages the objective over the
/// completed seeds of each point and picks the best point, breaking ties
/// toward larger alpha. Failed runs are recorded and do not stop the sweep.
/// With `out`, run directories go under it and `sweep.csv` is written there.
pub fn run_sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<SweepOutcome> {
    spec.validate()?;
    let jobs: Vec<(PointKey, u64)> = spec
        .points()
        .into_iter()
        .flat_map(|p| spec.seeds.iter().map(move |&s| (p, s)))
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(SWEEP_CSV);
        if csv.exists() {
            return Err(Error::AlreadyExists(csv));
        }
    }
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<SweepRow>> = Mutex::new(Vec::with_capacity(jobs.len()));
    std::thread::scope(|s| {
        for _ in 0..spec.jobs.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, AtomicOrdering::Relaxed);
                let Some(&(p, seed)) = jobs.get(i) else { break };
                let row = row_for(spec, p, seed, out);
                done.lock().expect("sweep worker panicked").push(row);
            });
        }
    });
    let mut rows = done.into_inner().expect("sweep worker panicked");
    rows.sort_by(|a, b| a.point.cmp(&b.point).then(a.seed.cmp(&b.seed)));

    let points: Vec<SweepPoint> = spec
        .points()
        .into_iter()
        .map(|p| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.point.cmp(&p) == Ordering::Equal).collect();
            let ok: Vec<f64> = mine.iter().filter(|r| r.is_completed()).map(|r| r.objective).collect();
            SweepPoint {
                point: p,
                objective: if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 },
                completed: ok.len(),
                failed: mine.len() - ok.len(),
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if p.completed == 0 {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let q = &points[j];
                let better = p.objective > q.objective || (p.objective == q.objective && p.point.alpha > q.point.alpha);
                Some(if better { i } else { j })
            }
        };
    }
    let outcome = SweepOutcome { rows, points, best };
    if let Some(dir) = out {
        outcome.write_csv(std::fs::File::create(dir.join(SWEEP_CSV))?)?;
    }
    Ok(outcome)
}

/// Loss trace of a candidate run with the tokens seen at each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRun {
    pub losses: Vec<f64>,
    pub tokens: Vec<u64>,
}

impl CandidateRun {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("candidate with an empty trace")
    }

    pub fn tokens_to_convergence(&self) -> u64 {
        self.tokens[convergence_point(&self.losses)]
    }
}

/// Keeps candidates whose final loss is within 2% multiplicative or 0.01
/// additive of the smallest final loss, then returns the index of the one
/// that converged in the fewest tokens (the earlier index on ties).
pub fn select_best_run(candidates: &[CandidateRun]) -> usize {
    assert!(!candidates.is_empty(), "select_best_run needs a candidate");
    let best = candidates.iter().map(CandidateRun::final_loss).fold(f64::INFINITY, f64::min);
    let cut = (best * 1.02).max(best + 0.01);
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.final_loss() <= cut)
        .min_by_key(|(i, c)| (c.tokens_to_convergence(), *i))
        .map(|(i, _)| i)
        .expect("the best candidate passes its own cut")
}

/// Run directories of a sweep rooted at `out`.
pub fn sweep_run_dirs(spec: &SweepSpec, out: &Path) -> Vec<PathBuf> {
    spec.points()
        .iter()
        .flat_map(|p| spec.seeds.iter().map(move |&s| spec.config_for(p, s).run_dir(out)))
        .collect()
}
