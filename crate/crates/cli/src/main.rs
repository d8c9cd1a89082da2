use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use factlab::harness::{run_experiment, run_sweep, ExperimentConfig, RunOptions, SweepSpec};
use factlab::metrics::{evaluate, evaluate_annotated};
use factlab::model::{grad_check, read_checkpoint, Transformer};
use factlab::rng::{stream, Stream};
use factlab::selection::SelectionMode;
use factlab::synthdata::io::{write_corpus, write_fact_table};
use factlab::synthdata::{sample_record, FactTemplate};
use factlab::theory::{fact_entropy, per_token_entropy, verify_random_worlds, TheoryInputs};
use factlab::{Error, Result};

#[derive(Parser)]
#[command(name = "factlab", version, about = "Fact memorization capacity laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Experiment fields that can be set from the command line.
#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_lr: Option<f64>,
    #[arg(long)]
    n_facts: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eval_every: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the fact table (and corpora for annotated data) of a config.
    GenData {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        set: Overrides,
    },
    /// Train one configuration.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        set: Overrides,
        /// Replace an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint against the data of its config.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        set: Overrides,
        /// Defaults to `<out>/<run_id>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run an alpha / batch-size / beta grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Closed-form capacity numbers.
    Theory {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: Option<f64>,
        #[arg(long)]
        bits_per_param: Option<f64>,
        #[arg(long, default_value_t = 6)]
        prefix_len: usize,
        #[arg(long, default_value_t = 22)]
        suffix_len: usize,
        #[arg(long)]
        n_facts: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        precision_bits: Option<u32>,
    },
    /// Finite-difference gradient check on a small model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Check a random subset of coordinates.
        #[arg(long)]
        max_coords: Option<usize>,
    },
    /// Check the Fano and model-count bounds on random toy worlds.
    ToyworldVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::GenData { common, set } => gen_data(&common, &set),
        Command::Train { common, set, force } => train(&common, &set, force),
        Command::Eval { common, set, checkpoint } => eval(&common, &set, checkpoint),
        Command::Sweep { common, jobs } => sweep(&common, jobs),
        Command::Theory {
            common,
            params,
            bits_per_param,
            prefix_len,
            suffix_len,
            n_facts,
            beta,
            precision_bits,
        } => {
            let mut inputs = match &common.config {
                Some(p) => load_theory(p)?,
                None => TheoryInputs {
                    params: 0.0,
                    bits_per_param: factlab::theory::DEFAULT_BITS_PER_PARAM,
                    fact_entropy: fact_entropy(&FactTemplate::new(prefix_len, suffix_len)?),
                    n_facts: 0.0,
                    beta: 0.0,
                    precision_bits: 32,
                },
            };
            if let Some(v) = params {
                inputs.params = v;
            }
            if let Some(v) = bits_per_param {
                inputs.bits_per_param = v;
            }
            if let Some(v) = n_facts {
                inputs.n_facts = v;
            }
            if let Some(v) = beta {
                inputs.beta = v;
            }
            if let Some(v) = precision_bits {
                inputs.precision_bits = v;
            }
            theory(&common, &inputs, FactTemplate::new(prefix_len, suffix_len)?)
        }
        Command::Gradcheck {
            common,
            epsilon,
            tolerance,
            max_coords,
        } => gradcheck(&common, epsilon, tolerance, max_coords),
        Command::ToyworldVerify { common, count } => toyworld_verify(&common, count),
    }
}

fn require_config(common: &Common) -> Result<&Path> {
    common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <file> is required".into()))
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn load_experiment(common: &Common, set: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(require_config(common)?)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(v) = &set.run_id {
        cfg.run_id = v.clone();
    }
    if let Some(v) = &set.mode {
        cfg.selection.mode = SelectionMode::parse(v)?;
    }
    if let Some(v) = set.alpha {
        cfg.selection.alpha = v;
    }
    if let Some(v) = set.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = set.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = set.max_lr {
        cfg.train.max_lr = v;
    }
    if let Some(v) = set.n_facts {
        cfg.data.set_n_facts(v)?;
    }
    if let Some(v) = set.beta {
        cfg.data.set_beta(v);
    }
    if let Some(v) = set.eval_every {
        cfg.eval_every = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gen_data(common: &Common, set: &Overrides) -> Result<u8> {
    let cfg = load_experiment(common, set)?;
    let data = cfg.data.build(cfg.seed, cfg.model.context)?;
    let dir = cfg.run_dir(&out_dir(common));
    std::fs::create_dir_all(&dir)?;
    write_fact_table(&data.table, BufWriter::new(File::create(dir.join("facts.txt"))?))?;
    if let Some((train, probe)) = &data.corpus {
        write_corpus(train, BufWriter::new(File::create(dir.join("train.corpus"))?))?;
        write_corpus(probe, BufWriter::new(File::create(dir.join("probe.corpus"))?))?;
    }
    println!("wrote {} facts to {}", data.table.len(), dir.display());
    Ok(0)
}

fn train(common: &Common, set: &Overrides, force: bool) -> Result<u8> {
    let cfg = load_experiment(common, set)?;
    let opts = RunOptions {
        out: Some(out_dir(common)),
        force,
    };
    let outcome = run_experiment(&cfg, &opts)?;
    if let Some(r) = outcome.final_report() {
        println!(
            "{}: step {} fact_acc {:.4} acc_count {:.2} mem_bits {:.1} exposures {:.2}",
            r.run_id, r.step, r.fact_acc, r.acc_count, r.mem_bits, r.exposures
        );
    }
    if let Some(e) = &outcome.failure {
        eprintln!("error: {e}");
    }
    Ok(outcome.status.exit_code() as u8)
}

fn eval(common: &Common, set: &Overrides, checkpoint: Option<PathBuf>) -> Result<u8> {
    let cfg = load_experiment(common, set)?;
    let path = checkpoint.unwrap_or_else(|| cfg.run_dir(&out_dir(common)).join("model.ckpt"));
    let ck = read_checkpoint(BufReader::new(File::open(&path)?))?;
    if *ck.model.config() != cfg.model {
        return Err(Error::Config(format!("{} does not match the model of the config", path.display())));
    }
    // data tables are keyed by the training seed
    let seed = if common.seed.is_some() { cfg.seed } else { ck.seed };
    let data = cfg.data.build(seed, cfg.model.context)?;
    let report = match &data.corpus {
        None => evaluate(&ck.model, &data.table, 0, &cfg.run_id, ck.step)?,
        Some((_, probe)) => evaluate_annotated(&ck.model, &data.table, probe, 0, &cfg.run_id, ck.step)?,
    };
    report.write_csv(true, std::io::stdout().lock())?;
    Ok(0)
}

fn sweep(common: &Common, jobs: Option<usize>) -> Result<u8> {
    let mut spec = SweepSpec::load(require_config(common)?)?;
    if let Some(s) = common.seed {
        spec.seeds = vec![s];
    }
    if let Some(j) = jobs {
        spec.jobs = j;
    }
    let out = out_dir(common);
    let outcome = run_sweep(&spec, Some(&out))?;
    for p in &outcome.points {
        println!(
            "alpha {} batch {} beta {}: objective {:.3} ({} ok, {} failed)",
            p.point.alpha, p.point.batch_size, p.point.beta, p.objective, p.completed, p.failed
        );
    }
    match outcome.best_point() {
        Some(b) => {
            println!("best: alpha {} batch {} beta {}", b.point.alpha, b.point.batch_size, b.point.beta);
            Ok(0)
        }
        None => {
            eprintln!("error: every sweep point failed");
            let starved = outcome.rows.iter().any(|r| r.status == "starved");
            Ok(if starved { 3 } else { 4 })
        }
    }
}

fn load_theory(path: &Path) -> Result<TheoryInputs> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Serialize)]
struct TheoryReport {
    inputs: TheoryInputs,
    fact_entropy_nats: f64,
    fact_entropy_bits: f64,
    per_token_entropy_nats: f64,
    capacity_facts: f64,
    hard_ln_w: f64,
    empirical_ln_w: f64,
    acc_count_upper_hard: f64,
    acc_count_upper_empirical: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    head_facts: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    head_partial_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regime: Option<String>,
}

fn theory(common: &Common, inputs: &TheoryInputs, template: FactTemplate) -> Result<u8> {
    inputs.validate()?;
    let scaling = inputs.alpha_scaling().ok();
    let report = TheoryReport {
        inputs: *inputs,
        fact_entropy_nats: inputs.fact_entropy.0,
        fact_entropy_bits: inputs.fact_entropy.to_bits().0,
        per_token_entropy_nats: per_token_entropy(&template).0,
        capacity_facts: inputs.capacity_facts(),
        hard_ln_w: inputs.hard_ln_w().0,
        empirical_ln_w: inputs.empirical_ln_w().0,
        acc_count_upper_hard: inputs.acc_count_upper_hard(),
        acc_count_upper_empirical: inputs.acc_count_upper_empirical(),
        head_facts: scaling.map(|s| s.head_facts),
        head_partial_sum: scaling.map(|s| s.partial_sum),
        regime: scaling.map(|s| format!("{:?}", s.regime)),
    };
    let text = toml::to_string(&report).map_err(|e| Error::Config(e.to_string()))?;
    let rows: Vec<(&str, String)> = text
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .filter(|(k, _)| !k.starts_with('['))
        .map(|(k, v)| (k, v.trim_matches('"').to_string()))
        .collect();
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        println!("{k:<width$}  {v}");
    }
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("theory.toml"), &text)?;
    }
    Ok(0)
}

fn gradcheck(common: &Common, epsilon: f64, tolerance: f64, max_coords: Option<usize>) -> Result<u8> {
    let seed = common.seed.unwrap_or(0);
    let cfg = match &common.config {
        Some(p) => {
            let mut c = ExperimentConfig::load(p)?;
            c.seed = seed;
            c
        }
        None => {
            let text = format!(
                "run_id = \"gradcheck\"\nseed = {seed}\n[data]\nkind = \"phonebook\"\nprefix_len = 3\nsuffix_len = 4\nn_facts = 8\n\
                 [model]\nlayers = 1\nheads = 2\nhidden = 16\ncontext = 16\nvocab = 39\n\
                 [train]\nsteps = 1\nbatch_size = 4\nmax_lr = 0.001\n[selection]\nmode = \"full\"\n"
            );
            ExperimentConfig::from_toml(&text)?
        }
    };
    if cfg.model.param_count() > 100_000 {
        log::warn!("checking {} parameters by finite differences", cfg.model.param_count());
    }
    let data = cfg.data.build(seed, cfg.model.context)?;
    let mut rng = stream(seed, Stream::DataSampling);
    let dist = data.table.distribution();
    let batch: Vec<Vec<u32>> = (0..cfg.train.batch_size.min(4))
        .map(|_| sample_record(&dist, &data.table, &mut rng).1)
        .collect();
    let weights: Vec<Vec<f64>> = batch.iter().map(|s| vec![1.0; s.len() - 1]).collect();
    let state = factlab::model::init_model(cfg.model, seed)?;
    let model: Transformer<f64> = state.model.cast();
    let r = grad_check(&model, &batch, &weights, epsilon, max_coords, seed)?;
    println!(
        "checked {} of {} parameters ({} skipped at ReLU kinks): max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
        r.checked,
        model.param_count(),
        r.kinks,
        r.max_rel_error,
        r.worst_index,
        r.worst_analytic,
        r.worst_numeric
    );
    Ok(if r.max_rel_error <= tolerance { 0 } else { 4 })
}

fn toyworld_verify(common: &Common, count: usize) -> Result<u8> {
    let checks = verify_random_worlds(count, common.seed.unwrap_or(0))?;
    let bad: Vec<_> = checks.iter().filter(|c| !c.holds(1e-9)).collect();
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        let mut s = String::from("index,n_facts,n_samples,n_models,fano_nats,mi_nats,ln_models\n");
        for c in &checks {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.index, c.n_facts, c.n_samples, c.n_models, c.fano.0, c.mi.0, c.ln_models.0
            ));
        }
        std::fs::write(dir.join("toyworld.csv"), s)?;
    }
    let slack = checks
        .iter()
        .map(|c| (c.mi.0 - c.fano.0).min(c.ln_models.0 - c.mi.0))
        .fold(f64::INFINITY, f64::min);
    println!("{} worlds, {} violations, smallest slack {:.3e} nats", checks.len(), bad.len(), slack);
    Ok(if bad.is_empty() { 0 } else { 4 })
}
