//! Acceptance suite. Prints one `C<n> PASS|FAIL` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! `FACTLAB_ACCEPTANCE=1,4,6` restricts the run to the listed criteria;
//! criteria 7 and 10 pull in the criterion 6 runs they compare against.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use factlab::harness::{run_experiment, run_sweep, ExperimentConfig, RunOptions, RunOutcome, SweepSpec};
use factlab::metrics::{usage_from_facts, EvalReport};
use factlab::model::grad_check;
use factlab::rng::{seeded, stream, Stream};
use factlab::selection::{lower_percentile, oracle_keep_probs, select_lossh, select_losshf, SelectionMode};
use factlab::synthdata::{sample_record, FactTemplate, PowerLawDist};
use factlab::theory::{capacity_limit_facts, fact_entropy, per_token_entropy, verify_random_worlds};
use factlab::units::Bits;
use rand::Rng;

/// Desk recipe: two layers of width 32, 10k steps of 64 records.
const DESK_STEPS: u64 = 10_000;
const DESK_BATCH: usize = 64;
const DESK_LR: f64 = 0.01;
const N_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const ALPHA_GRID: [f64; 6] = [0.1, 0.2, 0.3, 0.5, 0.7, 1.0];
const WIKI_ALPHAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn desk_model(context: usize, vocab: usize) -> String {
    format!("[model]\nlayers = 2\nheads = 2\nhidden = 32\ncontext = {context}\nvocab = {vocab}\n")
}

fn desk_train(steps: u64) -> String {
    format!("[train]\nsteps = {steps}\nbatch_size = {DESK_BATCH}\nmax_lr = {DESK_LR}\nweight_decay = 0.0\n")
}

fn phonebook(run_id: &str, n: usize, beta: f64, mode: &str, alpha: f64) -> ExperimentConfig {
    let text = format!(
        "run_id = \"{run_id}\"\nseed = 1\neval_every = {}\n\
         [data]\nkind = \"phonebook\"\nn_facts = {n}\nbeta = {beta}\n{}{}\
         [selection]\nmode = \"{mode}\"\nalpha = {alpha}\n",
        DESK_STEPS / 2,
        desk_model(32, 39),
        desk_train(DESK_STEPS)
    );
    ExperimentConfig::from_toml(&text).expect("desk config")
}

fn desk_capacity() -> f64 {
    let cfg = phonebook("cap", 1, 0.0, "full", 1.0);
    let b = fact_entropy(&FactTemplate::new(6, 22).unwrap()).to_bits();
    capacity_limit_facts(cfg.model.param_count() as f64, 2.0, b)
}

fn train(cfg: &ExperimentConfig) -> RunOutcome {
    let t = Instant::now();
    let out = run_experiment(cfg, &RunOptions::default()).expect("run");
    let r = out.final_report().expect("final report");
    eprintln!(
        "  [{}] {} N={} alpha={} status={} acc_count={:.1} fact_acc={:.3} mem_bits={:.0} ({:.0}s)",
        cfg.run_id,
        cfg.selection.mode.name(),
        out.table.len(),
        cfg.selection.alpha,
        out.status.name(),
        r.acc_count,
        r.fact_acc,
        r.mem_bits,
        t.elapsed().as_secs_f64()
    );
    out
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c1_theory() -> Verdict {
    let t = FactTemplate::new(6, 22).unwrap();
    let cap = capacity_limit_facts(110e6, 2.0, Bits(22.0 * 10f64.log2()));
    let ptok = per_token_entropy(&t).0;
    let h = fact_entropy(&t).0;
    let pass = (cap - 3.0104e6).abs() <= 0.005 * 3.0104e6 && (ptok - 2.507).abs() <= 1e-3 && (h - 50.656).abs() <= 1e-3;
    verdict(pass, format!("capacity {cap:.5e} facts, per-token entropy {ptok:.4} nats, fact entropy {h:.4} nats"))
}

fn c2_bounds() -> Verdict {
    let checks = verify_random_worlds(250, 7).expect("toy worlds");
    let bad = checks.iter().filter(|c| !c.holds(1e-9)).count();
    let slack = checks
        .iter()
        .map(|c| (c.mi.0 - c.fano.0).min(c.ln_models.0 - c.mi.0))
        .fold(f64::INFINITY, f64::min);
    verdict(
        bad == 0 && checks.len() >= 200,
        format!("{} worlds, {bad} violations, smallest slack {slack:.3e} nats", checks.len()),
    )
}

fn c3_gradients() -> Verdict {
    let text = "run_id = \"grad\"\nseed = 3\n[data]\nkind = \"phonebook\"\nprefix_len = 3\nsuffix_len = 4\nn_facts = 8\n\
                [model]\nlayers = 1\nheads = 2\nhidden = 16\ncontext = 16\nvocab = 39\n\
                [train]\nsteps = 1\nbatch_size = 4\nmax_lr = 0.001\n";
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let data = cfg.data.build(cfg.seed, cfg.model.context).unwrap();
    let dist = data.table.distribution();
    let mut rng = stream(cfg.seed, Stream::DataSampling);
    let batch: Vec<Vec<u32>> = (0..4).map(|_| sample_record(&dist, &data.table, &mut rng).1).collect();
    let weights: Vec<Vec<f64>> = batch.iter().map(|s| vec![1.0; s.len() - 1]).collect();
    let state = factlab::model::init_model(cfg.model, cfg.seed).unwrap();
    let model = state.model.cast::<f64>();
    let r = grad_check(&model, &batch, &weights, 1e-3, None, 0).unwrap();
    let n = model.param_count();
    verdict(
        n <= 10_000 && r.max_rel_error <= 1e-3 && r.checked == n && 2 * r.kinks < n,
        format!(
            "{n} params, {} skipped where the probe crosses a ReLU kink, max relative error {:.3e} at eps 1e-3",
            r.kinks, r.max_rel_error
        ),
    )
}

fn c4_selection() -> Verdict {
    // crafted lists, ties included
    let crafted: [(&[f64], f64, &[bool]); 4] = [
        (&[3.0, 1.0, 2.0, 5.0, 4.0], 0.4, &[false, true, true, false, false]),
        (&[2.0, 2.0, 2.0, 7.0], 0.25, &[true, true, true, false]),
        (&[0.0, 9.0, 0.0], 0.01, &[true, false, true]),
        (&[6.0, 1.0, 8.0], 1.0, &[true, true, true]),
    ];
    let lossh_ok = crafted.iter().all(|(l, a, want)| select_lossh(l, *a) == *want);

    let mut rng = seeded(11);
    let losses: Vec<f64> = (0..50).map(|_| rng.gen::<f64>() * 70.0).collect();
    let alpha = 0.4;
    let tau = lower_percentile(&losses, alpha);
    let probs: Vec<f64> = losses.iter().map(|&l| if l <= tau { (l / tau).min(1.0) } else { 0.0 }).collect();
    let expected = probs.iter().sum::<f64>() / losses.len() as f64;
    let trials = 100_000usize;
    let kept: usize = (0..trials)
        .map(|_| select_losshf(&losses, alpha, &mut rng).iter().filter(|&&k| k).count())
        .sum();
    let total = (trials * losses.len()) as f64;
    let rate = kept as f64 / total;
    let sigma = (probs.iter().map(|p| p * (1.0 - p)).sum::<f64>() * trials as f64).sqrt() / total;
    let rate_ok = (rate - expected).abs() <= 3.0 * sigma;

    let mut full = phonebook("identity", 200, 0.0, "full", 1.0);
    full.train.steps = 300;
    full.eval_every = 100;
    let mut lossh = full.clone();
    lossh.selection.mode = SelectionMode::LossH;
    let (a, b) = (train(&full), train(&lossh));
    let same_trace = a.trace.iter().zip(&b.trace).all(|(x, y)| x.sum_loss.to_bits() == y.sum_loss.to_bits())
        && a.trace.len() == b.trace.len();
    let identical = a.state.model.params == b.state.model.params && same_trace && a.reports == b.reports;
    verdict(
        lossh_ok && rate_ok && identical,
        format!(
            "crafted LossH sets {}, LossHF rate {rate:.5} vs {expected:.5} ({:.2} sigma), alpha=1 LossH vs Full bit-identical: {identical}",
            if lossh_ok { "exact" } else { "WRONG" },
            (rate - expected).abs() / sigma
        ),
    )
}

fn c5_flattening() -> Verdict {
    let dist = PowerLawDist::new(200, 1.0);
    let alpha = 0.25;
    let probs = oracle_keep_probs(dist.weights(), alpha, SelectionMode::OracleHeadFlattened);
    let mut rng = seeded(12);
    let mut ids = Vec::new();
    for _ in 0..1_000_000 {
        let i = dist.sample(&mut rng);
        if rng.gen::<f64>() < probs[i] {
            ids.push(i);
        }
    }
    let usage = usage_from_facts(&ids, 200);
    let head: Vec<f64> = usage.iter().copied().filter(|&u| u > 0.0).collect();
    let ratio = head.iter().copied().fold(0.0, f64::max) / head.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(ratio <= 1.1, format!("{} kept facts, max/min usage {ratio:.4}", head.len()))
}

struct Grid {
    cap: f64,
    runs: Vec<(usize, EvalReport)>,
    plateau: f64,
}

fn c6_grid() -> Grid {
    let cap = desk_capacity();
    let runs: Vec<(usize, EvalReport)> = N_GRID
        .iter()
        .map(|k| {
            let n = (k * cap).round() as usize;
            let out = train(&phonebook(&format!("grid_{k}x"), n, 0.0, "full", 1.0));
            (n, out.final_report().unwrap().clone())
        })
        .collect();
    let plateau = runs[1].1.acc_count;
    Grid { cap, runs, plateau }
}

fn c6_collapse(g: &Grid) -> Verdict {
    let (n_half, half) = &g.runs[1];
    let four = &g.runs[4].1;
    let pass = half.acc_count >= 0.8 * *n_half as f64 && four.acc_count <= 0.2 * g.plateau;
    let counts: Vec<String> = g.runs.iter().map(|(n, r)| format!("{n}:{:.1}", r.acc_count)).collect();
    verdict(
        pass,
        format!(
            "capacity {:.0} facts; acc_count by N [{}]; 0.5x {:.1} >= {:.1}, 4x {:.1} <= {:.1}",
            g.cap,
            counts.join(" "),
            half.acc_count,
            0.8 * *n_half as f64,
            four.acc_count,
            0.2 * g.plateau
        ),
    )
}

fn c7_uplift(g: &Grid) -> Verdict {
    let (n, full0) = &g.runs[4];
    let full1 = train(&phonebook("full_4x_beta1", *n, 1.0, "full", 1.0));
    let mut pass = true;
    let mut parts = Vec::new();
    for (beta, full) in [(0.0, full0.acc_count), (1.0, full1.final_report().unwrap().acc_count)] {
        let mut spec = SweepSpec::new(phonebook("uplift", *n, beta, "losshf", 1.0));
        spec.alphas = ALPHA_GRID.to_vec();
        spec.seeds = vec![1];
        let out = run_sweep(&spec, None).expect("sweep");
        for r in &out.rows {
            eprintln!("  [sweep beta={beta}] alpha={} acc_count={:.1} status={}", r.point.alpha, r.acc_count, r.status);
        }
        let best = out.best_point().expect("a completed sweep point");
        let ok = best.objective >= 3.0 * full && best.objective >= 0.5 * g.plateau && best.point.alpha < 1.0;
        pass &= ok;
        parts.push(format!(
            "beta={beta}: best alpha {} acc_count {:.1} vs full {full:.1} (x3 = {:.1}), plateau/2 {:.1}",
            best.point.alpha,
            best.objective,
            3.0 * full,
            0.5 * g.plateau
        ));
    }
    verdict(pass, format!("N={n}; {}", parts.join("; ")))
}

fn wiki(alpha: f64) -> ExperimentConfig {
    let text = format!(
        "run_id = \"wiki_{alpha}\"\nseed = 1\neval_every = {}\n\
         [data]\nkind = \"annotated\"\nn_facts = 3064\nbeta = 1.0\nn_records = 6000\nfacts_per_record = 1\n\
         filler_min = 4\nfiller_max = 12\n{}{}\
         [selection]\nmode = \"lossh_wiki\"\nalpha = {alpha}\n",
        DESK_STEPS / 2,
        desk_model(48, 41),
        desk_train(DESK_STEPS)
    );
    ExperimentConfig::from_toml(&text).expect("wiki config")
}

fn c8_wiki() -> Verdict {
    let base = train(&wiki(1.0));
    let b = base.final_report().unwrap().clone();
    let b_nonfact = b.nonfact_loss.expect("annotated report");
    let mut found = false;
    let mut rows = Vec::new();
    for alpha in WIKI_ALPHAS {
        let out = train(&wiki(alpha));
        let r = out.final_report().unwrap();
        let ratio = r.fact_acc / b.fact_acc;
        let drift = (r.nonfact_loss.unwrap() - b_nonfact).abs() / b_nonfact;
        rows.push(format!("a={alpha}: acc x{ratio:.2} nonfact {:+.1}%", 100.0 * drift));
        found |= ratio >= 1.15 && drift <= 0.05;
    }
    let head = format!("baseline held-out acc {:.4}, nonfact loss {b_nonfact:.4}", b.fact_acc);
    verdict(found, format!("{head}; {}", rows.join(", ")))
}

fn c9_calibration() -> Verdict {
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=5u64 {
        let text = format!(
            "run_id = \"mix_{seed}\"\nseed = {seed}\neval_every = 2000\n\
             [data]\nkind = \"mixture\"\nfacts_per_group = 40\nbeta = 1.0\n{}{}",
            desk_model(48, 39),
            desk_train(2000)
        );
        let out = train(&ExperimentConfig::from_toml(&text).unwrap());
        let r = out.final_report().unwrap();
        if r.spearman_sum >= r.spearman_mean {
            wins += 1;
        }
        rows.push(format!("s{seed} sum {:.3} mean {:.3}", r.spearman_sum, r.spearman_mean));
    }
    verdict(wins >= 4, format!("sum >= mean in {wins}/5 seeds ({})", rows.join(", ")))
}

fn c10_accounting(g: &Grid) -> Verdict {
    let b_bits = fact_entropy(&FactTemplate::new(6, 22).unwrap()).to_bits().0;
    let bits: Vec<f64> = g.runs.iter().map(|(_, r)| r.mem_nats_raw / std::f64::consts::LN_2).collect();
    let bounded = g.runs.iter().zip(&bits).all(|((n, _), &m)| m >= 0.0 && m <= *n as f64 * b_bits + 1e-6);
    let peak = (0..bits.len()).max_by(|&i, &j| bits[i].total_cmp(&bits[j])).unwrap();
    let monotone = bits[..=peak].windows(2).all(|w| w[1] >= w[0]);
    let params = phonebook("p", 1, 0.0, "full", 1.0).model.param_count() as f64;
    let shown: Vec<String> = bits.iter().map(|b| format!("{b:.0}")).collect();
    verdict(
        bounded && monotone,
        format!(
            "mem bits by N [{}], plateau at {}x, {:.2} bits/param",
            shown.join(" "),
            N_GRID[peak],
            bits[peak] / params
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("FACTLAB_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |c: usize| only.as_ref().is_none_or(|s| s.contains(&c));
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |c: usize, v: Verdict| {
        println!("C{c} {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        std::io::stdout().flush().ok();
        results.push((c, v));
    };
    let fast: [(usize, fn() -> Verdict); 5] = [
        (1, c1_theory),
        (2, c2_bounds),
        (3, c3_gradients),
        (4, c4_selection),
        (5, c5_flattening),
    ];
    for (c, f) in fast {
        if wanted(c) {
            report(c, f());
        }
    }
    if wanted(6) || wanted(7) || wanted(10) {
        let grid = c6_grid();
        if wanted(6) {
            report(6, c6_collapse(&grid));
        }
        if wanted(10) {
            report(10, c10_accounting(&grid));
        }
        if wanted(7) {
            report(7, c7_uplift(&grid));
        }
    }
    if wanted(8) {
        report(8, c8_wiki());
    }
    if wanted(9) {
        report(9, c9_calibration());
    }
    let failed: Vec<usize> = results.iter().filter(|(_, v)| !v.pass).map(|(c, _)| *c).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
