//! Fully enumerable worlds: a prior over answer vectors, a noisy sampling
//! rule, a stochastic learner table and stochastic predictors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::units::Nats;

/// Cap on |answer vectors| x |datasets| x |models|.
pub const SUPPORT_LIMIT: u128 = 1_000_000;
pub const MAX_FACTS: usize = 3;
pub const MAX_DOMAIN: usize = 4;

/// Conditional distribution from datasets to models.
#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    /// One distribution over models per dataset, datasets indexed as in
    /// [`ToyWorld::dataset`]; built for a fixed dataset size.
    Table { n: usize, rows: Vec<Vec<f64>> },
    /// Ignores the data.
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    /// Answer domain size per fact.
    pub domains: Vec<usize>,
    /// Prior over answer vectors, indexed in mixed radix with fact 0 fastest.
    pub prior: Vec<f64>,
    /// Probability that a sample is about fact `i`.
    pub fact_weights: Vec<f64>,
    /// Probability that a sample shows a uniformly random value instead of
    /// the true answer.
    pub noise: f64,
    /// `predictors[m][i][a]`: probability that model `m` answers `a` to fact `i`.
    pub predictors: Vec<Vec<Vec<f64>>>,
    pub learner: Learner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiReport {
    /// I(answers; model).
    pub mi: Nats,
    pub joint_entropy: Nats,
    pub ln_models: Nats,
    /// Per fact: probability the model answers wrongly, and the entropy of
    /// the true answer conditioned on that event.
    pub per_fact: Vec<(f64, Nats)>,
    /// Expected number of correctly answered facts.
    pub acc_count: f64,
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

fn normalized(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&x| !(x >= 0.0)) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("{what} is not a probability distribution")));
    }
    Ok(())
}

impl ToyWorld {
    pub fn n_facts(&self) -> usize {
        self.domains.len()
    }

    pub fn n_worlds(&self) -> usize {
        self.domains.iter().product()
    }

    pub fn n_models(&self) -> usize {
        self.predictors.len()
    }

    /// Distinct single observations `(fact, shown value)`.
    pub fn n_observations(&self) -> usize {
        self.domains.iter().sum()
    }

    pub fn n_datasets(&self, n: usize) -> u128 {
        (self.n_observations() as u128).saturating_pow(n as u32)
    }

    /// Answer vector of world index `w`.
    pub fn answers(&self, mut w: usize) -> Vec<usize> {
        self.domains
            .iter()
            .map(|&d| {
                let a = w % d;
                w /= d;
                a
            })
            .collect()
    }

    pub fn world_index(&self, answers: &[usize]) -> usize {
        answers.iter().zip(&self.domains).rev().fold(0, |acc, (&a, &d)| acc * d + a)
    }

    fn observation(&self, o: usize) -> (usize, usize) {
        let mut rest = o;
        for (i, &d) in self.domains.iter().enumerate() {
            if rest < d {
                return (i, rest);
            }
            rest -= d;
        }
        unreachable!("observation index out of range")
    }

    /// Observations `(fact, shown value)` of dataset index `k` of size `n`,
    /// first sample fastest.
    pub fn dataset(&self, mut k: usize, n: usize) -> Vec<(usize, usize)> {
        let s = self.n_observations();
        (0..n)
            .map(|_| {
                let o = k % s;
                k /= s;
                self.observation(o)
            })
            .collect()
    }

    fn obs_prob(&self, answers: &[usize], (i, v): (usize, usize)) -> f64 {
        let hit = if answers[i] == v { 1.0 - self.noise } else { 0.0 };
        self.fact_weights[i] * (hit + self.noise / self.domains[i] as f64)
    }

    pub fn support(&self, n: usize) -> u128 {
        (self.n_worlds() as u128)
            .saturating_mul(self.n_datasets(n))
            .saturating_mul(self.n_models() as u128)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let nf = self.n_facts();
        if nf == 0 || nf > MAX_FACTS || self.domains.iter().any(|&d| d == 0 || d > MAX_DOMAIN) {
            return Err(Error::config(format!(
                "toy worlds need 1..={MAX_FACTS} facts with domains of size 1..={MAX_DOMAIN}"
            )));
        }
        let states = self.support(n);
        if states > SUPPORT_LIMIT {
            return Err(Error::SupportTooLarge {
                states,
                limit: SUPPORT_LIMIT,
            });
        }
        if self.prior.len() != self.n_worlds() || self.fact_weights.len() != nf {
            return Err(Error::config("prior or fact weights have the wrong length"));
        }
        normalized(&self.prior, "prior")?;
        normalized(&self.fact_weights, "fact weights")?;
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config("noise must lie in [0, 1]"));
        }
        if self.predictors.is_empty() {
            return Err(Error::config("the model set is empty"));
        }
        for p in &self.predictors {
            if p.len() != nf {
                return Err(Error::config("predictor has the wrong number of facts"));
            }
            for (row, &d) in p.iter().zip(&self.domains) {
                if row.len() != d {
                    return Err(Error::config("predictor row has the wrong domain size"));
                }
                normalized(row, "predictor row")?;
            }
        }
        match &self.learner {
            Learner::Constant(d) => {
                if d.len() != self.n_models() {
                    return Err(Error::config("learner distribution has the wrong length"));
                }
                normalized(d, "learner distribution")?;
            }
            Learner::Table { n: tn, rows } => {
                if *tn != n || rows.len() as u128 != self.n_datasets(n) {
                    return Err(Error::config(format!("learner table is built for dataset size {tn}, not {n}")));
                }
                for r in rows {
                    if r.len() != self.n_models() {
                        return Err(Error::config("learner row has the wrong length"));
                    }
                    normalized(r, "learner row")?;
                }
            }
        }
        Ok(())
    }

    /// Probability of each dataset of size `n` under world `w`.
    fn dataset_probs(&self, w: usize, n: usize) -> Vec<f64> {
        let a = self.answers(w);
        let s = self.n_observations();
        let single: Vec<f64> = (0..s).map(|o| self.obs_prob(&a, self.observation(o))).collect();
        let mut probs = vec![1.0];
        for _ in 0..n {
            // new sample becomes the slowest digit, matching `dataset`
            let mut next = Vec::with_capacity(probs.len() * s);
            for &ps in &single {
                next.extend(probs.iter().map(|&p| p * ps));
            }
            probs = next;
        }
        probs
    }

    fn learner_row(&self, k: usize) -> &[f64] {
        match &self.learner {
            Learner::Constant(d) => d,
            Learner::Table { rows, .. } => &rows[k],
        }
    }

    /// Joint distribution `P(world, model)` as rows over worlds.
    fn joint(&self, n: usize) -> Vec<Vec<f64>> {
        let m = self.n_models();
        (0..self.n_worlds())
            .map(|w| {
                let mut row = vec![0.0; m];
                if self.prior[w] > 0.0 {
                    for (k, pd) in self.dataset_probs(w, n).into_iter().enumerate() {
                        if pd > 0.0 {
                            for (r, &pm) in row.iter_mut().zip(self.learner_row(k)) {
                                *r += self.prior[w] * pd * pm;
                            }
                        }
                    }
                }
                row
            })
            .collect()
    }

    /// A learner that reads each fact's last observed value and outputs the
    /// deterministic model predicting that answer vector (unobserved facts
    /// answer 0). The model set is every answer vector.
    pub fn verbatim(mut self, n: usize) -> Self {
        let nw = self.n_worlds();
        self.predictors = (0..nw)
            .map(|w| {
                let a = self.answers(w);
                self.domains
                    .iter()
                    .zip(&a)
                    .map(|(&d, &ai)| (0..d).map(|v| f64::from(u8::from(v == ai))).collect())
                    .collect()
            })
            .collect();
        let rows = (0..self.n_datasets(n) as usize)
            .map(|k| {
                let mut a = vec![0; self.n_facts()];
                for (i, v) in self.dataset(k, n) {
                    a[i] = v;
                }
                let mut r = vec![0.0; nw];
                r[self.world_index(&a)] = 1.0;
                r
            })
            .collect();
        self.learner = Learner::Table { n, rows };
        self
    }
}

/// Exact mutual information between the answer vector and the model, with
/// per-fact failure statistics on the same joint.
pub fn mi_bruteforce(world: &ToyWorld, n: usize) -> Result<MiReport> {
    world.validate(n)?;
    let joint = world.joint(n);
    let nm = world.n_models();
    let p_model: Vec<f64> = (0..nm).map(|m| joint.iter().map(|r| r[m]).sum()).collect();
    let mut mi = 0.0;
    for (w, row) in joint.iter().enumerate() {
        for (m, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (world.prior[w] * p_model[m])).ln();
            }
        }
    }
    let mut per_fact = Vec::with_capacity(world.n_facts());
    let mut acc_count = 0.0;
    for (i, &d) in world.domains.iter().enumerate() {
        // mass of (true answer = a, prediction wrong)
        let mut wrong = vec![0.0; d];
        for (w, row) in joint.iter().enumerate() {
            let a = world.answers(w)[i];
            for (m, &p) in row.iter().enumerate() {
                wrong[a] += p * (1.0 - world.predictors[m][i][a]);
            }
        }
        let p_fail: f64 = wrong.iter().sum::<f64>().clamp(0.0, 1.0);
        let h = if p_fail > 0.0 {
            let cond: Vec<f64> = wrong.iter().map(|x| x / p_fail).collect();
            entropy(&cond)
        } else {
            0.0
        };
        acc_count += 1.0 - p_fail;
        per_fact.push((p_fail, Nats(h)));
    }
    Ok(MiReport {
        mi: Nats(mi.max(0.0)),
        joint_entropy: Nats(entropy(&world.prior)),
        ln_models: Nats((nm as f64).ln()),
        per_fact,
        acc_count,
    })
}

/// Expected accurate count of the best deterministic learner onto a fixed
/// set of deterministic models, each given by the answer vector it predicts.
/// The best map sends every dataset to the model with the largest posterior
/// expected number of correct answers.
pub fn optimal_acc_count(world: &ToyWorld, n: usize, models: &[Vec<usize>]) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::config("the model set is empty"));
    }
    let nd = world.n_datasets(n);
    let states = (world.n_worlds() as u128).saturating_mul(nd).saturating_mul(models.len() as u128);
    if states > SUPPORT_LIMIT {
        return Err(Error::SupportTooLarge {
            states,
            limit: SUPPORT_LIMIT,
        });
    }
    let nd = nd as usize;
    let probs: Vec<Vec<f64>> = (0..world.n_worlds()).map(|w| world.dataset_probs(w, n)).collect();
    let answers: Vec<Vec<usize>> = (0..world.n_worlds()).map(|w| world.answers(w)).collect();
    let mut total = 0.0;
    for k in 0..nd {
        let best = models
            .iter()
            .map(|m| {
                (0..world.n_worlds())
                    .map(|w| {
                        let hits = m.iter().zip(&answers[w]).filter(|(a, b)| a == b).count();
                        world.prior[w] * probs[w][k] * hits as f64
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        total += best;
    }
    Ok(total)
}

/// Best [`optimal_acc_count`] over every set of `k` distinct deterministic
/// models drawn from all answer vectors.
pub fn best_acc_count_with_models(world: &ToyWorld, n: usize, k: usize) -> Result<f64> {
    let nw = world.n_worlds();
    if k == 0 || k > nw {
        return Err(Error::config(format!("need 1..={nw} models, got {k}")));
    }
    let mut best = 0.0f64;
    let mut pick: Vec<usize> = (0..k).collect();
    loop {
        let models: Vec<Vec<usize>> = pick.iter().map(|&w| world.answers(w)).collect();
        best = best.max(optimal_acc_count(world, n, &models)?);
        // next k-combination in lexicographic order
        let mut i = k;
        while i > 0 && pick[i - 1] == nw - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return Ok(best);
        }
        pick[i - 1] += 1;
        for j in i..k {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

fn random_dist<R: Rng + ?Sized>(rng: &mut R, len: usize, sparse: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| {
            if sparse && rng.gen_bool(0.4) {
                0.0
            } else {
                rng.gen::<f64>() + 1e-3
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.gen_range(0..len)] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random enumerable world and dataset size. Mixes free-form stochastic
/// learners with structured ones (verbatim readout, constant output) and
/// deterministic predictors with stochastic ones.
pub fn random_toy_world<R: Rng + ?Sized>(rng: &mut R) -> (ToyWorld, usize) {
    loop {
        let nf = rng.gen_range(1..=MAX_FACTS);
        let domains: Vec<usize> = (0..nf).map(|_| rng.gen_range(2..=MAX_DOMAIN)).collect();
        let n = rng.gen_range(1..=3);
        let nw: usize = domains.iter().product();
        let prior = if rng.gen_bool(0.3) {
            vec![1.0 / nw as f64; nw]
        } else {
            let sparse = rng.gen_bool(0.3);
            random_dist(rng, nw, sparse)
        };
        let fact_weights = random_dist(rng, nf, false);
        let noise = if rng.gen_bool(0.4) { 0.0 } else { rng.gen::<f64>() * 0.6 };
        let base = ToyWorld {
            domains: domains.clone(),
            prior,
            fact_weights,
            noise,
            predictors: Vec::new(),
            learner: Learner::Constant(Vec::new()),
        };
        let kind = rng.gen_range(0..4);
        let world = if kind == 0 {
            base.verbatim(n)
        } else {
            let nm = rng.gen_range(1..=6);
            let deterministic = rng.gen_bool(0.5);
            let predictors: Vec<Vec<Vec<f64>>> = (0..nm)
                .map(|_| {
                    domains
                        .iter()
                        .map(|&d| {
                            if deterministic {
                                let a = rng.gen_range(0..d);
                                (0..d).map(|v| f64::from(u8::from(v == a))).collect()
                            } else {
                                random_dist(rng, d, true)
                            }
                        })
                        .collect()
                })
                .collect();
            let learner = if kind == 1 {
                Learner::Constant(random_dist(rng, nm, true))
            } else {
                let nd = base.n_datasets(n) as usize;
                let det = kind == 2;
                Learner::Table {
                    n,
                    rows: (0..nd)
                        .map(|_| {
                            if det {
                                let mut r = vec![0.0; nm];
                                r[rng.gen_range(0..nm)] = 1.0;
                                r
                            } else {
                                random_dist(rng, nm, true)
                            }
                        })
                        .collect(),
                }
            };
            ToyWorld {
                predictors,
                learner,
                ..base
            }
        };
        if world.support(n) <= SUPPORT_LIMIT {
            return (world, n);
        }
    }
}

/// Bound checks on one random world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldCheck {
    pub index: usize,
    pub n_facts: usize,
    pub n_samples: usize,
    pub n_models: usize,
    pub fano: Nats,
    pub mi: Nats,
    pub ln_models: Nats,
}

impl WorldCheck {
    /// Fano bound below the mutual information, which is below `ln|M|`.
    pub fn holds(&self, tol: f64) -> bool {
        self.fano.0 <= self.mi.0 + tol && self.mi.0 <= self.ln_models.0 + tol
    }
}

/// Draws `count` random worlds from `seed` and evaluates both sides of the
/// Fano and model-count inequalities on each.
pub fn verify_random_worlds(count: usize, seed: u64) -> Result<Vec<WorldCheck>> {
    let mut rng = crate::rng::seeded(seed);
    (0..count)
        .map(|index| {
            let (world, n) = random_toy_world(&mut rng);
            let r = mi_bruteforce(&world, n)?;
            Ok(WorldCheck {
                index,
                n_facts: world.n_facts(),
                n_samples: n,
                n_models: world.n_models(),
                fano: crate::metrics::fano_bound(r.joint_entropy, &r.per_fact),
                mi: r.mi,
                ln_models: r.ln_models,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn one_fact(prior: Vec<f64>) -> ToyWorld {
        let d = prior.len();
        ToyWorld {
            domains: vec![d],
            prior,
            fact_weights: vec![1.0],
            noise: 0.0,
            predictors: vec![vec![vec![1.0 / d as f64; d]]],
            learner: Learner::Constant(vec![1.0]),
        }
    }

    #[test]
    fn indexing_round_trips() {
        let w = ToyWorld {
            domains: vec![2, 3, 4],
            ..one_fact(vec![1.0])
        };
        for i in 0..24 {
            assert_eq!(w.world_index(&w.answers(i)), i);
        }
        assert_eq!(w.dataset(0, 2), vec![(0, 0), (0, 0)]);
        assert_eq!(w.dataset(5 + 4 * 9, 2), vec![(2, 0), (1, 2)]);
    }

    #[test]
    fn constant_learner_has_zero_mi() {
        let w = one_fact(vec![0.1, 0.2, 0.3, 0.4]);
        let r = mi_bruteforce(&w, 2).unwrap();
        assert!(r.mi.0.abs() < 1e-12);
        assert!((r.per_fact[0].0 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn verbatim_readout_recovers_joint_entropy() {
        let w = one_fact(vec![0.1, 0.2, 0.3, 0.4]).verbatim(1);
        let r = mi_bruteforce(&w, 1).unwrap();
        assert!((r.mi.0 - r.joint_entropy.0).abs() < 1e-12);
        assert!((r.acc_count - 1.0).abs() < 1e-12);
        assert!((r.ln_models.0 - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dataset_probabilities_normalize() {
        let (w, n) = random_toy_world(&mut seeded(3));
        for i in 0..w.n_worlds() {
            let s: f64 = w.dataset_probs(i, n).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn support_limit_enforced() {
        let mut w = ToyWorld {
            domains: vec![4, 4, 4],
            prior: vec![1.0 / 64.0; 64],
            fact_weights: vec![1.0 / 3.0; 3],
            ..one_fact(vec![1.0])
        };
        w.predictors = vec![vec![vec![0.25; 4]; 3]; 2];
        w.learner = Learner::Constant(vec![0.5, 0.5]);
        // 64 worlds x 12^5 datasets x 2 models
        assert!(matches!(mi_bruteforce(&w, 5), Err(Error::SupportTooLarge { .. })));
        assert!(mi_bruteforce(&w, 2).is_ok());
    }

    #[test]
    fn table_must_match_dataset_size() {
        let w = one_fact(vec![0.5, 0.5]).verbatim(2);
        assert!(mi_bruteforce(&w, 1).is_err());
    }

    /// Enumerates every deterministic map from datasets to models literally.
    /// With `via_mi` each map is scored through the full joint.
    fn literal_optimum(world: &ToyWorld, n: usize, models: &[Vec<usize>], via_mi: bool) -> f64 {
        let nd = world.n_datasets(n) as usize;
        let k = models.len();
        let probs: Vec<Vec<f64>> = (0..world.n_worlds()).map(|w| world.dataset_probs(w, n)).collect();
        let mut best = 0.0f64;
        let mut map = vec![0usize; nd];
        loop {
            let acc = if via_mi {
                let mut w = world.clone();
                w.predictors = models
                    .iter()
                    .map(|m| {
                        w.domains
                            .iter()
                            .zip(m)
                            .map(|(&d, &a)| (0..d).map(|v| f64::from(u8::from(v == a))).collect())
                            .collect()
                    })
                    .collect();
                w.learner = Learner::Table {
                    n,
                    rows: map
                        .iter()
                        .map(|&j| (0..k).map(|i| f64::from(u8::from(i == j))).collect())
                        .collect(),
                };
                mi_bruteforce(&w, n).unwrap().acc_count
            } else {
                let mut acc = 0.0;
                for (wi, pw) in probs.iter().enumerate() {
                    let truth = world.answers(wi);
                    for (d, &m) in map.iter().enumerate() {
                        let hits = models[m].iter().zip(&truth).filter(|(a, b)| a == b).count();
                        acc += world.prior[wi] * pw[d] * hits as f64;
                    }
                }
                acc
            };
            best = best.max(acc);
            let mut i = 0;
            while i < nd && map[i] == k - 1 {
                map[i] = 0;
                i += 1;
            }
            if i == nd {
                return best;
            }
            map[i] += 1;
        }
    }

    #[test]
    fn per_dataset_argmax_is_the_literal_optimum() {
        let w = ToyWorld {
            domains: vec![2, 2],
            prior: vec![0.4, 0.1, 0.3, 0.2],
            fact_weights: vec![0.7, 0.3],
            noise: 0.2,
            predictors: Vec::new(),
            learner: Learner::Constant(Vec::new()),
        };
        // 3^4 maps for one sample, 2^16 for two
        for (n, k, via_mi) in [(1, 3, true), (2, 2, false)] {
            let models = [vec![0, 1], vec![1, 0], vec![1, 1]][..k].to_vec();
            let fast = optimal_acc_count(&w, n, &models).unwrap();
            let slow = literal_optimum(&w, n, &models, via_mi);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
        let k2 = best_acc_count_with_models(&w, 1, 2).unwrap();
        assert!(k2 > 0.0 && k2 <= 2.0);
    }
}
