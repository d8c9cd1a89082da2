//! Central finite-difference check of the analytic gradients.

use rand::seq::index::sample;

use super::transformer::Transformer;
use crate::error::Result;
use crate::rng::seeded;

/// Absolute floor of the relative-error denominator; coordinates whose true
/// gradient is below this are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Coordinates whose `±ε` probe flipped a ReLU; excluded from the max.
    pub kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares backprop against `(L(θ+ε) − L(θ−ε)) / 2ε` for every parameter,
/// or for `max_coords` coordinates sampled without replacement.
pub fn grad_check<S: AsRef<[u32]>>(
    model: &Transformer<f64>,
    batch: &[S],
    weights: &[Vec<f64>],
    epsilon: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    let fwd = model.forward(batch)?;
    let mut grads = vec![0.0; model.param_count()];
    model.backward(&fwd, weights, &mut grads);

    let n = model.param_count();
    let coords: Vec<usize> = match max_coords {
        Some(k) if k < n => {
            let mut v = sample(&mut seeded(seed), n, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    };

    let pattern = fwd.relu_pattern();
    let loss = |m: &Transformer<f64>| -> Result<(f64, bool)> {
        let f = m.forward(batch)?;
        let l = f
            .token_losses()
            .iter()
            .zip(weights)
            .flat_map(|(l, w)| l.iter().zip(w).map(|(a, b)| a * b))
            .sum();
        Ok((l, f.relu_pattern() != pattern))
    };

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: coords.len(),
        kinks: 0,
    };
    for &i in &coords {
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let (up, flip_up) = loss(&probe)?;
        probe.params[i] = orig - epsilon;
        let (down, flip_down) = loss(&probe)?;
        probe.params[i] = orig;
        if flip_up || flip_down {
            report.kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let err = relative_error(grads[i], numeric);
        if err > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                worst_analytic: grads[i],
                worst_numeric: numeric,
                ..report
            };
        }
    }
    Ok(report)
}
