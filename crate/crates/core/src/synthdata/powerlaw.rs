use rand::Rng;

/// Power-law distribution over fact ranks, `w_i ∝ i^(-beta)` for `i = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawDist {
    beta: f64,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl PowerLawDist {
    pub fn new(n: usize, beta: f64) -> Self {
        assert!(n >= 1, "power law needs at least one fact");
        assert!(beta >= 0.0 && beta.is_finite(), "beta must be finite and >= 0");
        let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-beta)).collect();
        // smallest terms first
        let total: f64 = raw.iter().rev().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        Self::from_weights_unchecked(beta, weights)
    }

    /// Arbitrary normalized weights (used for mixtures, whose global weights
    /// are not monotone in index).
    pub fn from_weights(beta: f64, weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0);
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::from_weights_unchecked(beta, weights)
    }

    fn from_weights_unchecked(beta: f64, weights: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        PowerLawDist { beta, weights, cdf }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Inverse-CDF draw of a fact index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.weights.len() - 1)
    }
}

pub fn power_law_weights(n: usize, beta: f64) -> PowerLawDist {
    PowerLawDist::new(n, beta)
}
