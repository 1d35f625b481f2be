//! Seeded parallel trials. Trial `i` always draws from `trial_rng(seed, i)`,
//! so results do not depend on the thread count or scheduling.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::trial_rng;

/// Runs `f(i, rng_i)` for `i in 0..trials` and returns the results in trial order.
pub fn run_trials<T, F>(seed: u64, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, ChaCha8Rng) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(i, trial_rng(seed, i)))
        .collect()
}

/// Standard error of a Bernoulli frequency: `√(p(1−p)/trials)`.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::INFINITY;
    }
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Standard error of the mean.
    pub fn sigma_mean(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        self.std_dev / (self.count as f64).sqrt()
    }
}

pub fn summarize(values: &[f64]) -> Summary {
    let count = values.len() as u64;
    if values.is_empty() {
        return Summary {
            count,
            mean: f64::NAN,
            std_dev: 0.0,
            min: f64::NAN,
            max: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = if values.len() > 1 {
        values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (values.len() - 1) as f64
    } else {
        0.0
    };
    Summary {
        count,
        mean,
        std_dev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
