//! Score normalization and aggregate statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{HarnessError, Result};

/// Reference returns of a task: a uniformly random policy and the best
/// policy available to the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreNorm {
    pub random: f64,
    pub optimal: f64,
}

impl ScoreNorm {
    pub fn new(random: f64, optimal: f64) -> Result<Self> {
        if !(optimal > random) || !random.is_finite() || !optimal.is_finite() {
            return Err(HarnessError::Config(format!(
                "degenerate score normalization: random {random}, optimal {optimal}"
            )));
        }
        Ok(Self { random, optimal })
    }
}

/// `(raw − random) / (optimal − random)`.
pub fn normalize_score(raw: f64, norm: ScoreNorm) -> Result<f64> {
    let norm = ScoreNorm::new(norm.random, norm.optimal)?;
    Ok((raw - norm.random) / (norm.optimal - norm.random))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub mean: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Percentile bootstrap of the mean.
pub fn bootstrap_ci<R: Rng + ?Sized>(samples: &[f64], resamples: usize, level: f64, rng: &mut R) -> Result<Interval> {
    if samples.len() < 2 {
        return Err(HarnessError::Config("bootstrap needs at least 2 samples".into()));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(HarnessError::Config(format!(
            "bootstrap needs resamples > 0 and level in (0, 1), got {resamples}, {level}"
        )));
    }
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        low: quantile(&means, tail),
        high: quantile(&means, 1.0 - tail),
        mean: mean(samples),
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Paired comparison counts for a sign test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignCounts {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
}

impl SignCounts {
    /// Counts `a[i] > b[i]` as wins, `a[i] < b[i]` as losses.
    pub fn paired(a: &[f64], b: &[f64]) -> Self {
        let mut c = SignCounts {
            wins: 0,
            losses: 0,
            ties: 0,
        };
        for (x, y) in a.iter().zip(b) {
            if x > y {
                c.wins += 1;
            } else if x < y {
                c.losses += 1;
            } else {
                c.ties += 1;
            }
        }
        c
    }

    /// One-sided p-value of `wins` under `Binomial(wins + losses, 1/2)`,
    /// ties dropped. With no informative pairs the p-value is 1.
    pub fn p_value(&self) -> f64 {
        sign_test(self.wins, self.wins + self.losses)
    }
}

/// `P(X ≥ successes)` for `X ~ Binomial(trials, 1/2)`.
pub fn sign_test(successes: u64, trials: u64) -> f64 {
    if trials == 0 || successes == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, trials).expect("valid binomial");
    1.0 - b.cdf(successes - 1)
}
