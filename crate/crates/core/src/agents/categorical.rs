//! Categorical value distributions on a fixed atom grid.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `atoms` equally spaced points from `v_min` to `v_max` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
}

impl Default for Support {
    fn default() -> Self {
        Self {
            v_min: -5.0,
            v_max: 5.0,
            atoms: 51,
        }
    }
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, atoms: usize) -> Result<Self> {
        if atoms < 2 || !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(invalid(format!("bad support [{v_min}, {v_max}] with {atoms} atoms")));
        }
        Ok(Self { v_min, v_max, atoms })
    }

    pub fn spacing(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms - 1) as f64
    }

    pub fn atom(&self, j: usize) -> f64 {
        if j + 1 == self.atoms {
            self.v_max
        } else {
            self.v_min + j as f64 * self.spacing()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.atoms).map(|j| self.atom(j)).collect()
    }

    pub fn expected(&self, probs: ArrayView1<f64>) -> f64 {
        probs.iter().enumerate().map(|(j, p)| p * self.atom(j)).sum()
    }

    /// Splits the mass of every backed-up source atom `r + gamma·(1 − done)·x`
    /// between its two neighbouring grid atoms, after clamping to the support.
    pub fn project(&self, positions: &[f64], probs: &[f64], r: f64, done: bool, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.atoms];
        self.project_into(positions, probs, r, done, gamma, &mut out);
        out
    }

    pub fn project_into(&self, positions: &[f64], probs: &[f64], r: f64, done: bool, gamma: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let dz = self.spacing();
        let discount = if done { 0.0 } else { gamma };
        for (&x, &p) in positions.iter().zip(probs) {
            let b = (r + discount * x).clamp(self.v_min, self.v_max);
            let idx = ((b - self.v_min) / dz).clamp(0.0, (self.atoms - 1) as f64);
            let lo = idx.floor();
            let frac = idx - lo;
            let lo = lo as usize;
            if lo + 1 >= self.atoms || frac == 0.0 {
                out[lo] += p;
            } else {
                out[lo] += p * (1.0 - frac);
                out[lo + 1] += p * frac;
            }
        }
    }
}

/// Row-wise softmax, shifted by the row max for stability.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Mean over rows of `−Σ_j target_j · log softmax(logits)_j`, and its
/// gradient with respect to the logits, `(p − target) / rows`.
pub fn cross_entropy(logits: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let rows = logits.nrows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((l, t), mut g) in logits.rows().into_iter().zip(target.rows()).zip(grad.rows_mut()) {
        let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for j in 0..l.len() {
            let logp = l[j] - lse;
            loss -= t[j] * logp;
            g[j] = (logp.exp() - t[j]) / rows;
        }
    }
    (loss / rows, grad)
}

/// Shannon entropy in nats.
pub fn entropy(p: ArrayView1<f64>) -> f64 {
    p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum()
}
