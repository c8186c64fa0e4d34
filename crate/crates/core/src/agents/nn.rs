//! Dense tanh networks with hand-written backpropagation and a momentum
//! optimizer over flat parameter blocks.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fully connected network; tanh on hidden layers, identity on the output.
/// Weights are stored `in × out` so a batch multiplies as `x · W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer inputs and hidden activations kept by [`DenseNet::forward_cached`].
#[derive(Clone, Debug)]
pub struct Cache {
    /// `inputs[l]` is the input to layer `l`; its last entry is the output.
    inputs: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.inputs.last().expect("cache always holds the output")
    }
}

impl DenseNet {
    /// Uniform `±1/sqrt(fan_in)` initialization for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::with_output_bound(sizes, None, rng)
    }

    /// Like `new`, but the last layer is drawn from `U(-b, b)` when `b` is given.
    pub fn with_output_bound<R: Rng + ?Sized>(sizes: &[usize], out: Option<f64>, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(invalid(format!("bad layer sizes {sizes:?}")));
        }
        if out.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(invalid(format!("bad output bound {out:?}")));
        }
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        let last = sizes.len() - 2;
        for (i, w) in sizes.windows(2).enumerate() {
            let bound = match out {
                Some(b) if i == last => b,
                _ => 1.0 / (w[0] as f64).sqrt(),
            };
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-bound..bound)));
            biases.push(Array1::from_shape_fn(w[1], |_| rng.random_range(-bound..bound)));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Same shapes, every parameter zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(w) + b;
            if l < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<Cache> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len() + 1);
        inputs.push(x.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut h = inputs[l].dot(w) + b;
            if l < last {
                h.mapv_inplace(f64::tanh);
            }
            inputs.push(h);
        }
        if inputs[last + 1].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(Cache { inputs })
    }

    /// Backpropagates `grad_out` (d loss / d output, batch × out). Adds the
    /// parameter gradients into `grads` and returns d loss / d input.
    pub fn backward(&self, cache: &Cache, grad_out: &Array2<f64>, grads: &mut DenseNet) -> Array2<f64> {
        let n = self.weights.len();
        let mut delta = grad_out.clone();
        for l in (0..n).rev() {
            if l < n - 1 {
                // cache.inputs[l + 1] holds tanh(pre) for hidden layers
                delta.zip_mut_with(&cache.inputs[l + 1], |d, &a| *d *= 1.0 - a * a);
            }
            grads.weights[l] += &cache.inputs[l].t().dot(&delta);
            grads.biases[l] += &delta.sum_axis(Axis(0));
            delta = delta.dot(&self.weights[l].t());
        }
        delta
    }

    /// Polyak averaging toward `online`: `self ← (1 − tau)·self + tau·online`.
    pub fn soft_update(&mut self, online: &DenseNet, tau: f64) {
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_mut_with(o, |t, &o| *t += tau * (o - *t));
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_mut_with(o, |t, &o| *t += tau * (o - *t));
        }
    }
}

/// Anything whose trainable state can be viewed as a list of flat blocks.
pub trait Params {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.blocks().iter().map(|b| b.len()).sum();
        if total != values.len() {
            return Err(Error::LengthMismatch {
                expected: total,
                got: values.len(),
            });
        }
        let mut at = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&values[at..at + block.len()]);
            at += block.len();
        }
        Ok(())
    }

    fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Params for DenseNet {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// Gradient descent with heavy-ball momentum: `v ← βv + g`, `θ ← θ − lr·v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub lr: f64,
    pub beta: f64,
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new(lr: f64, beta: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) || !(0.0..1.0).contains(&beta) {
            return Err(invalid(format!("bad optimizer settings lr={lr} beta={beta}")));
        }
        Ok(Self {
            lr,
            beta,
            velocity: Vec::new(),
        })
    }

    pub fn reset(&mut self) {
        self.velocity.clear();
    }

    pub fn step(&mut self, params: &mut dyn Params, grads: &dyn Params) -> Result<()> {
        let g = grads.blocks();
        let mut p = params.blocks_mut();
        if g.len() != p.len() || g.iter().zip(&p).any(|(a, b)| a.len() != b.len()) {
            return Err(invalid("gradient shapes do not match parameters"));
        }
        if g.iter().flat_map(|b| b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        if self.velocity.is_empty() {
            self.velocity = g.iter().map(|b| vec![0.0; b.len()]).collect();
        }
        for ((p, g), v) in p.iter_mut().zip(&g).zip(self.velocity.iter_mut()) {
            for ((p, g), v) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *v = self.beta * *v + g;
                *p -= self.lr * *v;
            }
        }
        Ok(())
    }
}

/// Below this magnitude a gradient entry is compared on an absolute scale:
/// central differences at step 1e-5 carry round-off near 1e-11.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Largest relative error between `analytic` and central differences of
/// `loss` around `at` with step `h`.
pub fn max_gradient_error(
    at: &[f64],
    analytic: &[f64],
    h: f64,
    loss: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if at.len() != analytic.len() {
        return Err(Error::LengthMismatch {
            expected: at.len(),
            got: analytic.len(),
        });
    }
    let mut x = at.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = loss(&x)?;
        x[i] = orig - h;
        let down = loss(&x)?;
        x[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}
