//! Reward parameterizations and the machinery around them.
//!
//! A [`Parameterization`] turns the component vector emitted by an environment
//! into a scalar reward. Alternative parameterizations come either from
//! multiplicative perturbations of the nominal coefficients (a PRC pool) or from
//! the auxiliary task rewards an environment declares (an ARC set). The
//! [`MixtureConfig`] decides, per replayed transition, which one is used.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::mdp::{Action, ActionSpec, Environment};

/// Id carried by parameterizations that do not live in a finite pool.
pub const CONTINUOUS_ID: usize = usize::MAX;

/// Tolerance used when two task rewards are compared on the probe set.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Number of probe transitions used for duplicate detection.
pub const PROBE_TRANSITIONS: usize = 256;

/// How components are folded into a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// `sum_i psi_i * c_i`
    Linear,
    /// `prod_i c_i ^ psi_i`, with `0^0 = 1`.
    Multiplicative,
}

/// A reward specification: coefficients, composition kind, and the id used for
/// embedding and normalizer lookups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameterization {
    pub psi: Vec<f64>,
    pub composition: Composition,
    pub id: usize,
    /// The perturbation that produced `psi` from the nominal, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

impl Parameterization {
    pub fn new(psi: Vec<f64>, composition: Composition) -> Result<Self> {
        let p = Self {
            psi,
            composition,
            id: 0,
            delta: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn linear(psi: Vec<f64>) -> Result<Self> {
        Self::new(psi, Composition::Linear)
    }

    /// One-hot linear parameterization selecting component `index` of `k`.
    pub fn one_hot(k: usize, index: usize) -> Self {
        let mut psi = vec![0.0; k];
        psi[index] = 1.0;
        Self {
            psi,
            composition: Composition::Linear,
            id: 0,
            delta: None,
        }
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    /// `nominal ⊙ delta`, remembering `delta`.
    pub fn perturbed(nominal: &Parameterization, delta: Vec<f64>, id: usize) -> Result<Self> {
        if delta.len() != nominal.psi.len() {
            return Err(Error::LengthMismatch {
                expected: nominal.psi.len(),
                got: delta.len(),
            });
        }
        if delta.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(invalid("perturbations must be finite and positive"));
        }
        let psi = nominal.psi.iter().zip(&delta).map(|(p, d)| p * d).collect();
        Ok(Self {
            psi,
            composition: nominal.composition,
            id,
            delta: Some(delta),
        })
    }

    /// Same coefficients multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            psi: self.psi.iter().map(|p| p * lambda).collect(),
            composition: self.composition,
            id: self.id,
            delta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi.is_empty() {
            return Err(invalid("empty parameterization"));
        }
        if self.psi.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("psi"));
        }
        if self.psi.iter().any(|p| *p < 0.0) {
            return Err(invalid("psi must be elementwise nonnegative"));
        }
        if let Some(delta) = &self.delta {
            if delta.len() != self.psi.len() {
                return Err(Error::LengthMismatch {
                    expected: self.psi.len(),
                    got: delta.len(),
                });
            }
            if delta.iter().any(|d| !d.is_finite() || *d <= 0.0) {
                return Err(invalid("perturbations must be finite and positive"));
            }
        }
        Ok(())
    }

    /// Scalar reward for a component vector.
    pub fn reward(&self, components: &[f64]) -> Result<f64> {
        compose(self, components)
    }
}

/// Folds a component vector into a scalar reward.
pub fn compose(p: &Parameterization, components: &[f64]) -> Result<f64> {
    if p.psi.len() != components.len() {
        return Err(Error::LengthMismatch {
            expected: p.psi.len(),
            got: components.len(),
        });
    }
    match p.composition {
        Composition::Linear => Ok(p.psi.iter().zip(components).map(|(w, c)| w * c).sum()),
        Composition::Multiplicative => {
            let mut out = 1.0;
            for (w, c) in p.psi.iter().zip(components) {
                if *c < 0.0 {
                    return Err(Error::NegativeComponent(*c));
                }
                // powf(0, 0) == 1
                out *= c.powf(*w);
            }
            Ok(out)
        }
    }
}

/// Law of the multiplicative perturbation applied to each coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbDistribution {
    LogUniform,
    /// Gaussian in log space, centered on the nominal, truncated to the support.
    LogGaussian { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    /// Ratio between the largest and smallest perturbation.
    pub spread: f64,
    pub stratified: bool,
    pub distribution: PerturbDistribution,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            spread: 16.0,
            stratified: true,
            distribution: PerturbDistribution::LogUniform,
        }
    }
}

impl PerturbSpec {
    pub fn log_uniform(spread: f64) -> Self {
        Self {
            spread,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spread.is_finite() && self.spread > 1.0) {
            return Err(invalid(format!("spread must exceed 1, got {}", self.spread)));
        }
        if let PerturbDistribution::LogGaussian { sigma } = self.distribution {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(invalid(format!("sigma must be positive, got {sigma}")));
            }
        }
        Ok(())
    }

    /// Half-width of the support in log space.
    pub fn log_half_width(&self) -> f64 {
        0.5 * self.spread.ln()
    }

    /// `[1/sqrt(spread), sqrt(spread)]`
    pub fn bounds(&self) -> (f64, f64) {
        let hi = self.spread.sqrt();
        (1.0 / hi, hi)
    }

    /// Maps a uniform variate in [0, 1] to a log-perturbation.
    fn log_quantile(&self, u: f64) -> f64 {
        let h = self.log_half_width();
        match self.distribution {
            PerturbDistribution::LogUniform => -h + 2.0 * h * u,
            PerturbDistribution::LogGaussian { sigma } => {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                let lo = normal.cdf(-h);
                let hi = normal.cdf(h);
                let q = lo + (hi - lo) * u;
                normal.inverse_cdf(q).clamp(-h, h)
            }
        }
    }

    fn to_delta(&self, log_value: f64) -> f64 {
        let (lo, hi) = self.bounds();
        log_value.exp().clamp(lo, hi)
    }
}

/// Draws one perturbation vector of length `k`.
pub fn sample_perturbation<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &PerturbSpec,
    k: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(invalid("perturbation length must be positive"));
    }
    spec.validate()?;
    Ok((0..k)
        .map(|_| spec.to_delta(spec.log_quantile(rng.random::<f64>())))
        .collect())
}

/// Draws `batch` perturbation vectors. When `spec.stratified` is set, each
/// component's values fall one per equal-probability stratum of the log
/// support, in shuffled order.
pub fn sample_perturbations<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &PerturbSpec,
    k: usize,
    batch: usize,
) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(invalid("perturbation length must be positive"));
    }
    spec.validate()?;
    if !spec.stratified {
        return (0..batch).map(|_| sample_perturbation(rng, spec, k)).collect();
    }
    let mut out = vec![vec![0.0; k]; batch];
    let mut strata: Vec<usize> = (0..batch).collect();
    for j in 0..k {
        strata.shuffle(rng);
        for (row, &s) in out.iter_mut().zip(&strata) {
            let u = (s as f64 + rng.random::<f64>()) / batch as f64;
            row[j] = spec.to_delta(spec.log_quantile(u));
        }
    }
    Ok(out)
}

/// An ordered, immutable set of parameterizations whose ids equal their index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPool {
    nominal_id: usize,
    entries: Vec<Parameterization>,
}

impl ParamPool {
    pub fn new(entries: Vec<Parameterization>, nominal_id: usize) -> Result<Self> {
        let pool = Self {
            nominal_id,
            entries,
        };
        pool.validate()?;
        Ok(pool)
    }

    /// A pool with only the nominal parameterization.
    pub fn single(nominal: Parameterization) -> Result<Self> {
        Self::new(vec![nominal.with_id(0)], 0)
    }

    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(invalid("pool must not be empty"));
        }
        if self.nominal_id >= self.entries.len() {
            return Err(Error::UnknownId(self.nominal_id));
        }
        let k = self.entries[0].len();
        let nominal = &self.entries[self.nominal_id];
        for (i, p) in self.entries.iter().enumerate() {
            p.validate()?;
            if p.id != i {
                return Err(Error::Parse(format!("entry {i} carries id {}", p.id)));
            }
            if p.len() != k {
                return Err(Error::LengthMismatch {
                    expected: k,
                    got: p.len(),
                });
            }
            if let Some(delta) = &p.delta {
                let base: Vec<f64> = match &nominal.delta {
                    Some(nd) => nominal.psi.iter().zip(nd).map(|(v, d)| v / d).collect(),
                    None => nominal.psi.clone(),
                };
                for ((v, b), d) in p.psi.iter().zip(&base).zip(delta) {
                    if (v - b * d).abs() > 1e-12 * (1.0 + v.abs()) {
                        return Err(Error::Parse(format!(
                            "entry {i}: psi is not nominal times delta"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nominal_id(&self) -> usize {
        self.nominal_id
    }

    pub fn nominal(&self) -> &Parameterization {
        &self.entries[self.nominal_id]
    }

    pub fn component_count(&self) -> usize {
        self.entries[0].len()
    }

    pub fn get(&self, id: usize) -> Result<&Parameterization> {
        self.entries.get(id).ok_or(Error::UnknownId(id))
    }

    pub fn entries(&self) -> &[Parameterization] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameterization> {
        self.entries.iter()
    }

    /// Same entries with a different nominal.
    pub fn with_nominal(&self, nominal_id: usize) -> Result<Self> {
        Self::new(self.entries.clone(), nominal_id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pool: Self = serde_json::from_str(text)?;
        pool.validate()?;
        Ok(pool)
    }
}

/// Builds a PRC pool: the nominal at id 0 followed by `n` fixed perturbations.
pub fn make_prc_pool(
    nominal: &Parameterization,
    n: usize,
    spec: &PerturbSpec,
    seed: u64,
) -> Result<ParamPool> {
    if n == 0 {
        return Err(invalid("PRC pool needs at least one perturbation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deltas = sample_perturbations(&mut rng, spec, nominal.len(), n)?;
    pool_from_deltas(nominal, deltas)
}

/// PRC pool from explicit perturbation vectors.
pub fn pool_from_deltas(nominal: &Parameterization, deltas: Vec<Vec<f64>>) -> Result<ParamPool> {
    let base = Parameterization {
        psi: nominal.psi.clone(),
        composition: nominal.composition,
        id: 0,
        delta: None,
    };
    let mut entries = Vec::with_capacity(deltas.len() + 1);
    entries.push(Parameterization::perturbed(&base, vec![1.0; base.len()], 0)?);
    for (i, delta) in deltas.into_iter().enumerate() {
        entries.push(Parameterization::perturbed(&base, delta, i + 1)?);
    }
    ParamPool::new(entries, 0)
}

fn same_outputs(a: &Parameterization, b: &Parameterization, probe: &[Vec<f64>]) -> Result<bool> {
    for c in probe {
        if (compose(a, c)? - compose(b, c)?).abs() > DUPLICATE_TOLERANCE {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Collapses task rewards that agree on every probe component vector, keeping
/// the first of each group, and renumbers ids from 0.
pub fn dedup_tasks(tasks: &[Parameterization], probe: &[Vec<f64>]) -> Result<Vec<Parameterization>> {
    let mut kept: Vec<Parameterization> = Vec::new();
    for task in tasks {
        let mut duplicate = false;
        for k in &kept {
            if same_outputs(k, task, probe)? {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            let id = kept.len();
            kept.push(task.clone().with_id(id));
        }
    }
    Ok(kept)
}

/// Component vectors from a uniform-random policy run under the nominal task.
pub fn collect_probe(env: &mut dyn Environment, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = env.descriptor().action_spec.clone();
    let mut probe = Vec::with_capacity(count);
    let mut episode = 0u64;
    env.reset(seed);
    while probe.len() < count {
        let action = match &spec {
            ActionSpec::Discrete(n) => Action::Discrete(rng.random_range(0..*n)),
            ActionSpec::Continuous { low, high, .. } => Action::Continuous(
                low.iter()
                    .zip(high)
                    .map(|(l, h)| rng.random_range(*l..=*h))
                    .collect(),
            ),
        };
        let step = env.step(&action)?;
        probe.push(step.components.0);
        if step.done || step.truncated {
            episode += 1;
            env.reset(seed.wrapping_add(episode));
        }
    }
    Ok(probe)
}

/// The distinct auxiliary task rewards the environment declares.
pub fn make_arc_set(env: &mut dyn Environment, seed: u64) -> Result<Vec<Parameterization>> {
    let descriptor = env.descriptor().clone();
    if descriptor.component_count < 2 || descriptor.tasks.len() < 2 {
        return Err(invalid(format!(
            "`{}` does not declare two or more task rewards",
            descriptor.name
        )));
    }
    let probe = collect_probe(env, PROBE_TRANSITIONS, seed)?;
    let tasks: Vec<Parameterization> = descriptor.tasks.iter().map(|(_, p)| p.clone()).collect();
    dedup_tasks(&tasks, &probe)
}

/// ARC pool: the distinct task rewards, with the nominal merged into its
/// functional duplicate or appended when it has none.
pub fn make_arc_pool(env: &mut dyn Environment, seed: u64) -> Result<ParamPool> {
    let mut entries = make_arc_set(env, seed)?;
    let nominal = env.descriptor().nominal.clone();
    let probe = collect_probe(env, PROBE_TRANSITIONS, seed)?;
    let mut nominal_id = None;
    for e in &entries {
        if same_outputs(e, &nominal, &probe)? {
            nominal_id = Some(e.id);
            break;
        }
    }
    let nominal_id = match nominal_id {
        Some(id) => id,
        None => {
            let id = entries.len();
            entries.push(nominal.with_id(id));
            id
        }
    };
    ParamPool::new(entries, nominal_id)
}

/// Where non-nominal parameterizations come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Alternatives {
    /// Uniform over the non-nominal entries of a finite pool.
    Pool(ParamPool),
    /// Fresh perturbations of the nominal on every draw.
    Continuous {
        nominal: Parameterization,
        spec: PerturbSpec,
    },
}

/// The per-transition law over parameterizations: the nominal with
/// probability `alpha`, an alternative otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureConfig {
    pub alpha: f64,
    pub alternatives: Alternatives,
}

impl MixtureConfig {
    pub fn finite(alpha: f64, pool: ParamPool) -> Result<Self> {
        let cfg = Self {
            alpha,
            alternatives: Alternatives::Pool(pool),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn continuous(alpha: f64, nominal: Parameterization, spec: PerturbSpec) -> Result<Self> {
        let cfg = Self {
            alpha,
            alternatives: Alternatives::Continuous { nominal, spec },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        match &self.alternatives {
            Alternatives::Pool(pool) => {
                if pool.len() < 2 && self.alpha < 1.0 {
                    return Err(Error::EmptyPool);
                }
            }
            Alternatives::Continuous { nominal, spec } => {
                nominal.validate()?;
                spec.validate()?;
            }
        }
        Ok(())
    }

    pub fn pool(&self) -> Option<&ParamPool> {
        match &self.alternatives {
            Alternatives::Pool(pool) => Some(pool),
            Alternatives::Continuous { .. } => None,
        }
    }

    pub fn nominal(&self) -> &Parameterization {
        match &self.alternatives {
            Alternatives::Pool(pool) => pool.nominal(),
            Alternatives::Continuous { nominal, .. } => nominal,
        }
    }

    pub fn nominal_id(&self) -> usize {
        match &self.alternatives {
            Alternatives::Pool(pool) => pool.nominal_id(),
            Alternatives::Continuous { .. } => CONTINUOUS_ID,
        }
    }
}

/// Samples pool ids for a batch (finite mode only).
pub fn sample_mixture_ids<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &MixtureConfig,
    batch: usize,
) -> Result<Vec<usize>> {
    if batch == 0 {
        return Err(invalid("batch must be at least 1"));
    }
    let pool = cfg
        .pool()
        .ok_or_else(|| invalid("id sampling needs a finite pool"))?;
    let nominal = pool.nominal_id();
    if cfg.alpha >= 1.0 {
        return Ok(vec![nominal; batch]);
    }
    if pool.len() < 2 {
        return Err(Error::EmptyPool);
    }
    let alternatives = pool.len() - 1;
    Ok((0..batch)
        .map(|_| {
            if rng.random::<f64>() < cfg.alpha {
                nominal
            } else {
                let j = rng.random_range(0..alternatives);
                if j >= nominal {
                    j + 1
                } else {
                    j
                }
            }
        })
        .collect())
}

/// Samples a parameterization per batch entry, in either mode.
pub fn sample_mixture<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &MixtureConfig,
    batch: usize,
) -> Result<Vec<Parameterization>> {
    match &cfg.alternatives {
        Alternatives::Pool(pool) => sample_mixture_ids(rng, cfg, batch)?
            .into_iter()
            .map(|id| pool.get(id).cloned())
            .collect(),
        Alternatives::Continuous { nominal, spec } => {
            if batch == 0 {
                return Err(invalid("batch must be at least 1"));
            }
            let base = Parameterization::perturbed(nominal, vec![1.0; nominal.len()], CONTINUOUS_ID)?;
            if cfg.alpha >= 1.0 {
                return Ok(vec![base; batch]);
            }
            let mask: Vec<bool> = (0..batch).map(|_| rng.random::<f64>() < cfg.alpha).collect();
            let fresh = mask.iter().filter(|m| !**m).count();
            let mut deltas = if fresh > 0 {
                sample_perturbations(rng, spec, nominal.len(), fresh)?
            } else {
                Vec::new()
            }
            .into_iter();
            mask.into_iter()
                .map(|is_nominal| {
                    if is_nominal {
                        Ok(base.clone())
                    } else {
                        let delta = deltas.next().expect("one delta per alternative");
                        Parameterization::perturbed(nominal, delta, CONTINUOUS_ID)
                    }
                })
                .collect()
        }
    }
}

/// Welford accumulator for one reward stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the running mean.
    pub m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    /// Standard deviation used for scaling; 1 when the estimate is degenerate.
    pub fn scale(&self) -> f64 {
        let var = self.variance();
        if self.count < 2 || var < 1e-6 {
            1.0
        } else {
            var.sqrt().max(1e-6)
        }
    }
}

/// Per-parameterization running reward scales, keyed by pool id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    stats: Vec<RunningStat>,
    frozen: bool,
}

impl RewardNormalizer {
    pub fn new(ids: usize) -> Self {
        Self {
            stats: vec![RunningStat::default(); ids],
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn stats(&self, id: usize) -> Result<&RunningStat> {
        self.stats.get(id).ok_or(Error::UnknownId(id))
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Updates the statistics of `id` with `r` (unless frozen) and returns the
    /// scaled reward.
    pub fn normalize(&mut self, id: usize, r: f64) -> Result<f64> {
        let frozen = self.frozen;
        let stat = self.stats.get_mut(id).ok_or(Error::UnknownId(id))?;
        if !r.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        if !frozen {
            stat.push(r);
        }
        Ok(r / stat.scale())
    }

    /// Scales without touching the statistics.
    pub fn scale(&self, id: usize, r: f64) -> Result<f64> {
        Ok(r / self.stats(id)?.scale())
    }
}
