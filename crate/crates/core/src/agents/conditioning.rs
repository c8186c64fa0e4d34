//! How a parameterization reaches the networks.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::Params;
use crate::error::{invalid, Error, Result};
use crate::reward::Parameterization;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Append the raw parameter vector.
    #[default]
    ConcatPsi,
    /// Append the perturbation, standardized as `(Δ − 1) / (sqrt(spread) − 1)`.
    ConcatDelta,
    /// Append a learned per-id vector.
    Embedding,
    /// One output head per id; the input is the bare state.
    MultiHead,
    /// No conditioning pathway at all.
    None,
}

impl ConditioningMode {
    pub const ALL: [ConditioningMode; 5] = [
        ConditioningMode::ConcatPsi,
        ConditioningMode::ConcatDelta,
        ConditioningMode::Embedding,
        ConditioningMode::MultiHead,
        ConditioningMode::None,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ConditioningMode::ConcatPsi => "concat_psi",
            ConditioningMode::ConcatDelta => "concat_delta",
            ConditioningMode::Embedding => "embedding",
            ConditioningMode::MultiHead => "multi_head",
            ConditioningMode::None => "none",
        }
    }

    /// Width of the block appended to the state.
    pub fn input_width(&self, k: usize, embed_dim: usize) -> usize {
        match self {
            ConditioningMode::ConcatPsi | ConditioningMode::ConcatDelta => k,
            ConditioningMode::Embedding => embed_dim,
            ConditioningMode::MultiHead | ConditioningMode::None => 0,
        }
    }

    pub fn heads(&self, pool_size: usize) -> usize {
        if *self == ConditioningMode::MultiHead {
            pool_size
        } else {
            1
        }
    }

    /// Whether the mode needs a finite pool of ids.
    pub fn needs_ids(&self) -> bool {
        matches!(self, ConditioningMode::Embedding | ConditioningMode::MultiHead)
    }
}

/// One trainable row per pool id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    rows: Array2<f64>,
}

impl EmbeddingTable {
    /// Rows drawn from `N(0, 0.1²)`.
    pub fn new<R: Rng + ?Sized>(ids: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if ids == 0 || dim == 0 {
            return Err(invalid("embedding table needs at least one id and one dimension"));
        }
        let rows = Array2::from_shape_fn((ids, dim), |_| {
            let z: f64 = StandardNormal.sample(rng);
            0.1 * z
        });
        Ok(Self { rows })
    }

    pub fn zeros(ids: usize, dim: usize) -> Self {
        Self {
            rows: Array2::zeros((ids, dim)),
        }
    }

    pub fn ids(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, id: usize) -> Result<&[f64]> {
        if id >= self.ids() {
            return Err(Error::UnknownId(id));
        }
        Ok(self.rows.row(id).to_slice().expect("standard layout"))
    }

    pub fn row_mut(&mut self, id: usize) -> Result<&mut [f64]> {
        if id >= self.ids() {
            return Err(Error::UnknownId(id));
        }
        Ok(self.rows.row_mut(id).into_slice().expect("standard layout"))
    }
}

impl Params for EmbeddingTable {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![self.rows.as_slice().expect("standard layout")]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.rows.as_slice_mut().expect("standard layout")]
    }
}

pub fn standardize_delta(delta: &[f64], spread: f64) -> Result<Vec<f64>> {
    if !(spread > 1.0) {
        return Err(invalid(format!("spread must exceed 1, got {spread}")));
    }
    let denom = spread.sqrt() - 1.0;
    Ok(delta.iter().map(|d| (d - 1.0) / denom).collect())
}

/// The block appended to the state for `p`; empty for `none`.
pub fn condition_block(
    p: &Parameterization,
    mode: ConditioningMode,
    embeddings: Option<&EmbeddingTable>,
    spread: f64,
) -> Result<Vec<f64>> {
    match mode {
        ConditioningMode::ConcatPsi => Ok(p.psi.clone()),
        ConditioningMode::ConcatDelta => match &p.delta {
            Some(d) => standardize_delta(d, spread),
            None => Err(invalid(format!("id {} carries no perturbation", p.id))),
        },
        ConditioningMode::Embedding => {
            let table = embeddings.ok_or_else(|| invalid("embedding mode without a table"))?;
            Ok(table.row(p.id)?.to_vec())
        }
        ConditioningMode::None => Ok(Vec::new()),
        ConditioningMode::MultiHead => Err(invalid("multi_head conditions at the output, not the input")),
    }
}

/// `z = [s, block(p)]`.
pub fn condition_input(
    s: &[f64],
    p: &Parameterization,
    mode: ConditioningMode,
    embeddings: Option<&EmbeddingTable>,
    spread: f64,
) -> Result<Vec<f64>> {
    let mut z = s.to_vec();
    z.extend(condition_block(p, mode, embeddings, spread)?);
    Ok(z)
}
