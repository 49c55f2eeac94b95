//! Signals drawn from the model itself, for generate-and-recover checks.
//!
//! Ground-truth base filters are seeded unit-norm Gaussians on the support;
//! each sample gets its own feasible weights and sparse Gaussian code maps,
//! and the signal is the exact model synthesis `Σₖ (B W)(:,k) * Z(:,k)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{reconstruct, BaseFilterBank, CodeTensor, Signal, WeightMatrix};
use crate::prox::{ConstraintKind, ConstraintSetTag};
use crate::scsc::random_unit_filters;
use crate::tensor::{FilterSupport, SpatialArray};
use crate::util::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub filter_extents: Vec<usize>,
    pub padded_extents: Vec<usize>,
    pub r: usize,
    pub k: usize,
    pub samples: usize,
    /// Probability that a code entry is nonzero.
    pub density: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub support: FilterSupport,
    pub bank: BaseFilterBank,
    pub weights: Vec<WeightMatrix>,
    pub codes: Vec<CodeTensor>,
    pub signals: Vec<Signal>,
}

/// Random weights on the boundary of the ball: every column has norm equal to
/// the radius.
pub fn boundary_weights(r: usize, k: usize, tag: &ConstraintSetTag, rng: &mut impl Rng) -> Result<WeightMatrix> {
    let mut entries = vec![0.0; r * k];
    for col in 0..k {
        let v: Vec<f64> = (0..r).map(|_| rng.sample(StandardNormal)).collect();
        let norm = match tag.kind {
            ConstraintKind::WeightL1Ball => v.iter().map(|x: &f64| x.abs()).sum::<f64>(),
            _ => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        // shrink slightly so rounding cannot push a column outside
        let scale = tag.radius * (1.0 - 1e-12) / norm;
        for (row, x) in v.iter().enumerate() {
            entries[row * k + col] = x * scale;
        }
    }
    WeightMatrix::new(r, k, entries, *tag)
}

/// Sparse Gaussian code maps.
pub fn sparse_codes(shape: &[usize], k: usize, density: f64, rng: &mut impl Rng) -> Result<CodeTensor> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(format!("density must lie in [0, 1], got {density}")));
    }
    let p: usize = shape.iter().product();
    let columns: Vec<SpatialArray> = (0..k)
        .map(|_| {
            let data = (0..p)
                .map(|_| {
                    if rng.random::<f64>() < density {
                        rng.sample(StandardNormal)
                    } else {
                        0.0
                    }
                })
                .collect();
            SpatialArray::new(shape.to_vec(), data)
        })
        .collect::<Result<_>>()?;
    CodeTensor::from_columns(&columns)
}

pub fn generate(config: &SyntheticConfig, tag: &ConstraintSetTag) -> Result<SyntheticSet> {
    if config.samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let support = FilterSupport::new(config.filter_extents.clone(), config.padded_extents.clone())?;
    let bank = random_unit_filters(&support, config.r, config.seed)?;
    let mut rng = seeded_rng(config.seed.wrapping_add(1));
    let mut weights = Vec::with_capacity(config.samples);
    let mut codes = Vec::with_capacity(config.samples);
    let mut signals = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let w = boundary_weights(config.r, config.k, tag, &mut rng)?;
        let z = sparse_codes(&config.padded_extents, config.k, config.density, &mut rng)?;
        signals.push(Signal::new(reconstruct(&bank, &w, &z)?)?);
        weights.push(w);
        codes.push(z);
    }
    Ok(SyntheticSet {
        support,
        bank,
        weights,
        codes,
        signals,
    })
}
