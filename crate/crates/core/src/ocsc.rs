//! Shared-dictionary online convolutional sparse coding, the baseline.
//!
//! Codes come from the convex ADMM code solve against the `K` shared filters;
//! the `K × K` per-frequency statistics of the code spectra drive the same
//! dictionary ADMM used for the base filters.

use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{psnr, CodeTensor, Signal, SharedDictionary};
use crate::scsc::{random_unit_filters, MemoryFootprint, TraceRow};
use crate::solvers::admm::{
    admm_code_solve, admm_quadratic_ball_solve, code_objective, dictionary_objective, AdmmConfig,
    AdmmState, CodeSolveReport,
};
use crate::stats::HistoryStats;
use crate::tensor::{fft_unchecked, inverse_fft, FilterSupport, SpatialArray, SpectralArray};
use crate::util::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcscConfig {
    pub k: usize,
    pub beta: f64,
    #[serde(default = "AdmmConfig::code")]
    pub code_admm: AdmmConfig,
    #[serde(default = "AdmmConfig::dictionary")]
    pub dictionary_admm: AdmmConfig,
}

impl OcscConfig {
    pub fn new(k: usize, beta: f64) -> Self {
        Self {
            k,
            beta,
            code_admm: AdmmConfig::code(),
            dictionary_admm: AdmmConfig::dictionary(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        self.code_admm.validate()?;
        self.dictionary_admm.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcscModel {
    pub dict: SharedDictionary,
    pub stats: HistoryStats,
    pub admm: AdmmState,
    pub config: OcscConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcscStepReport {
    pub codes: CodeTensor,
    pub code_objective: f64,
    pub dict_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub code_report: CodeSolveReport,
    pub reconstruction: SpatialArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcscOutcome {
    pub trace: Vec<TraceRow>,
    pub epoch_psnr: Vec<f64>,
    pub codes: Vec<Option<CodeTensor>>,
}

pub fn init_ocsc(support: &FilterSupport, config: OcscConfig, seed: u64) -> Result<OcscModel> {
    config.validate()?;
    let dict = random_unit_filters(support, config.k, seed)?;
    Ok(OcscModel {
        stats: HistoryStats::new(config.k, support.padded_extents()),
        admm: AdmmState::from_bank(&dict, config.dictionary_admm.rho),
        dict,
        config,
        seed,
    })
}

/// Code spectra `Z̃(:,k)`.
pub fn code_spectra(z: &CodeTensor) -> Vec<SpectralArray> {
    (0..z.count()).map(|k| fft_unchecked(&z.column_array(k))).collect()
}

/// `Σₖ D(:,k) * Z(:,k)`.
pub fn reconstruct_shared(dict: &SharedDictionary, z: &CodeTensor) -> Result<SpatialArray> {
    if dict.count() != z.count() || z.shape() != dict.support().padded_extents() {
        return Err(Error::ShapeMismatch {
            expected: vec![dict.count(), dict.support().padded_len()],
            actual: vec![z.count(), z.signal_len()],
        });
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); z.signal_len()];
    for (d, zk) in dict.spectra().iter().zip(code_spectra(z)) {
        for ((a, di), zi) in acc.iter_mut().zip(d.data()).zip(zk.data()) {
            *a += di * zi;
        }
    }
    inverse_fft(&SpectralArray::new(z.shape().to_vec(), acc)?)
}

impl OcscModel {
    pub fn support(&self) -> &FilterSupport {
        self.dict.support()
    }

    pub fn samples_seen(&self) -> u64 {
        self.stats.count()
    }

    fn check_signal(&self, x: &Signal) -> Result<()> {
        if x.shape() != self.support().padded_extents() {
            return Err(Error::ShapeMismatch {
                expected: self.support().padded_extents().to_vec(),
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn train_step(
        &mut self,
        x: &Signal,
        warm: Option<&CodeTensor>,
        sample_id: usize,
    ) -> Result<OcscStepReport> {
        self.train_step_inner(x, warm).map_err(|e| e.at_sample(sample_id))
    }

    fn train_step_inner(&mut self, x: &Signal, warm: Option<&CodeTensor>) -> Result<OcscStepReport> {
        self.check_signal(x)?;
        let (codes, code_report) = admm_code_solve(
            x.spectral(),
            self.dict.spectra(),
            self.config.beta,
            &self.config.code_admm,
            warm,
        )?;
        let code_obj = code_objective(x.spectral(), self.dict.spectra(), &codes, self.config.beta)?;
        let reconstruction = reconstruct_shared(&self.dict, &codes)?;
        self.stats.update(&code_spectra(&codes), x.spectral())?;
        let warm_state = std::mem::replace(&mut self.admm, AdmmState::from_bank(&self.dict, 1.0));
        let (dict, state, report) = admm_quadratic_ball_solve(
            &self.stats,
            self.dict.support(),
            warm_state,
            &self.config.dictionary_admm,
        )?;
        self.dict = dict;
        self.admm = state;
        Ok(OcscStepReport {
            dict_objective: dictionary_objective(&self.stats, self.dict.spectra()),
            primal_residual: report.final_primal_residual(),
            dual_residual: report.final_dual_residual(),
            code_objective: code_obj,
            codes,
            code_report,
            reconstruction,
        })
    }

    pub fn train(&mut self, dataset: &[Signal], epochs: usize, shuffle_seed: u64) -> Result<OcscOutcome> {
        if dataset.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let mut rng = seeded_rng(shuffle_seed);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut cache: Vec<Option<CodeTensor>> = vec![None; dataset.len()];
        let mut trace = Vec::new();
        let mut epoch_psnr = Vec::new();
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut recon = Vec::with_capacity(dataset.len());
            let mut refs = Vec::with_capacity(dataset.len());
            for &i in &order {
                let start = Instant::now();
                let step = self.train_step(&dataset[i], cache[i].as_ref(), i)?;
                trace.push(TraceRow {
                    t: self.stats.count(),
                    epoch,
                    sample_id: i,
                    sub_obj: step.code_objective,
                    dict_obj: step.dict_objective,
                    primal_res: step.primal_residual,
                    dual_res: step.dual_residual,
                    millis: start.elapsed().as_secs_f64() * 1e3,
                });
                recon.push(step.reconstruction);
                refs.push(dataset[i].spatial().clone());
                cache[i] = Some(step.codes);
            }
            epoch_psnr.push(psnr(&recon, &refs)?);
        }
        Ok(OcscOutcome {
            trace,
            epoch_psnr,
            codes: cache,
        })
    }

    /// Code `x` against the shared filters and reconstruct it.
    pub fn infer(&self, x: &Signal) -> Result<(CodeTensor, SpatialArray)> {
        self.check_signal(x)?;
        let (codes, _) = admm_code_solve(
            x.spectral(),
            self.dict.spectra(),
            self.config.beta,
            &self.config.code_admm,
            None,
        )?;
        let recon = reconstruct_shared(&self.dict, &codes)?;
        Ok((codes, recon))
    }

    pub fn memory_footprint(&self) -> MemoryFootprint {
        let stats = self.stats.bytes();
        MemoryFootprint {
            stats: stats.total(),
            second_moment: stats.second_moment,
            filters: self.dict.count() * self.support().padded_len() * std::mem::size_of::<Complex64>(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sample_is_coded_as_zero() {
        let support = FilterSupport::new(vec![3], vec![8]).unwrap();
        let mut model = init_ocsc(&support, OcscConfig::new(3, 0.1), 4).unwrap();
        let x = Signal::new(SpatialArray::zeros(&[8])).unwrap();
        let step = model.train_step(&x, None, 0).unwrap();
        assert!(step.codes.data().iter().all(|&v| v == 0.0));
        assert!(step.reconstruction.data().iter().all(|&v| v == 0.0));
        assert!(model.dict.max_filter_norm().unwrap() <= 1.0 + 1e-8);
    }

    #[test]
    fn statistics_are_k_by_k() {
        let support = FilterSupport::new(vec![3], vec![8]).unwrap();
        let model = init_ocsc(&support, OcscConfig::new(6, 0.1), 4).unwrap();
        assert_eq!(model.stats.dim(), 6);
        assert_eq!(model.memory_footprint().second_moment, 36 * 8 * 16);
    }
}
