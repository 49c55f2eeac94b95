//! Online learning of base filters with sample-dependent combination weights.
//!
//! Each step codes one sample `(Wₜ, Zₜ)` against the current base filters with
//! niAPG, folds the aggregated code spectra `Ỹₜ` into the `R × R` history
//! statistics, and refreshes the base filters with a few warm-started ADMM
//! iterations on the resulting quadratic model.

use std::time::Instant;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    aggregate_codes, psnr, reconstruct, BaseFilterBank, CodeTensor, FilterBank, Signal, WeightMatrix,
};
use crate::prox::{project_weight_columns_in_place, ConstraintSetTag};
use crate::solvers::admm::{admm_quadratic_ball_solve, dictionary_objective, AdmmConfig, AdmmState};
use crate::solvers::niapg::{niapg_solve, NiApgConfig, NiApgResult};
use crate::solvers::smooth::SampleFit;
use crate::stats::HistoryStats;
use crate::tensor::{FilterSupport, SpatialArray};
use crate::util::seeded_rng;

/// Standard deviation of the random weights used on a sample's first visit.
const INIT_WEIGHT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScscConfig {
    /// Number of base filters `R`.
    pub r: usize,
    /// Number of combined filters `K` per sample.
    pub k: usize,
    pub beta: f64,
    pub tag: ConstraintSetTag,
    #[serde(default)]
    pub niapg: NiApgConfig,
    #[serde(default = "AdmmConfig::dictionary")]
    pub dictionary_admm: AdmmConfig,
    /// Accept `R > K`, which is outside the intended regime.
    #[serde(default)]
    pub allow_r_above_k: bool,
}

impl ScscConfig {
    /// Defaults for `R` base filters and `K` combined filters with the ℓ₂
    /// weight ball.
    pub fn new(r: usize, k: usize, beta: f64) -> Result<Self> {
        Ok(Self {
            r,
            k,
            beta,
            tag: ConstraintSetTag::weight_l2(r)?,
            niapg: NiApgConfig::default(),
            dictionary_admm: AdmmConfig::dictionary(),
            allow_r_above_k: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.k == 0 {
            return Err(Error::invalid("R and K must be at least 1"));
        }
        if self.r > self.k {
            if self.allow_r_above_k {
                warn!("R = {} exceeds K = {}", self.r, self.k);
            } else {
                return Err(Error::invalid(format!(
                    "R = {} exceeds K = {}",
                    self.r, self.k
                )));
            }
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !self.tag.is_weight_ball() {
            return Err(Error::invalid("weights need an l1 or l2 ball constraint"));
        }
        self.tag.validate(self.r)?;
        self.niapg.validate()?;
        self.dictionary_admm.validate()
    }
}

/// Everything threaded through the online loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ScscModel {
    pub bank: BaseFilterBank,
    pub stats: HistoryStats,
    pub admm: AdmmState,
    pub config: ScscConfig,
    pub seed: u64,
}

/// Seeded standard-normal filters on the support, each scaled to unit norm.
pub fn random_unit_filters(
    support: &FilterSupport,
    count: usize,
    seed: u64,
) -> Result<FilterBank> {
    let mut rng = seeded_rng(seed);
    let m = support.filter_len();
    let filters: Vec<SpatialArray> = (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            SpatialArray::new(support.extents().to_vec(), v)
        })
        .collect::<Result<_>>()?;
    FilterBank::from_spatial(&filters, support)
}

/// Deterministic per-sample seed derived from the model seed.
pub(crate) fn sample_seed(seed: u64, sample: u64) -> u64 {
    seed ^ sample.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fresh feasible weights: small Gaussian entries projected onto the ball.
pub fn initial_weights(r: usize, k: usize, tag: &ConstraintSetTag, seed: u64) -> Result<WeightMatrix> {
    let mut rng = seeded_rng(seed);
    let entries: Vec<f64> = (0..r * k)
        .map(|_| INIT_WEIGHT_SCALE * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut w = WeightMatrix::from_raw(r, k, entries, *tag)?;
    project_weight_columns_in_place(&mut w, tag)?;
    Ok(w)
}

pub fn init_model(support: &FilterSupport, config: ScscConfig, seed: u64) -> Result<ScscModel> {
    config.validate()?;
    let bank = random_unit_filters(support, config.r, seed)?;
    let stats = HistoryStats::new(config.r, support.padded_extents());
    let admm = AdmmState::from_bank(&bank, config.dictionary_admm.rho);
    Ok(ScscModel {
        bank,
        stats,
        admm,
        config,
        seed,
    })
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub weights: WeightMatrix,
    pub codes: CodeTensor,
    /// `(W, Z)` objective reached by niAPG against the previous filters.
    pub sub_objective: f64,
    /// Quadratic-model objective after the filter update.
    pub dict_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub niapg_iterations: usize,
    /// Reconstruction of the sample from the filters it was coded against.
    pub reconstruction: SpatialArray,
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub epoch: usize,
    pub sample_id: usize,
    pub sub_obj: f64,
    pub dict_obj: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub millis: f64,
}

pub const TRACE_HEADER: &str = "t,epoch,sampleId,subObj,dictObj,primalRes,dualRes,millis";

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:.3}",
            self.t,
            self.epoch,
            self.sample_id,
            self.sub_obj,
            self.dict_obj,
            self.primal_res,
            self.dual_res,
            self.millis
        )
    }
}

/// Trace rows as CSV, optionally without the wall-time column.
pub fn trace_csv(rows: &[TraceRow], with_time: bool) -> String {
    let mut out = String::new();
    if with_time {
        out.push_str(TRACE_HEADER);
    } else {
        out.push_str(TRACE_HEADER.trim_end_matches(",millis"));
    }
    out.push('\n');
    for row in rows {
        let line = row.csv_line();
        if with_time {
            out.push_str(&line);
        } else {
            out.push_str(&line[..line.rfind(',').unwrap_or(line.len())]);
        }
        out.push('\n');
    }
    out
}

/// Result of [`ScscModel::train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub trace: Vec<TraceRow>,
    /// Mean PSNR of each epoch's reconstructions, in visiting order.
    pub epoch_psnr: Vec<f64>,
    /// Last `(W, Z)` of each sample, by sample index.
    pub codes: Vec<Option<(WeightMatrix, CodeTensor)>>,
}

/// Outcome of coding a sample with the filters held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub weights: WeightMatrix,
    pub codes: CodeTensor,
    pub reconstruction: SpatialArray,
    pub objective: f64,
    pub solver: NiApgResult,
}

/// Bytes held by the model's statistics and filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryFootprint {
    pub stats: usize,
    pub second_moment: usize,
    pub filters: usize,
}

impl MemoryFootprint {
    pub fn total(&self) -> usize {
        self.stats + self.filters
    }
}

impl ScscModel {
    pub fn support(&self) -> &FilterSupport {
        self.bank.support()
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

    fn fresh_start(&self, sample: u64) -> Result<(WeightMatrix, CodeTensor)> {
        let w = initial_weights(
            self.config.r,
            self.config.k,
            &self.config.tag,
            sample_seed(self.seed, sample),
        )?;
        Ok((w, CodeTensor::zeros(self.support().padded_extents(), self.config.k)))
    }

    fn solve_codes(
        &self,
        x: &Signal,
        mask: Option<&[f64]>,
        warm: Option<(&WeightMatrix, &CodeTensor)>,
        sample: u64,
        niapg: &NiApgConfig,
    ) -> Result<NiApgResult> {
        self.check_signal(x)?;
        let mut fit = SampleFit::new(self.bank.spectra(), x.spatial(), x.spectral(), self.config.k)?;
        if let Some(m) = mask {
            fit = fit.with_mask(m)?;
        }
        let fresh;
        let (w0, z0) = match warm {
            // (0, 0) is stationary for an all-zero sample
            _ if x.spatial().max_abs() == 0.0 => {
                fresh = (
                    WeightMatrix::zeros(self.config.r, self.config.k, self.config.tag),
                    CodeTensor::zeros(self.support().padded_extents(), self.config.k),
                );
                (&fresh.0, &fresh.1)
            }
            Some(pair) => pair,
            None => {
                fresh = self.fresh_start(sample)?;
                (&fresh.0, &fresh.1)
            }
        };
        niapg_solve(&fit, &self.config.tag, self.config.beta, w0, z0, niapg)
    }

    /// One pass of the online loop on sample `x`.
    ///
    /// `warm` seeds niAPG (e.g. with the sample's codes from its previous
    /// visit); otherwise a fresh start is drawn from `sample_id`.
    pub fn train_step(
        &mut self,
        x: &Signal,
        warm: Option<(&WeightMatrix, &CodeTensor)>,
        sample_id: usize,
    ) -> Result<StepReport> {
        self.train_step_inner(x, warm, sample_id)
            .map_err(|e| e.at_sample(sample_id))
    }

    fn train_step_inner(
        &mut self,
        x: &Signal,
        warm: Option<(&WeightMatrix, &CodeTensor)>,
        sample_id: usize,
    ) -> Result<StepReport> {
        let niapg = self.config.niapg;
        let coded = self.solve_codes(x, None, warm, sample_id as u64, &niapg)?;
        let reconstruction = reconstruct(&self.bank, &coded.weights, &coded.codes)?;
        let y = aggregate_codes(&coded.codes, &coded.weights)?;
        self.stats.update(&y, x.spectral())?;
        let warm_state = std::mem::replace(&mut self.admm, AdmmState::from_bank(&self.bank, 1.0));
        let (bank, state, report) = admm_quadratic_ball_solve(
            &self.stats,
            self.bank.support(),
            warm_state,
            &self.config.dictionary_admm,
        )?;
        self.bank = bank;
        self.admm = state;
        let dict_objective = dictionary_objective(&self.stats, self.bank.spectra());
        debug!(
            "t={} sample={sample_id} sub={:.6e} dict={dict_objective:.6e} iters={}",
            self.stats.count(),
            coded.objective,
            coded.iterations
        );
        Ok(StepReport {
            sub_objective: coded.objective,
            dict_objective,
            primal_residual: report.final_primal_residual(),
            dual_residual: report.final_dual_residual(),
            niapg_iterations: coded.iterations,
            weights: coded.weights,
            codes: coded.codes,
            reconstruction,
        })
    }

    /// Reshuffled passes over `dataset`, warm-starting each sample from its
    /// previous visit.
    pub fn train(&mut self, dataset: &[Signal], epochs: usize, shuffle_seed: u64) -> Result<TrainingOutcome> {
        if dataset.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let mut rng = seeded_rng(shuffle_seed);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut cache: Vec<Option<(WeightMatrix, CodeTensor)>> = vec![None; dataset.len()];
        let mut trace = Vec::with_capacity(epochs * dataset.len());
        let mut epoch_psnr = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut recon = Vec::with_capacity(dataset.len());
            let mut refs = Vec::with_capacity(dataset.len());
            for &i in &order {
                let start = Instant::now();
                let warm = cache[i].as_ref().map(|(w, z)| (w, z));
                let step = self.train_step(&dataset[i], warm, i)?;
                let millis = start.elapsed().as_secs_f64() * 1e3;
                trace.push(TraceRow {
                    t: self.stats.count(),
                    epoch,
                    sample_id: i,
                    sub_obj: step.sub_objective,
                    dict_obj: step.dict_objective,
                    primal_res: step.primal_residual,
                    dual_res: step.dual_residual,
                    millis,
                });
                recon.push(step.reconstruction);
                refs.push(dataset[i].spatial().clone());
                cache[i] = Some((step.weights, step.codes));
            }
            epoch_psnr.push(psnr(&recon, &refs)?);
        }
        Ok(TrainingOutcome {
            trace,
            epoch_psnr,
            codes: cache,
        })
    }

    /// Ablation: one weight matrix shared by every sample, updated
    /// alternately with the codes as the stream is visited. Returns the mean
    /// objective of the training set with the final shared weights, each
    /// sample's codes re-solved against them.
    pub fn train_shared_weights(
        &mut self,
        dataset: &[Signal],
        epochs: usize,
        shuffle_seed: u64,
    ) -> Result<(WeightMatrix, f64)> {
        if dataset.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let mut rng = seeded_rng(shuffle_seed);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut shared = self.fresh_start(0)?.0;
        let mut cache: Vec<Option<CodeTensor>> = vec![None; dataset.len()];
        let zeros = CodeTensor::zeros(self.support().padded_extents(), self.config.k);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let z0 = cache[i].as_ref().unwrap_or(&zeros).clone();
                let step = self.train_step(&dataset[i], Some((&shared, &z0)), i)?;
                shared = step.weights;
                cache[i] = Some(step.codes);
            }
        }
        let objective = self.mean_objective_with_weights(dataset, &shared)?;
        Ok((shared, objective))
    }

    /// Mean `(W, Z)` objective over `dataset` with `W` fixed for every sample
    /// and `Z` re-solved.
    pub fn mean_objective_with_weights(&self, dataset: &[Signal], w: &WeightMatrix) -> Result<f64> {
        let mut niapg = self.config.niapg;
        niapg.fix_weights = true;
        let zeros = CodeTensor::zeros(self.support().padded_extents(), self.config.k);
        let mut total = 0.0;
        for (i, x) in dataset.iter().enumerate() {
            let res = self
                .solve_codes(x, None, Some((w, &zeros)), i as u64, &niapg)
                .map_err(|e| e.at_sample(i))?;
            total += res.objective;
        }
        Ok(total / dataset.len() as f64)
    }

    /// Code a new sample with the filters fixed.
    pub fn infer(&self, x: &Signal) -> Result<Inference> {
        self.infer_inner(x, None)
    }

    /// Code a sample whose fidelity term is weighted by `mask`, e.g. to fill
    /// in missing pixels.
    pub fn infer_masked(&self, x: &Signal, mask: &[f64]) -> Result<Inference> {
        self.infer_inner(x, Some(mask))
    }

    /// Code a sample starting from a known `(W, Z)`, such as the codes from
    /// its last training visit.
    pub fn infer_from(&self, x: &Signal, w: &WeightMatrix, z: &CodeTensor) -> Result<Inference> {
        let solver = self.solve_codes(x, None, Some((w, z)), 0, &self.config.niapg)?;
        self.finish_inference(solver)
    }

    fn infer_inner(&self, x: &Signal, mask: Option<&[f64]>) -> Result<Inference> {
        let solver = self.solve_codes(x, mask, None, u64::MAX, &self.config.niapg)?;
        self.finish_inference(solver)
    }

    fn finish_inference(&self, solver: NiApgResult) -> Result<Inference> {
        let reconstruction = reconstruct(&self.bank, &solver.weights, &solver.codes)?;
        Ok(Inference {
            weights: solver.weights.clone(),
            codes: solver.codes.clone(),
            reconstruction,
            objective: solver.objective,
            solver,
        })
    }

    /// Objective of `(W, Z)` for sample `x` under the current filters.
    pub fn sample_objective(&self, x: &Signal, w: &WeightMatrix, z: &CodeTensor) -> Result<f64> {
        self.check_signal(x)?;
        Ok(crate::model::spectral_objective(x.spectral(), &self.bank, w, z)? + self.config.beta * z.l1_norm())
    }

    pub fn memory_footprint(&self) -> MemoryFootprint {
        let stats = self.stats.bytes();
        let filters = self.bank.count()
            * self.support().padded_len()
            * std::mem::size_of::<num_complex::Complex64>();
        MemoryFootprint {
            stats: stats.total(),
            second_moment: stats.second_moment,
            filters,
        }
    }
}
