//! Training and inference for either learner behind one interface.

use std::path::Path;
use std::time::Instant;

use scsc_core::ocsc::{reconstruct_shared, OcscOutcome};
use scsc_core::persist::read_metadata;
use scsc_core::scsc::TrainingOutcome;
use scsc_core::solvers::{AdmmConfig, NiApgConfig};
use scsc_core::{
    init_model, init_ocsc, ConstraintSetTag, FilterSupport, MemoryFootprint, ModelKind, ModelMetadata, OcscConfig,
    OcscModel, ScscConfig, ScscModel, Signal, SpatialArray, TraceRow,
};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Scsc,
    Ocsc,
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scsc" => Ok(Algo::Scsc),
            "ocsc" => Ok(Algo::Ocsc),
            other => Err(format!("unknown algorithm `{other}` (expected scsc or ocsc)")),
        }
    }
}

fn default_beta() -> f64 {
    1.0
}

fn default_filter_size() -> Vec<usize> {
    vec![11, 11]
}

fn default_tag() -> String {
    "l2".into()
}

fn default_epochs() -> usize {
    10
}

/// Hyperparameters for training a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub algo: Algo,
    /// Base filters; SCSC only.
    #[serde(default)]
    pub r: Option<usize>,
    pub k: usize,
    /// Weight constraint, `l1` or `l2`; SCSC only.
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_filter_size")]
    pub filter_size: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shuffle_seed: u64,
    #[serde(default)]
    pub niapg: Option<NiApgConfig>,
    #[serde(default)]
    pub dictionary_admm: Option<AdmmConfig>,
    #[serde(default)]
    pub code_admm: Option<AdmmConfig>,
}

impl ModelSpec {
    pub fn scsc(r: usize, k: usize, beta: f64) -> Self {
        Self {
            algo: Algo::Scsc,
            r: Some(r),
            k,
            tag: default_tag(),
            beta,
            filter_size: default_filter_size(),
            epochs: default_epochs(),
            seed: 0,
            shuffle_seed: 0,
            niapg: None,
            dictionary_admm: None,
            code_admm: None,
        }
    }

    pub fn ocsc(k: usize, beta: f64) -> Self {
        Self {
            algo: Algo::Ocsc,
            r: None,
            ..Self::scsc(1, k, beta)
        }
    }

    fn support(&self, signal_shape: &[usize]) -> Result<FilterSupport> {
        if self.filter_size.len() != signal_shape.len() {
            return Err(PipelineError::Usage(format!(
                "filter size {:?} has rank {} but the signals have shape {signal_shape:?}",
                self.filter_size,
                self.filter_size.len()
            )));
        }
        Ok(FilterSupport::new(self.filter_size.clone(), signal_shape.to_vec())?)
    }

    pub fn scsc_config(&self) -> Result<ScscConfig> {
        let r = self
            .r
            .ok_or_else(|| PipelineError::Usage("SCSC needs the number of base filters R".into()))?;
        let mut config = ScscConfig::new(r, self.k, self.beta)?;
        config.tag = ConstraintSetTag::weight_from_name(&self.tag, r)?;
        if let Some(n) = self.niapg {
            config.niapg = n;
        }
        if let Some(d) = self.dictionary_admm {
            config.dictionary_admm = d;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn ocsc_config(&self) -> Result<OcscConfig> {
        let mut config = OcscConfig::new(self.k, self.beta);
        if let Some(d) = self.dictionary_admm {
            config.dictionary_admm = d;
        }
        if let Some(c) = self.code_admm {
            config.code_admm = c;
        }
        config.validate()?;
        Ok(config)
    }

    /// A fresh, untrained model for signals of `signal_shape`.
    pub fn init(&self, signal_shape: &[usize]) -> Result<AnyModel> {
        let support = self.support(signal_shape)?;
        Ok(match self.algo {
            Algo::Scsc => AnyModel::Scsc(init_model(&support, self.scsc_config()?, self.seed)?),
            Algo::Ocsc => AnyModel::Ocsc(init_ocsc(&support, self.ocsc_config()?, self.seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Scsc(ScscModel),
    Ocsc(OcscModel),
}

/// Trace and per-epoch PSNR of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    pub epoch_psnr: Vec<f64>,
    /// Wall time of each epoch in seconds.
    pub epoch_seconds: Vec<f64>,
}

impl AnyModel {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| PipelineError::data(path, e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> scsc_core::Result<Self> {
        Ok(match read_metadata(bytes)?.kind {
            ModelKind::Scsc => AnyModel::Scsc(ScscModel::from_bytes(bytes)?),
            ModelKind::Ocsc => AnyModel::Ocsc(OcscModel::from_bytes(bytes)?),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(match self {
            AnyModel::Scsc(m) => m.to_bytes()?,
            AnyModel::Ocsc(m) => m.to_bytes()?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let saved = match self {
            AnyModel::Scsc(m) => m.save(path),
            AnyModel::Ocsc(m) => m.save(path),
        };
        saved.map_err(|e| match e {
            scsc_core::Error::Io(io) => PipelineError::io(path, io),
            other => other.into(),
        })
    }

    pub fn metadata(&self) -> ModelMetadata {
        match self {
            AnyModel::Scsc(m) => m.metadata(),
            AnyModel::Ocsc(m) => m.metadata(),
        }
    }

    pub fn support(&self) -> &FilterSupport {
        match self {
            AnyModel::Scsc(m) => m.support(),
            AnyModel::Ocsc(m) => m.support(),
        }
    }

    pub fn memory_footprint(&self) -> MemoryFootprint {
        match self {
            AnyModel::Scsc(m) => m.memory_footprint(),
            AnyModel::Ocsc(m) => m.memory_footprint(),
        }
    }

    fn check_shape(&self, signals: &[Signal]) -> Result<()> {
        let want = self.support().padded_extents();
        match signals.iter().position(|s| s.shape() != want) {
            Some(i) => Err(PipelineError::Dataset(format!(
                "signal {i} has shape {:?}, the model expects {want:?}",
                signals[i].shape()
            ))),
            None => Ok(()),
        }
    }

    /// Train one epoch at a time so each epoch can be timed.
    pub fn train(&mut self, signals: &[Signal], epochs: usize, shuffle_seed: u64) -> Result<TrainReport> {
        self.check_shape(signals)?;
        let mut report = TrainReport {
            trace: Vec::new(),
            epoch_psnr: Vec::new(),
            epoch_seconds: Vec::new(),
        };
        if epochs == 0 {
            return Ok(report);
        }
        let start = Instant::now();
        let (trace, psnr) = match self {
            AnyModel::Scsc(m) => {
                let TrainingOutcome { trace, epoch_psnr, .. } = m.train(signals, epochs, shuffle_seed)?;
                (trace, epoch_psnr)
            }
            AnyModel::Ocsc(m) => {
                let OcscOutcome { trace, epoch_psnr, .. } = m.train(signals, epochs, shuffle_seed)?;
                (trace, epoch_psnr)
            }
        };
        let total = start.elapsed().as_secs_f64();
        // attribute the run's time to epochs in proportion to the traced step times
        let step_total: f64 = trace.iter().map(|r| r.millis).sum();
        for e in 0..epochs {
            let ms: f64 = trace.iter().filter(|r| r.epoch == e).map(|r| r.millis).sum();
            let share = if step_total > 0.0 { ms / step_total } else { 1.0 / epochs as f64 };
            report.epoch_seconds.push(total * share);
        }
        report.trace = trace;
        report.epoch_psnr = psnr;
        Ok(report)
    }

    /// The same filters coded with sparsity weight `beta`.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut m = self.clone();
        match &mut m {
            AnyModel::Scsc(s) => {
                s.config.beta = beta;
                s.config.validate()?;
            }
            AnyModel::Ocsc(o) => {
                o.config.beta = beta;
                o.config.validate()?;
            }
        }
        Ok(m)
    }

    /// Code `x` with the filters fixed and return the reconstruction.
    pub fn reconstruct(&self, x: &Signal) -> Result<SpatialArray> {
        Ok(match self {
            AnyModel::Scsc(m) => m.infer(x)?.reconstruction,
            AnyModel::Ocsc(m) => m.infer(x)?.1,
        })
    }
}

/// Inference with the fidelity term weighted by `mask`. An all-ones mask
/// is plain inference.
pub fn masked_infer(model: &AnyModel, x: &Signal, mask: &[f64]) -> Result<SpatialArray> {
    if mask.len() != x.len() {
        return Err(PipelineError::Dataset(format!(
            "mask has {} entries for a signal of {}",
            mask.len(),
            x.len()
        )));
    }
    if mask.iter().all(|&m| m == 1.0) {
        return model.reconstruct(x);
    }
    match model {
        AnyModel::Scsc(m) => Ok(m.infer_masked(x, mask)?.reconstruction),
        AnyModel::Ocsc(m) => {
            if mask.iter().all(|&v| v == 0.0) {
                return Ok(reconstruct_shared(&m.dict, &scsc_core::CodeTensor::zeros(x.shape(), m.config.k))?);
            }
            Err(PipelineError::Usage(
                "masked inference needs a sample-dependent (scsc) model".into(),
            ))
        }
    }
}
