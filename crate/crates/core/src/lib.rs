//! Online convolutional sparse coding with sample-dependent dictionaries.
//!
//! Each sample gets its own dictionary `Dᵢ = B Wᵢ`, built from `R` shared base
//! filters `B` and per-sample weights `Wᵢ`. Only the `R × R` per-frequency
//! history statistics are kept between samples, instead of the `K × K`
//! statistics of a shared-dictionary online learner, which is also provided
//! here as a baseline.

pub mod error;
pub mod linalg;
pub mod model;
pub mod ocsc;
pub mod persist;
pub mod prox;
pub mod scsc;
pub mod solvers;
pub mod stats;
pub mod synthetic;
pub mod tensor;
pub mod util;

pub use error::{Error, Result};
pub use model::{
    aggregate_codes, compression_ratio, full_objective, psnr, psnr_per_sample, reconstruct,
    spatial_objective, spectral_objective, BaseFilterBank, CodeTensor, FilterBank,
    SampleDependentDictionary, SharedDictionary, Signal, WeightMatrix,
};
pub use prox::{ConstraintKind, ConstraintSetTag};
pub use tensor::{FilterSupport, SpatialArray, SpectralArray};
pub use ocsc::{init_ocsc, OcscConfig, OcscModel};
pub use persist::{ModelKind, ModelMetadata};
pub use scsc::{init_model, Inference, MemoryFootprint, ScscConfig, ScscModel, TraceRow};
pub use stats::HistoryStats;
