//! Dataset ingestion, preprocessing, experiment orchestration and result
//! export around the `scsc-core` learners.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod model;
pub mod preprocess;
pub mod task;
pub mod tensor_file;

pub use error::{PipelineError, Result};
pub use experiment::{run_config, run_experiment, ExperimentConfig};
pub use model::{masked_infer, Algo, AnyModel, ModelSpec};
pub use preprocess::PreprocessConfig;
pub use task::{corrupt, TaskSpec};
