//! Corruptions for the denoising and inpainting experiments.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use scsc_core::{psnr_per_sample, Signal, SpatialArray};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Reconstruct,
    Denoise {
        noise_variance: f64,
        seed: u64,
        /// Sparsity weight used for recovery instead of the model's own.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    Inpaint {
        mask_fraction: f64,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Reconstruct => "reconstruct",
            TaskSpec::Denoise { .. } => "denoise",
            TaskSpec::Inpaint { .. } => "inpaint",
        }
    }

    /// Recovery sparsity weight overriding the model's.
    pub fn beta(&self) -> Option<f64> {
        match *self {
            TaskSpec::Reconstruct => None,
            TaskSpec::Denoise { beta, .. } | TaskSpec::Inpaint { beta, .. } => beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.beta() {
            if !(b > 0.0 && b.is_finite()) {
                return Err(PipelineError::Usage(format!("task beta must be positive, got {b}")));
            }
        }
        match *self {
            TaskSpec::Reconstruct => Ok(()),
            TaskSpec::Denoise { noise_variance, .. } => {
                if noise_variance >= 0.0 && noise_variance.is_finite() {
                    Ok(())
                } else {
                    Err(PipelineError::Usage(format!(
                        "noise variance must be nonnegative, got {noise_variance}"
                    )))
                }
            }
            TaskSpec::Inpaint { mask_fraction, .. } => {
                if (0.0..=1.0).contains(&mask_fraction) {
                    Ok(())
                } else {
                    Err(PipelineError::Usage(format!(
                        "mask fraction must lie in [0, 1], got {mask_fraction}"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corrupted {
    pub signal: Signal,
    /// 1 where the pixel is observed.
    pub mask: Vec<f64>,
    pub input_psnr: f64,
}

fn item_rng(seed: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(item);
    rng
}

/// Corrupt `x` for `task`; `item` selects an independent random stream so
/// every image in a set gets its own noise or mask.
pub fn corrupt(x: &Signal, task: &TaskSpec, item: u64) -> Result<Corrupted> {
    task.validate()?;
    let clean = x.spatial();
    let n = clean.len();
    let (data, mask) = match *task {
        TaskSpec::Reconstruct => {
            return Err(PipelineError::Usage("reconstruction has no corruption".into()));
        }
        TaskSpec::Denoise { noise_variance, seed, .. } => {
            let mut rng = item_rng(seed, item);
            let normal = Normal::new(0.0, noise_variance.sqrt()).expect("finite variance");
            let data = clean.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
            (data, vec![1.0; n])
        }
        TaskSpec::Inpaint { mask_fraction, seed, .. } => {
            let mut rng = item_rng(seed, item);
            let dropped = (mask_fraction * n as f64).round() as usize;
            let mut mask = vec![1.0; n];
            for i in sample(&mut rng, n, dropped) {
                mask[i] = 0.0;
            }
            let data = clean.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            (data, mask)
        }
    };
    let corrupted = SpatialArray::new(clean.shape().to_vec(), data)?;
    let input_psnr = psnr_per_sample(std::slice::from_ref(&corrupted), std::slice::from_ref(clean))?[0];
    Ok(Corrupted {
        signal: Signal::new(corrupted)?,
        mask,
        input_psnr,
    })
}
