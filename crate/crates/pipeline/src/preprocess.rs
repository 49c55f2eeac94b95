//! Image preprocessing: grayscale conversion, per-image standardization,
//! local contrast normalization and a cosine edge taper, applied in that
//! order.

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LcnConfig {
    pub enabled: bool,
    /// Side of the square Gaussian window; must be odd.
    pub kernel_size: usize,
    pub epsilon: f64,
}

impl Default for LcnConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            kernel_size: 9,
            epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaperConfig {
    pub enabled: bool,
    pub margin: usize,
}

impl Default for TaperConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            margin: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub grayscale: bool,
    pub standardize: bool,
    pub lcn: LcnConfig,
    pub taper: TaperConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            grayscale: true,
            standardize: true,
            lcn: LcnConfig::default(),
            taper: TaperConfig::default(),
        }
    }
}

impl PreprocessConfig {
    /// Only grayscale conversion and standardization.
    pub fn minimal() -> Self {
        Self {
            lcn: LcnConfig {
                enabled: false,
                ..LcnConfig::default()
            },
            taper: TaperConfig {
                enabled: false,
                ..TaperConfig::default()
            },
            ..Self::default()
        }
    }

    /// Check the parameters against an image of `height × width`.
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.lcn.enabled {
            if self.lcn.kernel_size.is_multiple_of(2) {
                return Err(PipelineError::Usage(format!(
                    "LCN kernel size must be odd, got {}",
                    self.lcn.kernel_size
                )));
            }
            if !(self.lcn.epsilon > 0.0) {
                return Err(PipelineError::Usage(format!(
                    "LCN epsilon must be positive, got {}",
                    self.lcn.epsilon
                )));
            }
        }
        if self.taper.enabled && 2 * self.taper.margin >= height.min(width) {
            return Err(PipelineError::Usage(format!(
                "taper margin {} must be below half of the smallest extent ({height}×{width})",
                self.taper.margin
            )));
        }
        Ok(())
    }
}

/// A single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gray {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Result of preprocessing one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub image: Gray,
    /// The image had zero variance and was replaced by zeros.
    pub degenerate: bool,
}

/// ITU-R BT.601 luma of interleaved RGB in `[0, 1]`.
pub fn luma(rgb: &[f64]) -> Vec<f64> {
    rgb.chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect()
}

/// Shift to zero mean and scale to unit (population) variance. Returns
/// `false`, leaving `data` untouched, when the variance is zero.
pub fn standardize(data: &mut [f64]) -> bool {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(var.sqrt() > 1e-10 * scale) {
        return false;
    }
    let sd = var.sqrt();
    for v in data.iter_mut() {
        *v = (*v - mean) / sd;
    }
    // one more centering pass removes the rounding left by the first
    let mean = data.iter().sum::<f64>() / n;
    data.iter_mut().for_each(|v| *v -= mean);
    true
}

/// Normalized 1-D Gaussian with `σ = size / 4`.
fn gaussian_taps(size: usize) -> Vec<f64> {
    let sigma = size as f64 / 4.0;
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with symmetric boundary handling.
fn blur(img: &Gray, taps: &[f64]) -> Vec<f64> {
    let (h, w) = (img.height, img.width);
    let half = (taps.len() / 2) as isize;
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(t, k)| k * img.data[y * w + reflect(x as isize + t as isize - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(t, k)| k * rows[reflect(y as isize + t as isize - half, h) * w + x])
                .sum();
        }
    }
    out
}

/// Subtractive then divisive normalization against a Gaussian-weighted
/// neighbourhood: `v = x − G∗x`, `y = v / (√(G∗v²) + ε)`.
pub fn local_contrast_normalize(img: &Gray, config: &LcnConfig) -> Gray {
    let taps = gaussian_taps(config.kernel_size);
    let mean = blur(img, &taps);
    let centered: Vec<f64> = img.data.iter().zip(&mean).map(|(x, m)| x - m).collect();
    let sq = Gray {
        height: img.height,
        width: img.width,
        data: centered.iter().map(|v| v * v).collect(),
    };
    let local_var = blur(&sq, &taps);
    Gray {
        height: img.height,
        width: img.width,
        data: centered
            .iter()
            .zip(&local_var)
            .map(|(v, s)| v / (s.max(0.0).sqrt() + config.epsilon))
            .collect(),
    }
}

/// Raised-cosine ramp over `margin` pixels at each end of `n`.
fn taper_window(n: usize, margin: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let d = i.min(n - 1 - i);
            if d >= margin {
                1.0
            } else {
                let t = (d as f64 + 0.5) / margin as f64;
                0.5 * (1.0 - (std::f64::consts::PI * t).cos())
            }
        })
        .collect()
}

pub fn edge_taper(img: &mut Gray, margin: usize) {
    let wy = taper_window(img.height, margin);
    let wx = taper_window(img.width, margin);
    for (y, row) in img.data.chunks_mut(img.width).enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v *= wy[y] * wx[x];
        }
    }
}

/// Run the configured steps on an image with `channels` interleaved
/// channels (1 or 3) and values in `[0, 1]`.
pub fn preprocess(
    pixels: &[f64],
    height: usize,
    width: usize,
    channels: usize,
    config: &PreprocessConfig,
) -> Result<Preprocessed> {
    config.validate(height, width)?;
    if pixels.len() != height * width * channels {
        return Err(PipelineError::Dataset(format!(
            "{} values for a {height}×{width}×{channels} image",
            pixels.len()
        )));
    }
    let data = match channels {
        1 => pixels.to_vec(),
        3 if config.grayscale => luma(pixels),
        3 => {
            return Err(PipelineError::Usage(
                "colour input needs grayscale conversion; models are single-channel".into(),
            ))
        }
        c => return Err(PipelineError::Dataset(format!("unsupported channel count {c}"))),
    };
    let mut image = Gray { height, width, data };
    if config.standardize && !standardize(&mut image.data) {
        image.data.iter_mut().for_each(|v| *v = 0.0);
        return Ok(Preprocessed { image, degenerate: true });
    }
    if config.lcn.enabled {
        image = local_contrast_normalize(&image, &config.lcn);
    }
    if config.taper.enabled {
        edge_taper(&mut image, config.taper.margin);
    }
    Ok(Preprocessed {
        image,
        degenerate: false,
    })
}
