//! Loading a directory of images or tensor files into signals.

use std::path::{Path, PathBuf};

use log::warn;
use scsc_core::{Signal, SpatialArray};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::tensor_file::{self, TENSOR_EXTENSION};

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "ppm", "pnm", "bmp", "tif", "tiff"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    /// Constant image, replaced by zeros.
    ZeroVariance,
    Unreadable { reason: String },
    WrongShape { expected: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
    #[serde(flatten)]
    pub status: EntryStatus,
}

impl ManifestEntry {
    pub fn is_used(&self) -> bool {
        matches!(self.status, EntryStatus::Ok | EntryStatus::ZeroVariance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub preprocess: PreprocessConfig,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub names: Vec<String>,
    pub signals: Vec<Signal>,
    pub manifest: Manifest,
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Candidate files in lexicographic order of their names.
pub fn list_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let read = std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in read {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        let Some(ext) = extension(&path) else { continue };
        if path.is_file() && (ext == TENSOR_EXTENSION || IMAGE_EXTENSIONS.contains(&ext.as_str())) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Decode an 8-bit image to `[0, 1]` values with 1 or 3 channels.
fn decode_image(bytes: &[u8]) -> std::result::Result<(Vec<f64>, usize, usize, usize), String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        Ok((rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect(), h, w, 3))
    } else {
        let l = img.to_luma8();
        Ok((l.as_raw().iter().map(|&v| v as f64 / 255.0).collect(), h, w, 1))
    }
}

enum Loaded {
    Signal(SpatialArray, bool),
    Failed(String),
}

fn load_one(path: &Path, bytes: &[u8], config: &PreprocessConfig) -> Result<Loaded> {
    if extension(path).as_deref() == Some(TENSOR_EXTENSION) {
        return Ok(match tensor_file::decode(bytes) {
            Ok(a) => Loaded::Signal(a, false),
            Err(m) => Loaded::Failed(m),
        });
    }
    let (pixels, h, w, c) = match decode_image(bytes) {
        Ok(v) => v,
        Err(m) => return Ok(Loaded::Failed(m)),
    };
    let out = preprocess(&pixels, h, w, c, config)?;
    let a = SpatialArray::new(vec![h, w], out.image.data)?;
    Ok(Loaded::Signal(a, out.degenerate))
}

/// Load every image (`png`, `pgm`/`ppm`/`pnm`, `bmp`, `tif`) and raw
/// `.tensor` file in `dir`, in name order. Images go through `config`;
/// tensors are taken as already preprocessed. Files that cannot be read, or
/// whose shape differs from the first usable file, are flagged in the
/// manifest and skipped.
pub fn load_dataset(dir: &Path, config: &PreprocessConfig) -> Result<Dataset> {
    let files = list_inputs(dir)?;
    let mut names = Vec::new();
    let mut signals = Vec::new();
    let mut entries = Vec::new();
    let mut expected: Option<Vec<usize>> = None;
    for path in files {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let (shape, status, signal) = match load_one(&path, &bytes, config)? {
            Loaded::Failed(reason) => {
                warn!("{name}: unreadable ({reason})");
                (Vec::new(), EntryStatus::Unreadable { reason }, None)
            }
            Loaded::Signal(a, degenerate) => {
                let shape = a.shape().to_vec();
                match &expected {
                    Some(e) if *e != shape => {
                        warn!("{name}: shape {shape:?} differs from {e:?}");
                        (shape, EntryStatus::WrongShape { expected: e.clone() }, None)
                    }
                    _ => {
                        expected.get_or_insert_with(|| shape.clone());
                        if degenerate {
                            warn!("{name}: zero variance, replaced by zeros");
                        }
                        let status = if degenerate {
                            EntryStatus::ZeroVariance
                        } else {
                            EntryStatus::Ok
                        };
                        (shape, status, Some(a))
                    }
                }
            }
        };
        if let Some(a) = signal {
            signals.push(Signal::new(a)?);
            names.push(name.clone());
        }
        entries.push(ManifestEntry {
            file: name,
            shape,
            sha256,
            status,
        });
    }
    if signals.is_empty() {
        return Err(PipelineError::Dataset(format!(
            "{}: no usable images or tensors",
            dir.display()
        )));
    }
    Ok(Dataset {
        names,
        signals,
        manifest: Manifest {
            preprocess: config.clone(),
            entries,
        },
    })
}

/// Write each signal as `<name>.tensor` plus `manifest.json` into `dir`.
pub fn write_tensors(dir: &Path, dataset: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    for (name, signal) in dataset.names.iter().zip(&dataset.signals) {
        tensor_file::write(&dir.join(tensor_file::file_name_for(name)), signal.spatial())?;
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, dataset.manifest.to_json()).map_err(|e| PipelineError::io(&path, e))
}
