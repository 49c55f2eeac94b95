#![allow(dead_code)]

use std::path::Path;

use scsc_core::synthetic::{generate, SyntheticConfig, SyntheticSet};
use scsc_core::ConstraintSetTag;
use scsc_pipeline::{AnyModel, ModelSpec};

pub fn synthetic(size: usize, samples: usize, seed: u64) -> SyntheticSet {
    let config = SyntheticConfig {
        filter_extents: vec![3, 3],
        padded_extents: vec![size, size],
        r: 2,
        k: 4,
        samples,
        density: 0.02,
        seed,
    };
    generate(&config, &ConstraintSetTag::weight_l2(2).unwrap()).unwrap()
}

pub fn small_spec() -> ModelSpec {
    let mut spec = ModelSpec::scsc(2, 4, 0.05);
    spec.filter_size = vec![3, 3];
    spec.epochs = 2;
    spec.seed = 1;
    spec.shuffle_seed = 2;
    spec
}

pub fn trained_model(set: &SyntheticSet) -> AnyModel {
    let spec = small_spec();
    let mut model = spec.init(set.signals[0].shape()).unwrap();
    model.train(&set.signals, spec.epochs, spec.shuffle_seed).unwrap();
    model
}

/// 8-bit grayscale PNG from values in `[0, 1]`.
pub fn write_gray_png(path: &Path, width: u32, height: u32, f: impl Fn(u32, u32) -> f64) {
    let img = image::GrayImage::from_fn(width, height, |x, y| {
        image::Luma([(f(x, y).clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save(path).unwrap();
}

pub fn write_rgb_png(path: &Path, width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    image::RgbImage::from_fn(width, height, |x, y| image::Rgb(f(x, y)))
        .save(path)
        .unwrap();
}

/// Deterministic texture with plenty of local contrast.
pub fn texture(x: u32, y: u32) -> f64 {
    let (x, y) = (x as f64, y as f64);
    0.5 + 0.25 * (0.7 * x).sin() * (0.45 * y).cos() + 0.2 * ((x * 13.0 + y * 7.0) % 5.0) / 5.0
}
