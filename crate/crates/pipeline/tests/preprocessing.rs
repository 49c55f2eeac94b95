mod common;

use common::{texture, write_gray_png, write_rgb_png};
use scsc_pipeline::dataset::{list_inputs, load_dataset, write_tensors, EntryStatus};
use scsc_pipeline::preprocess::{luma, preprocess, standardize, Gray, LcnConfig, PreprocessConfig};
use scsc_pipeline::{tensor_file, PipelineError};

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

#[test]
fn standardized_images_have_zero_mean_and_unit_variance() {
    for scale in [1e-3, 1.0, 250.0] {
        let mut v: Vec<f64> = (0..4096).map(|i| scale * texture(i % 64, i / 64) + 3.0 * scale).collect();
        assert!(standardize(&mut v));
        let (m, var) = mean_var(&v);
        assert!(m.abs() < 1e-10, "mean {m}");
        assert!((var - 1.0).abs() < 1e-8, "variance {var}");
    }
}

#[test]
fn standardize_is_idempotent() {
    let mut once: Vec<f64> = (0..1024).map(|i| texture(i % 32, i / 32)).collect();
    standardize(&mut once);
    let mut twice = once.clone();
    standardize(&mut twice);
    for (a, b) in once.iter().zip(&twice) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn constant_image_is_flagged_and_zeroed() {
    let out = preprocess(&vec![0.3; 400], 20, 20, 1, &PreprocessConfig::default()).unwrap();
    assert!(out.degenerate);
    assert!(out.image.data.iter().all(|&v| v == 0.0));
}

#[test]
fn rgb_is_reduced_with_bt601_weights() {
    let y = luma(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    let want = [0.299, 0.587, 0.114, 1.0];
    for (a, b) in y.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    let rgb = vec![0.5; 3 * 16];
    let mut config = PreprocessConfig::minimal();
    config.grayscale = false;
    assert!(matches!(preprocess(&rgb, 4, 4, 3, &config), Err(PipelineError::Usage(_))));
}

#[test]
fn lcn_flattens_a_contrast_ramp() {
    // same texture at contrast rising left to right
    let (h, w) = (32, 64);
    let data: Vec<f64> = (0..h * w)
        .map(|i| {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            (0.1 + x as f64 / w as f64) * (texture(x, y) - 0.5)
        })
        .collect();
    let img = Gray { height: h, width: w, data };
    let out = scsc_pipeline::preprocess::local_contrast_normalize(&img, &LcnConfig::default());
    let band = |img: &Gray, lo: usize, hi: usize| {
        let v: Vec<f64> = (8..h - 8)
            .flat_map(|y| (lo..hi).map(move |x| (y, x)))
            .map(|(y, x)| img.data[y * w + x])
            .collect();
        mean_var(&v).1.sqrt()
    };
    let before = band(&img, 50, 58) / band(&img, 6, 14);
    let after = band(&out, 50, 58) / band(&out, 6, 14);
    assert!(before > 3.0);
    assert!(after < 1.5, "contrast ratio after LCN {after}");
}

#[test]
fn taper_zeroes_out_the_border_energy() {
    let data: Vec<f64> = (0..1024).map(|i| texture(i % 32, i / 32)).collect();
    let config = PreprocessConfig::default();
    let out = preprocess(&data, 32, 32, 1, &config).unwrap().image;
    let edge = out.data[..32].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let centre = out.data[16 * 32..17 * 32].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(edge < 0.1 * centre);
}

#[test]
fn invalid_settings_are_rejected() {
    let data = vec![0.0; 100];
    let mut config = PreprocessConfig::default();
    config.lcn.kernel_size = 8;
    assert!(preprocess(&data, 10, 10, 1, &config).is_err());
    let mut config = PreprocessConfig::default();
    config.taper.margin = 5;
    assert!(preprocess(&data, 10, 10, 1, &config).is_err());
    config.taper.margin = 4;
    config.lcn.kernel_size = 3;
    assert!(preprocess(&data, 10, 10, 1, &config).is_ok());
}

#[test]
fn dataset_manifest_is_ordered_flagged_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_gray_png(&p.join("b.png"), 24, 24, texture);
    write_rgb_png(&p.join("a.png"), 24, 24, |x, y| {
        let v = (texture(x, y) * 255.0) as u8;
        [v, v / 2, 255 - v]
    });
    write_gray_png(&p.join("c_flat.png"), 24, 24, |_, _| 0.4);
    write_gray_png(&p.join("d_small.png"), 20, 24, texture);
    std::fs::write(p.join("e_broken.png"), b"not an image").unwrap();
    std::fs::write(p.join("notes.txt"), b"ignored").unwrap();

    let names: Vec<String> = list_inputs(p)
        .unwrap()
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["a.png", "b.png", "c_flat.png", "d_small.png", "e_broken.png"]);

    let config = PreprocessConfig::default();
    let data = load_dataset(p, &config).unwrap();
    assert_eq!(data.names, ["a.png", "b.png", "c_flat.png"]);
    let status: Vec<&EntryStatus> = data.manifest.entries.iter().map(|e| &e.status).collect();
    assert_eq!(status[0], &EntryStatus::Ok);
    assert_eq!(status[2], &EntryStatus::ZeroVariance);
    assert_eq!(status[3], &EntryStatus::WrongShape { expected: vec![24, 24] });
    assert!(matches!(status[4], EntryStatus::Unreadable { .. }));
    assert!(data.manifest.entries.iter().all(|e| e.sha256.len() == 64));
    assert!(data.signals[2].spatial().data().iter().all(|&v| v == 0.0));

    let again = load_dataset(p, &config).unwrap();
    assert_eq!(data.manifest.to_json(), again.manifest.to_json());

    let out = tempfile::tempdir().unwrap();
    write_tensors(out.path(), &data).unwrap();
    let b = tensor_file::read(&out.path().join("b.png.tensor")).unwrap();
    assert_eq!(&b, data.signals[1].spatial());
    // tensors load unchanged, whatever the preprocessing settings
    let reloaded = load_dataset(out.path(), &config).unwrap();
    assert_eq!(reloaded.signals, data.signals);
}

#[test]
fn empty_dataset_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.png"), b"xx").unwrap();
    assert!(matches!(
        load_dataset(dir.path(), &PreprocessConfig::default()),
        Err(PipelineError::Dataset(_))
    ));
    let err = load_dataset(&dir.path().join("missing"), &PreprocessConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
