//! Config-driven experiments: train or load a model, run the tasks on the
//! test images and write the result bundle.
//!
//! Bundle layout under `<output_dir>/<run_id>/`:
//!
//! | file | contents |
//! |------|----------|
//! | `model.bin`, `model.bin.json` | trained model and its metadata |
//! | `config.json` | the parsed config, defaults filled in |
//! | `manifest.json` | dataset files, shapes and checksums |
//! | `metrics.csv` | `task,image,input_psnr,output_psnr,gain` per test image, then one `mean` row per task |
//! | `trace.csv` | one row per training step |
//! | `series/psnr_vs_time.csv` | `epoch,t,seconds,psnr,smoothed` |
//! | `series/objective_vs_iteration.csv` | `iteration,epoch,sub_obj,dict_obj` |
//! | `memory.csv` | `k,r,scsc_bytes,ocsc_bytes,measured_ratio,theoretical_cr` (only with `[memory]`) |
//!
//! Wall-clock columns (`millis`, `seconds`) are written as 0 unless
//! `wall_clock = true`, so reruns give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use scsc_core::scsc::trace_csv;
use scsc_core::synthetic::{generate, SyntheticConfig};
use scsc_core::{compression_ratio, psnr_per_sample, ConstraintSetTag, Signal, SpatialArray, TraceRow};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_dataset, Dataset, EntryStatus, Manifest, ManifestEntry};
use crate::error::{PipelineError, Result};
use crate::model::{masked_infer, AnyModel, ModelSpec, TrainReport};
use crate::preprocess::PreprocessConfig;
use crate::task::{corrupt, TaskSpec};
use crate::tensor_file;

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: &str = "task,image,input_psnr,output_psnr,gain";
pub const SMOOTHING_WINDOW: usize = 5;

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub run_id: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub wall_clock: bool,
    /// Worker threads for test-time inference; defaults to the machine's.
    #[serde(default)]
    pub threads: Option<usize>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Use a saved model instead of training one.
    #[serde(default)]
    pub load_model: Option<PathBuf>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub memory: Option<MemoryConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub train: Option<PathBuf>,
    /// Defaults to the training directory.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

/// Signals drawn from random unit base filters, boundary weights and
/// sparse Gaussian codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub filter_size: Vec<usize>,
    pub image_size: Vec<usize>,
    pub r: usize,
    pub k: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub density: f64,
    pub seed: u64,
    #[serde(default = "default_tag")]
    pub tag: String,
}

fn default_tag() -> String {
    "l2".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    /// `[K, R]` pairs.
    pub pairs: Vec<[usize; 2]>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, file: &Path) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| PipelineError::Config {
            file: file.to_path_buf(),
            key: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        config.validate(file)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    fn validate(&self, file: &Path) -> Result<()> {
        let fail = |key: &str, message: String| {
            Err(PipelineError::Config {
                file: file.to_path_buf(),
                key: key.into(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            return fail(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return fail("run_id", format!("`{}` is not a plain directory name", self.run_id));
        }
        if self.dataset.synthetic.is_some() == (self.dataset.train.is_some() || self.dataset.test.is_some()) {
            return fail("dataset", "give either `synthetic` or `train`/`test` directories".into());
        }
        if self.dataset.synthetic.is_none() && self.dataset.train.is_none() && self.load_model.is_none() {
            return fail("dataset.train", "a training directory is needed unless `load_model` is set".into());
        }
        if self.model.is_some() == self.load_model.is_some() {
            return fail("model", "give exactly one of `[model]` and `load_model`".into());
        }
        if let Some(s) = &self.dataset.synthetic {
            if s.test_samples == 0 || s.train_samples == 0 {
                return fail("dataset.synthetic", "need at least one training and one test sample".into());
            }
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if let Err(e) = t.validate() {
                return fail(&format!("tasks[{i}]"), e.to_string());
            }
        }
        if self.threads == Some(0) {
            return fail("threads", "must be at least 1".into());
        }
        Ok(())
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub task: String,
    pub image: String,
    /// Absent for plain reconstruction.
    pub input_psnr: Option<f64>,
    pub output_psnr: f64,
}

impl MetricRow {
    pub fn gain(&self) -> Option<f64> {
        self.input_psnr.map(|i| self.output_psnr - i)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Per-image rows followed by one `mean` row per task, in first-seen order.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    let mut tasks: Vec<&str> = Vec::new();
    for r in rows {
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{}",
            r.task,
            r.image,
            fmt_opt(r.input_psnr),
            r.output_psnr,
            fmt_opt(r.gain())
        );
    }
    for task in tasks {
        let sel: Vec<&MetricRow> = rows.iter().filter(|r| r.task == task).collect();
        let n = sel.len() as f64;
        let mean = |f: &dyn Fn(&MetricRow) -> Option<f64>| -> Option<f64> {
            sel.iter().map(|r| f(r)).sum::<Option<f64>>().map(|s| s / n)
        };
        let input = mean(&|r| r.input_psnr);
        let output = mean(&|r| Some(r.output_psnr)).unwrap_or(f64::NAN);
        let gain = input.map(|i| output - i);
        let _ = writeln!(out, "{task},mean,{},{output:.6},{}", fmt_opt(input), fmt_opt(gain));
    }
    out
}

fn worker_count(requested: Option<usize>, items: usize) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    requested.unwrap_or(available).clamp(1, items.max(1))
}

/// Run `task` on every signal, spreading images over `threads` workers.
/// Rows come back in input order whatever the thread count.
pub fn evaluate(
    model: &AnyModel,
    names: &[String],
    signals: &[Signal],
    task: &TaskSpec,
    threads: Option<usize>,
) -> Result<(Vec<MetricRow>, Vec<SpatialArray>)> {
    task.validate()?;
    let tuned;
    let model = match task.beta() {
        Some(b) => {
            tuned = model.with_beta(b)?;
            &tuned
        }
        None => model,
    };
    let run_one = |i: usize| -> Result<(MetricRow, SpatialArray)> {
        let clean = &signals[i];
        let (input, mask, input_psnr) = match task {
            TaskSpec::Reconstruct => (clean.clone(), vec![1.0; clean.len()], None),
            _ => {
                let c = corrupt(clean, task, i as u64)?;
                (c.signal, c.mask, Some(c.input_psnr))
            }
        };
        let recon = masked_infer(model, &input, &mask)?;
        let output_psnr = psnr_per_sample(std::slice::from_ref(&recon), std::slice::from_ref(clean.spatial()))?[0];
        Ok((
            MetricRow {
                task: task.name().into(),
                image: names[i].clone(),
                input_psnr,
                output_psnr,
            },
            recon,
        ))
    };
    let workers = worker_count(threads, signals.len());
    let mut slots: Vec<Option<Result<(MetricRow, SpatialArray)>>> = (0..signals.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = signals.len().div_ceil(workers).max(1);
        for (c, part) in slots.chunks_mut(chunk).enumerate() {
            let run_one = &run_one;
            scope.spawn(move || {
                for (j, slot) in part.iter_mut().enumerate() {
                    *slot = Some(run_one(c * chunk + j));
                }
            });
        }
    });
    let mut rows = Vec::with_capacity(signals.len());
    let mut recons = Vec::with_capacity(signals.len());
    for slot in slots {
        let (row, recon) = slot.expect("every image is processed")?;
        rows.push(row);
        recons.push(recon);
    }
    Ok((rows, recons))
}

/// Trailing moving average over `window` points.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window.max(1));
            let s = &series[lo..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

pub fn psnr_series_csv(report: &TrainReport, samples_per_epoch: usize, wall_clock: bool) -> String {
    let smoothed = smooth(&report.epoch_psnr, SMOOTHING_WINDOW);
    let mut out = String::from("epoch,t,seconds,psnr,smoothed\n");
    let mut seconds = 0.0;
    for (e, (p, s)) in report.epoch_psnr.iter().zip(&smoothed).enumerate() {
        if wall_clock {
            seconds += report.epoch_seconds.get(e).copied().unwrap_or(0.0);
        }
        let _ = writeln!(
            out,
            "{e},{},{seconds:.3},{p:.6},{s:.6}",
            (e + 1) * samples_per_epoch
        );
    }
    out
}

pub fn objective_series_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,epoch,sub_obj,dict_obj\n");
    for (i, r) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{},{:e},{:e}", i + 1, r.epoch, r.sub_obj, r.dict_obj);
    }
    out
}

/// Trace CSV with the frozen column set; wall time zeroed unless requested.
pub fn trace_output(trace: &[TraceRow], wall_clock: bool) -> String {
    if wall_clock {
        return trace_csv(trace, true);
    }
    let zeroed: Vec<TraceRow> = trace.iter().map(|r| TraceRow { millis: 0.0, ..*r }).collect();
    trace_csv(&zeroed, true)
}

/// Statistics memory of freshly initialized OCSC(K) and SCSC(R) models on
/// signals of `signal_shape`, next to the theoretical ratio `(K/R)²`.
pub fn memory_report(pairs: &[[usize; 2]], filter_size: &[usize], signal_shape: &[usize], beta: f64) -> Result<String> {
    let mut out = String::from("k,r,scsc_bytes,ocsc_bytes,measured_ratio,theoretical_cr\n");
    for &[k, r] in pairs {
        let mut scsc = ModelSpec::scsc(r, k, beta);
        scsc.filter_size = filter_size.to_vec();
        let mut ocsc = ModelSpec::ocsc(k, beta);
        ocsc.filter_size = filter_size.to_vec();
        let s = scsc.init(signal_shape)?.memory_footprint().second_moment;
        let o = ocsc.init(signal_shape)?.memory_footprint().second_moment;
        let measured = o as f64 / s as f64;
        let _ = writeln!(
            out,
            "{k},{r},{s},{o},{measured:.6},{:.6}",
            compression_ratio(k, r)?
        );
    }
    Ok(out)
}

struct Split {
    train: Option<Dataset>,
    test: Dataset,
}

fn synthetic_dataset(spec: &SyntheticSpec, preprocess: &PreprocessConfig) -> Result<Split> {
    let tag = ConstraintSetTag::weight_from_name(&spec.tag, spec.r)?;
    let set = generate(
        &SyntheticConfig {
            filter_extents: spec.filter_size.clone(),
            padded_extents: spec.image_size.clone(),
            r: spec.r,
            k: spec.k,
            samples: spec.train_samples + spec.test_samples,
            density: spec.density,
            seed: spec.seed,
        },
        &tag,
    )?;
    let wrap = |prefix: &str, signals: &[Signal]| {
        let names: Vec<String> = (0..signals.len()).map(|i| format!("{prefix}-{i:03}")).collect();
        let entries = names
            .iter()
            .zip(signals)
            .map(|(n, s)| ManifestEntry {
                file: n.clone(),
                shape: s.shape().to_vec(),
                sha256: hex::encode(Sha256::digest(tensor_file::encode(s.spatial()))),
                status: EntryStatus::Ok,
            })
            .collect();
        Dataset {
            names,
            signals: signals.to_vec(),
            manifest: Manifest {
                preprocess: preprocess.clone(),
                entries,
            },
        }
    };
    let (train, test) = set.signals.split_at(spec.train_samples);
    Ok(Split {
        train: Some(wrap("train", train)),
        test: wrap("test", test),
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub metrics: Vec<MetricRow>,
    pub report: Option<TrainReport>,
}

/// Run the experiment in the config file; relative paths in it are taken
/// from the file's directory.
pub fn run_experiment(config_path: &Path) -> Result<RunSummary> {
    let config = ExperimentConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_config(&config, base)
}

pub fn run_config(config: &ExperimentConfig, base: &Path) -> Result<RunSummary> {
    let dir = resolve(base, &config.output_dir).join(&config.run_id);
    let split = match (&config.dataset.synthetic, &config.dataset.train) {
        (Some(s), _) => synthetic_dataset(s, &config.preprocess)?,
        (None, train) => {
            let train = train
                .as_ref()
                .map(|p| load_dataset(&resolve(base, p), &config.preprocess))
                .transpose()?;
            let test = match (&config.dataset.test, &train) {
                (Some(p), _) => load_dataset(&resolve(base, p), &config.preprocess)?,
                (None, Some(t)) => t.clone(),
                (None, None) => unreachable!("validated"),
            };
            Split { train, test }
        }
    };

    let (model, report) = match (&config.model, &config.load_model) {
        (Some(spec), _) => {
            let train = split.train.as_ref().expect("validated");
            let mut model = spec.init(train.signals[0].shape())?;
            info!("training {:?} on {} signals for {} epochs", spec.algo, train.signals.len(), spec.epochs);
            let report = model.train(&train.signals, spec.epochs, spec.shuffle_seed)?;
            (model, Some(report))
        }
        (None, Some(path)) => (AnyModel::load(&resolve(base, path))?, None),
        (None, None) => unreachable!("validated"),
    };

    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    model.save(&dir.join("model.bin"))?;
    write_file(
        &dir.join("config.json"),
        serde_json::to_string_pretty(config).expect("config serializes") + "\n",
    )?;
    let mut manifests = BTreeMap::new();
    if let Some(t) = &split.train {
        manifests.insert("train", &t.manifest);
    }
    manifests.insert("test", &split.test.manifest);
    write_file(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifests).expect("manifest serializes") + "\n",
    )?;

    if let Some(report) = &report {
        let per_epoch = split.train.as_ref().map_or(0, |t| t.signals.len());
        write_file(&dir.join("trace.csv"), trace_output(&report.trace, config.wall_clock))?;
        write_file(
            &dir.join("series").join("psnr_vs_time.csv"),
            psnr_series_csv(report, per_epoch, config.wall_clock),
        )?;
        write_file(
            &dir.join("series").join("objective_vs_iteration.csv"),
            objective_series_csv(&report.trace),
        )?;
    }

    let mut metrics = Vec::new();
    for task in &config.tasks {
        info!("task {} on {} test signals", task.name(), split.test.signals.len());
        let (rows, _) = evaluate(&model, &split.test.names, &split.test.signals, task, config.threads)?;
        metrics.extend(rows);
    }
    write_file(&dir.join("metrics.csv"), metrics_csv(&metrics))?;

    if let Some(mem) = &config.memory {
        let extents = model.support().extents().to_vec();
        let shape = split.test.signals[0].shape();
        let beta = model.metadata().beta;
        write_file(&dir.join("memory.csv"), memory_report(&mem.pairs, &extents, shape, beta)?)?;
    }
    Ok(RunSummary { dir, metrics, report })
}

fn metrics_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("metrics.csv")
    } else {
        p.to_path_buf()
    }
}

fn read_metrics(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| PipelineError::data(path, e.to_string()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::data(path, format!("missing column `{name}`")))
    };
    let (t, i, o) = (col("task")?, col("image")?, col("output_psnr")?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let psnr: f64 = rec[o]
            .parse()
            .map_err(|_| PipelineError::data(path, format!("bad output_psnr `{}`", &rec[o])))?;
        rows.push((rec[t].to_string(), rec[i].to_string(), psnr));
    }
    Ok(rows)
}

/// Join two bundles (or metrics files) on `(task, image)`; rows only in
/// one side are dropped. Output: `task,image,output_psnr_a,output_psnr_b,delta`.
pub fn compare(a: &Path, b: &Path) -> Result<String> {
    let left = read_metrics(&metrics_path(a))?;
    let right: BTreeMap<(String, String), f64> = read_metrics(&metrics_path(b))?
        .into_iter()
        .map(|(t, i, p)| ((t, i), p))
        .collect();
    let mut out = String::from("task,image,output_psnr_a,output_psnr_b,delta\n");
    for (t, i, pa) in left {
        if let Some(pb) = right.get(&(t.clone(), i.clone())) {
            let _ = writeln!(out, "{t},{i},{pa:.6},{pb:.6},{:.6}", pb - pa);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_uses_a_trailing_window() {
        let s = smooth(&[1.0, 3.0, 5.0, 7.0, 9.0, 11.0], 3);
        assert_eq!(s, vec![1.0, 2.0, 3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn metrics_means_per_task() {
        let rows = vec![
            MetricRow {
                task: "denoise".into(),
                image: "a".into(),
                input_psnr: Some(10.0),
                output_psnr: 14.0,
            },
            MetricRow {
                task: "denoise".into(),
                image: "b".into(),
                input_psnr: Some(12.0),
                output_psnr: 18.0,
            },
            MetricRow {
                task: "reconstruct".into(),
                image: "a".into(),
                input_psnr: None,
                output_psnr: 30.0,
            },
        ];
        let csv = metrics_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[3], "reconstruct,a,,30.000000,");
        assert_eq!(lines[4], "denoise,mean,11.000000,16.000000,5.000000");
        assert_eq!(lines[5], "reconstruct,mean,,30.000000,");
    }

    #[test]
    fn schema_errors_name_the_key() {
        let text = "schema_version = 1\nrun_id = \"x\"\n[dataset]\ntrain = \"d\"\n[model]\nalgo = \"scsc\"\nk = \"four\"\n";
        match ExperimentConfig::from_toml(text, Path::new("c.toml")) {
            Err(PipelineError::Config { key, .. }) => assert_eq!(key, "model.k"),
            other => panic!("unexpected {other:?}"),
        }
        let text = "schema_version = 1\nrun_id = \"x\"\ncolour = true\n[dataset]\ntrain = \"d\"\n";
        assert!(matches!(
            ExperimentConfig::from_toml(text, Path::new("c.toml")),
            Err(PipelineError::Config { .. })
        ));
    }
}
