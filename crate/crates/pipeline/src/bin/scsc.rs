use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scsc_pipeline::dataset::{load_dataset, write_tensors};
use scsc_pipeline::experiment::{
    compare, evaluate, metrics_csv, objective_series_csv, psnr_series_csv, run_experiment, trace_output,
};
use scsc_pipeline::{tensor_file, AnyModel, Algo, ModelSpec, PipelineError, PreprocessConfig, Result, TaskSpec};

#[derive(Parser)]
#[command(name = "scsc", version, about = "Convolutional sparse coding with sample-dependent dictionaries")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Preprocessing {
    /// TOML file with preprocessing settings; defaults apply otherwise.
    #[arg(long)]
    preprocess: Option<PathBuf>,
}

impl Preprocessing {
    fn load(&self) -> Result<PreprocessConfig> {
        let Some(path) = &self.preprocess else {
            return Ok(PreprocessConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_path_to_error::deserialize(toml::Deserializer::new(&text)).map_err(|e| PipelineError::Config {
            file: path.clone(),
            key: e.path().to_string(),
            message: e.inner().message().to_string(),
        })
    }
}

#[derive(Args)]
struct Evaluation {
    /// Saved model.
    #[arg(long)]
    model: PathBuf,
    /// Directory of images or tensor files.
    #[arg(long)]
    input: PathBuf,
    /// Directory for reconstructions and metrics.csv; metrics go to stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    prep: Preprocessing,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess a directory of images into tensor files.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        prep: Preprocessing,
    },
    /// Train a model on a directory of images or tensor files.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "scsc")]
        algo: Algo,
        /// Number of base filters (scsc only).
        #[arg(long = "R", value_name = "R")]
        r: Option<usize>,
        /// Number of effective filters.
        #[arg(long = "K", value_name = "K")]
        k: usize,
        /// Weight constraint, l1 or l2 (scsc only).
        #[arg(long, default_value = "l2")]
        tag: String,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        shuffle_seed: u64,
        /// Filter support, e.g. `11x11`.
        #[arg(long, default_value = "11x11")]
        filter_size: Extents,
        /// Where to save the model.
        #[arg(long)]
        out: PathBuf,
        /// Directory for trace.csv and series/*.csv.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Keep measured wall time in the reports.
        #[arg(long)]
        wall_clock: bool,
        #[command(flatten)]
        prep: Preprocessing,
    },
    /// Reconstruct signals with a trained model.
    Infer(Evaluation),
    /// Add Gaussian noise and recover.
    Denoise {
        #[command(flatten)]
        eval: Evaluation,
        #[arg(long, default_value_t = 0.01)]
        variance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sparsity weight for recovery; the model's own by default.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Drop a random fraction of pixels and recover.
    Inpaint {
        #[command(flatten)]
        eval: Evaluation,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sparsity weight for recovery; the model's own by default.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Print reconstruction PSNR per signal.
    Eval(Evaluation),
    /// Join two result bundles or metrics files into a delta table.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a model's metadata as JSON.
    InspectModel { path: PathBuf },
    /// Run an experiment from a TOML config.
    Run { config: PathBuf },
}

#[derive(Clone, Debug)]
struct Extents(Vec<usize>);

impl std::str::FromStr for Extents {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(['x', 'X', ','])
            .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad extent `{p}` in `{s}`")))
            .collect::<std::result::Result<_, _>>()
            .map(Extents)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

fn run_task(e: &Evaluation, task: TaskSpec) -> Result<()> {
    let model = AnyModel::load(&e.model)?;
    let data = load_dataset(&e.input, &e.prep.load()?)?;
    let (rows, recons) = evaluate(&model, &data.names, &data.signals, &task, e.threads)?;
    let csv = metrics_csv(&rows);
    match &e.output {
        Some(dir) => {
            for (name, r) in data.names.iter().zip(&recons) {
                write(&dir.join(tensor_file::file_name_for(name)), tensor_file::encode(r))?;
            }
            write(&dir.join("metrics.csv"), csv)
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { input, output, prep } => {
            let data = load_dataset(&input, &prep.load()?)?;
            write_tensors(&output, &data)?;
            eprintln!("wrote {} tensors to {}", data.signals.len(), output.display());
            Ok(())
        }
        Command::Train {
            data,
            algo,
            r,
            k,
            tag,
            beta,
            epochs,
            seed,
            shuffle_seed,
            filter_size,
            out,
            report,
            wall_clock,
            prep,
        } => {
            let spec = ModelSpec {
                algo,
                r,
                k,
                tag,
                beta,
                filter_size: filter_size.0,
                epochs,
                seed,
                shuffle_seed,
                niapg: None,
                dictionary_admm: None,
                code_admm: None,
            };
            let data = load_dataset(&data, &prep.load()?)?;
            let mut model = spec.init(data.signals[0].shape())?;
            let rep = model.train(&data.signals, epochs, shuffle_seed)?;
            model.save(&out)?;
            if let Some(dir) = report {
                write(&dir.join("trace.csv"), trace_output(&rep.trace, wall_clock))?;
                write(
                    &dir.join("series").join("psnr_vs_time.csv"),
                    psnr_series_csv(&rep, data.signals.len(), wall_clock),
                )?;
                write(
                    &dir.join("series").join("objective_vs_iteration.csv"),
                    objective_series_csv(&rep.trace),
                )?;
            }
            if let Some(p) = rep.epoch_psnr.last() {
                eprintln!("final training PSNR {p:.3} dB");
            }
            Ok(())
        }
        Command::Infer(e) | Command::Eval(e) => run_task(&e, TaskSpec::Reconstruct),
        Command::Denoise { eval, variance, seed, beta } => run_task(
            &eval,
            TaskSpec::Denoise {
                noise_variance: variance,
                seed,
                beta,
            },
        ),
        Command::Inpaint { eval, fraction, seed, beta } => run_task(
            &eval,
            TaskSpec::Inpaint {
                mask_fraction: fraction,
                seed,
                beta,
            },
        ),
        Command::Compare { a, b, output } => {
            let table = compare(&a, &b)?;
            match output {
                Some(p) => write(&p, table),
                None => {
                    print!("{table}");
                    Ok(())
                }
            }
        }
        Command::InspectModel { path } => {
            let model = AnyModel::load(&path)?;
            let meta = serde_json::to_string_pretty(&model.metadata()).expect("metadata serializes");
            println!("{meta}");
            Ok(())
        }
        Command::Run { config } => {
            let summary = run_experiment(&config)?;
            eprintln!("results in {}", summary.dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
