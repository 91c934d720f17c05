use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use dam_core::dam::NetParams;
use dam_core::data::{locate, resolve_data_dir, verify_file, MNIST_FILES};
use dam_core::harness::{
    build_report, parse_override, run_experiment, sweep, write_run, write_sweep, Axis,
    ExperimentConfig, Objective, SweepSpec, DEFAULT_WINDOW,
};
use dam_core::ErrorKind;

const DEFAULT_MIRROR: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";

#[derive(Parser)]
#[command(name = "dam", version, about = "Dense Associative Memory continual-learning benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download and verify the MNIST files.
    FetchData {
        /// Target directory (DAM_DATA_DIR wins when set).
        #[arg(long, default_value = "data/mnist")]
        dir: PathBuf,
        /// Base URL serving `<name>.gz`.
        #[arg(long, default_value = DEFAULT_MIRROR)]
        base_url: String,
        /// Only check what is already on disk.
        #[arg(long)]
        verify_only: bool,
    },
    /// Run one experiment.
    Run(ConfigArgs),
    /// Sweep one hyperparameter over seeds.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Config key to vary, e.g. `method.lambda`.
        #[arg(long)]
        axis: String,
        /// Explicit comma-separated values.
        #[arg(long, value_delimiter = ',', conflicts_with = "log_uniform")]
        grid: Vec<f64>,
        /// `lo,hi,trials`: log-uniform samples.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        log_uniform: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Average)]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        sampler_seed: u64,
        /// Output file stem (default: `<method>-n<n>-<axis>`).
        #[arg(long)]
        name: Option<String>,
    },
    /// Summarize a results directory.
    Report {
        #[arg(long, default_value = "results")]
        input: PathBuf,
        /// Defaults to `<input>/report`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
    /// Print a complete config with every default filled in.
    Config {
        #[arg(long, default_value = "desk")]
        preset: String,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key.path=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Average,
    MinTask,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = self
            .overrides
            .iter()
            .map(|o| parse_override(o))
            .collect::<dam_core::Result<Vec<_>>>()?;
        Ok(match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides)?,
            None => ExperimentConfig::from_toml_with_overrides("", &overrides)?,
        })
    }
}

/// Network failures; reported with the data exit code.
#[derive(Debug)]
struct DownloadError(String);

impl std::fmt::Display for DownloadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DownloadError {}

fn download(url: &str, target: &Path) -> Result<()> {
    info!("downloading {url}");
    let response = ureq::get(url)
        .call()
        .map_err(|e| DownloadError(format!("GET {url}: {e}")))?;
    let partial = target.with_extension("part");
    let mut file = File::create(&partial).with_context(|| format!("creating {}", partial.display()))?;
    io::copy(&mut response.into_body().into_reader(), &mut file)
        .map_err(|e| DownloadError(format!("reading {url}: {e}")))?;
    fs::rename(&partial, target).with_context(|| format!("moving into {}", target.display()))?;
    Ok(())
}

fn fetch_data(dir: &Path, base_url: &str, verify_only: bool) -> Result<()> {
    let dir = resolve_data_dir(dir);
    fs::create_dir_all(&dir).map_err(|e| dam_core::Error::io(&dir, e))?;
    for file in &MNIST_FILES {
        let existing = locate(&dir, file.name).ok();
        match existing {
            Some(path) if verify_file(&path, file.sha256).is_ok() => {
                println!("ok        {}", path.display());
                continue;
            }
            Some(path) if verify_only => {
                verify_file(&path, file.sha256)?;
            }
            None if verify_only => {
                locate(&dir, file.name)?;
            }
            Some(path) => warn!("{} fails verification; downloading again", path.display()),
            None => {}
        }
        let target = dir.join(format!("{}.gz", file.name));
        download(&format!("{}/{}.gz", base_url.trim_end_matches('/'), file.name), &target)?;
        verify_file(&target, file.sha256)?;
        println!("fetched   {}", target.display());
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::FetchData { dir, base_url, verify_only } => fetch_data(&dir, &base_url, verify_only),
        Command::Run(args) => {
            let config = args.load()?;
            let record = run_experiment(&config)?;
            let (jsonl, csv) = write_run(&record, &config.output.dir)?;
            println!(
                "average accuracy {:.4} (per task {:?})",
                record.final_average_accuracy(),
                record.final_scores().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
            );
            println!("wrote {} and {}", jsonl.display(), csv.display());
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            grid,
            log_uniform,
            seeds,
            objective,
            window,
            sampler_seed,
            name,
        } => {
            let base = config.load()?;
            let axis_spec = match (grid.is_empty(), log_uniform.as_slice()) {
                (false, []) => Axis::Grid { path: axis.clone(), values: grid },
                (true, &[lo, hi, trials]) => {
                    if trials < 1.0 || trials.fract() != 0.0 {
                        bail!(dam_core::Error::Config(format!("trial count {trials} is not a positive integer")));
                    }
                    Axis::LogUniform { path: axis.clone(), lo, hi, trials: trials as usize }
                }
                _ => bail!(dam_core::Error::Config(
                    "give exactly one of --grid v1,v2,.. or --log-uniform lo,hi,trials".into()
                )),
            };
            let spec = SweepSpec {
                axis: axis_spec,
                seeds,
                objective: match objective {
                    ObjectiveArg::Average => Objective::Average,
                    ObjectiveArg::MinTask => Objective::MinTask,
                },
                window,
                sampler_seed,
            };
            let result = sweep(&base, &spec)?;
            let stem = name.unwrap_or_else(|| {
                format!("{}-n{}-{}", base.method.name, base.network.n, axis.replace('.', "_"))
            });
            write_sweep(&result, &base.output.dir, &stem)?;
            if let Some(best) = result.best_window() {
                println!(
                    "best window around {axis} = {:.4e}: {:.4} ± {:.4} over {} trials",
                    best.value, best.mean, best.std, best.count
                );
            }
            println!("wrote {} trials to {}", result.trials.len(), base.output.dir.display());
            Ok(())
        }
        Command::Report { input, output, window } => {
            let output = output.unwrap_or_else(|| input.join("report"));
            let report = build_report(&input, &output, window)?;
            for m in &report.methods {
                let hyper = m.hyperparameter.map_or(String::new(), |h| format!(" @ {h}"));
                println!("{:<16} n={:<4}{hyper}: {} ({} runs)", m.method, m.n, m.formatted, m.trials);
            }
            for b in &report.best {
                println!(
                    "best {} n={} {} = {:.3e} ({:.3} ± {:.3})",
                    b.method, b.n, b.path, b.value, b.mean, b.std
                );
            }
            println!(
                "{} runs, {} sweep trials; {} files under {}",
                report.runs,
                report.sweep_trials,
                report.written.len(),
                output.display()
            );
            Ok(())
        }
        Command::Config { preset } => {
            let config = ExperimentConfig {
                preset: preset.clone(),
                network: NetParams::preset(&preset).map_err(|e| dam_core::Error::Config(e.to_string()))?,
                ..ExperimentConfig::default()
            };
            print!("{}", config.to_toml_string()?);
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<dam_core::Error>() {
            return match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            };
        }
        if cause.is::<DownloadError>() || cause.is::<io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
