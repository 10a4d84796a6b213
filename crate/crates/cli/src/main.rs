use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dendrite_cli::analyze::run_analysis;
use dendrite_cli::config::TaskKind;
use dendrite_cli::plot::emit_plots;
use dendrite_cli::{run_sweep, CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "dendrite", version, about = "Train and analyze dendritic vs dense MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every grid point × seed and aggregate the results
    Sweep(Common),
    /// Analyze the most accurate model of each kind from a finished sweep
    Analyze(Common),
    /// Render SVG figures from an output directory's CSV files
    Plot(PlotArgs),
    /// Train the configured models on Gaussian-noise versions of the data
    NoiseBench(Common),
    /// Train the configured models with class-blocked minibatches
    SequentialBench(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment TOML
    #[arg(long)]
    config: PathBuf,
    /// Dataset root (else $DENDRITE_DATA_DIR, else ./data)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated seed list, overriding the config
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Runs trained concurrently (default from config, else 1)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Take the output directory from this experiment TOML
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(d) = &self.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep_with(mut cfg: ExperimentConfig, task: Option<TaskKind>) -> Result<()> {
    if let Some(task) = task {
        if task != TaskKind::Noisy {
            cfg.noise_sigmas.clear();
        }
        cfg.task = task;
    }
    let reports = run_sweep(&cfg)?;
    let mut failed = 0;
    for r in &reports {
        println!(
            "{}: {} trained, {} reused, {} failed, {} configurations",
            r.task,
            r.trained,
            r.skipped,
            r.failures.len(),
            r.configs.len()
        );
        for f in &r.failures {
            eprintln!("  {} seed {}: {}", f.label, f.seed, f.message);
        }
        failed += r.failures.len();
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} runs failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(c) => sweep_with(c.load()?, None),
        Command::NoiseBench(c) => sweep_with(c.load()?, Some(TaskKind::Noisy)),
        Command::SequentialBench(c) => sweep_with(c.load()?, Some(TaskKind::Sequential)),
        Command::Analyze(c) => run_analysis(&c.load()?).map(|_| ()),
        Command::Plot(p) => {
            let dir = match (&p.out_dir, &p.config) {
                (Some(d), _) => d.clone(),
                (None, Some(c)) => ExperimentConfig::load(c)?.out_dir,
                (None, None) => return Err(CliError::Config("plot needs --out-dir or --config".into())),
            };
            for f in emit_plots(&dir)? {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
