use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use levy_extract::stages::train_dataset;
use levy_extract::{Outcome, Pipeline, PipelineError, Result, RunConfig, Stage};
use levykm::flow::{Architecture, TrainConfig};

#[derive(Parser)]
#[command(
    name = "levy-extract",
    version,
    about = "Extract drift, diffusion and Lévy jump law of an SDE from short bursts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    /// Rerun this stage and everything after it even when cached.
    #[arg(long, value_enum)]
    force_stage: Option<Stage>,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Nsf1d,
    Realnvp2d,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the burst dataset.
    Simulate(Common),
    /// Train one flow per burst. With `--dataset`, `--arch` and `--out`,
    /// trains on a dataset directory outside any run.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires_all = ["arch", "out"], conflicts_with = "config")]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        arch: Option<Arch>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the standalone form.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the jump law, drift and diffusion.
    Extract(Common),
    /// Recompute errors and plots from the result tables.
    Report(Common),
    /// Run every stage, reusing cached outputs.
    All(Common),
}

fn pool(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(PipelineError::Validation(
                "--workers must be at least 1".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Other(e.to_string()))?;
    }
    Ok(())
}

fn run_stages(common: &Common, stages: &[Stage]) -> Result<()> {
    pool(common.workers)?;
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Validation("--config is required".into()))?;
    let config = RunConfig::load(path)?;
    let mut pipeline = Pipeline::new(config);
    pipeline.force = common.force_stage;
    pipeline.quiet = common.quiet;
    for (stage, outcome) in pipeline.run(stages)? {
        let what = match outcome {
            Outcome::Ran => "ran",
            Outcome::Cached => "cached",
        };
        println!("{}: {what}", stage.name());
    }
    if stages.contains(&Stage::Report) {
        println!("report: {}", pipeline.report_dir().display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => run_stages(&c, &[Stage::Simulate]),
        Command::Train {
            common,
            dataset: Some(dataset),
            arch,
            out,
            seed,
        } => {
            pool(common.workers)?;
            let arch = match arch.expect("clap enforces --arch") {
                Arch::Nsf1d => Architecture::nsf1d(),
                Arch::Realnvp2d => Architecture::realnvp2d(),
            };
            let out = out.expect("clap enforces --out");
            let failures = train_dataset(&dataset, &arch, &TrainConfig::default(), seed, &out)?;
            for f in &failures {
                eprintln!("burst {}: {}", f.index, f.message);
            }
            println!("models: {}", out.display());
            Ok(())
        }
        Command::Train { common, .. } => run_stages(&common, &[Stage::Train]),
        Command::Extract(c) => run_stages(&c, &[Stage::Extract]),
        Command::Report(c) => run_stages(&c, &[Stage::Report]),
        Command::All(c) => run_stages(&c, &Stage::ALL),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
