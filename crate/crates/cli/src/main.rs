use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use synprobe::probes::Family;
use synprobe_cli::fixture::{write_smoke_fixture, SmokeSpec};
use synprobe_cli::pipeline::{run_stages, Stage};
use synprobe_cli::{CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "synprobe", version, about = "Probe hidden states, score minimal pairs, relate the two")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Pipeline config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `probes`, comma separated.
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<Family>>,
    /// Overrides `glove`.
    #[arg(long)]
    glove: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every selected probe on every layer and pick the best layer.
    TrainProbe(ConfigArgs),
    /// Score the acceptable minimal-pair sentences with the best-layer probes.
    EvalProbe(ConfigArgs),
    /// Join pair outcomes with probe scores.
    ScoreJoin(ConfigArgs),
    /// Regression tables at each granularity.
    Regress(ConfigArgs),
    /// Sentence-level Welch tests per paradigm.
    Ttest(ConfigArgs),
    /// Critical-edge agreement between probes and outcomes.
    Critical(ConfigArgs),
    /// Scatter plots and the report index.
    Report(ConfigArgs),
    /// All stages in order.
    RunAll(ConfigArgs),
    /// Write a synthetic smoke-test input tree with a config.
    SynthFixture {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        models: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(args: &ConfigArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = &args.probes {
        cfg.probes = p.clone();
    }
    if let Some(g) = &args.glove {
        cfg.glove = Some(g.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, stages): (ConfigArgs, Vec<Stage>) = match cli.command {
        Command::SynthFixture { dir, models, seed } => {
            let spec = SmokeSpec {
                models,
                seed,
                ..SmokeSpec::default()
            };
            let path = write_smoke_fixture(&dir, &spec)?;
            println!("{}", path.display());
            return Ok(());
        }
        Command::TrainProbe(a) => (a, vec![Stage::TrainProbe]),
        Command::EvalProbe(a) => (a, vec![Stage::EvalProbe]),
        Command::ScoreJoin(a) => (a, vec![Stage::ScoreJoin]),
        Command::Regress(a) => (a, vec![Stage::Regress]),
        Command::Ttest(a) => (a, vec![Stage::TTest]),
        Command::Critical(a) => (a, vec![Stage::Critical]),
        Command::Report(a) => (a, vec![Stage::Report]),
        Command::RunAll(a) => (a, Stage::ALL.to_vec()),
    };
    let out = run_stages(load(&args)?, &stages)?;
    println!("{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
