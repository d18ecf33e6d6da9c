use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaitscope_cli::{commands, CliError, CliResult, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "gaitscope",
    version,
    about = "Train and dissect recurrent locomotion policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy by imitation with truncated BPTT.
    Train(Common),
    /// Record recurrent states over the speed sweep.
    Rollout(Common),
    /// Fit the principal-component basis of recorded states.
    Pca(Common),
    /// Find, classify and visualize fixed points of the recurrent map.
    FixedPoints(Common),
    /// Jump the recurrent state along a principal component.
    PerturbNeural(Common),
    /// Push the body laterally and record the recovery.
    PerturbPhysical(Common),
    /// Recovery fractions over push magnitudes and durations.
    RobustnessGrid(Common),
    /// Train one model per truncation length and compare their grids.
    BpttCompare(Common),
}

type Handler = fn(&ExperimentConfig) -> CliResult<Vec<PathBuf>>;

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    let (common, cmd): (Common, Handler) = match cli.command {
        Command::Train(c) => (c, commands::train),
        Command::Rollout(c) => (c, commands::rollout),
        Command::Pca(c) => (c, commands::pca),
        Command::FixedPoints(c) => (c, commands::fixed_points),
        Command::PerturbNeural(c) => (c, commands::perturb_neural),
        Command::PerturbPhysical(c) => (c, commands::perturb_physical),
        Command::RobustnessGrid(c) => (c, commands::robustness),
        Command::BpttCompare(c) => (c, commands::bptt_compare),
    };
    let overrides = Overrides {
        seed: common.seed,
        out_dir: common.out.clone(),
    };
    let cfg = ExperimentConfig::load(common.config.as_deref(), &overrides)?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    cmd(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(written) => {
            for p in written {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
