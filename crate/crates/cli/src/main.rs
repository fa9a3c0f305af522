use std::path::{Path, PathBuf};
use std::process::ExitCode;

use battsched_cli::config::ModelKind;
use battsched_cli::{commands, CliError, Inputs};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "battsched", version, about = "Battery scheduling across model fidelities")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized diagnostics.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a schedule on the configured model.
    Simulate {
        /// Schedule CSV (`ch_mw,dis_mw` or `current_a`); defaults to `schedule` in the config.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Optimize a schedule for the configured model.
    Solve,
    /// Execute a schedule on a (possibly different) model, clipping what it cannot do.
    Replay {
        /// Schedule CSV (`ch_mw,dis_mw` or `current_a`); defaults to `schedule` in the config.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Model to replay on; defaults to the configured one.
        #[arg(long)]
        model: Option<ModelKind>,
        /// Value the schedule was claimed to earn, for the gap report.
        #[arg(long)]
        claimed: Option<f64>,
    },
    /// Solve on the configured model, then replay on the comparison models.
    Compare,
    /// Check a parameter file.
    ValidateParams {
        /// Parameter JSON; defaults to the one named in the config.
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

fn inputs(cli: &Cli) -> Result<Inputs, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Input(anyhow::anyhow!("--config is required")))?;
    Ok(Inputs::load(path)?)
}

fn out_dir(cli: &Cli, inputs: &Inputs) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| inputs.cfg.out.clone())
        .unwrap_or_else(|| Path::new("battsched-out").to_path_buf())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { schedule } => {
            let inputs = inputs(cli)?;
            let r = commands::simulate(&inputs, &out_dir(cli, &inputs), schedule.as_deref())?;
            println!("simulated {}: value {}", r.model, r.value);
        }
        Command::Solve => {
            let inputs = inputs(cli)?;
            let r = commands::solve(&inputs, &out_dir(cli, &inputs), cli.seed)?;
            println!("solved {}: value {}", r.model, r.value);
        }
        Command::Replay { schedule, model, claimed } => {
            let inputs = inputs(cli)?;
            let r = commands::replay_cmd(&inputs, &out_dir(cli, &inputs), schedule.as_deref(), *model, *claimed)?;
            println!(
                "replayed on {}: realized {} with {} violation(s)",
                r.replay.model,
                r.replay.realized_value,
                r.replay.violations.len()
            );
        }
        Command::Compare => {
            let inputs = inputs(cli)?;
            let r = commands::compare(&inputs, &out_dir(cli, &inputs), cli.seed)?;
            println!("claimed on {}: {}", r.solved_on, r.claimed_value);
            for rep in &r.replays {
                println!(
                    "  {}: realized {} with {} violation(s)",
                    rep.model,
                    rep.realized_value,
                    rep.violations.len()
                );
            }
        }
        Command::ValidateParams { params } => {
            let path = match params {
                Some(p) => p.clone(),
                None => inputs(cli)?.cfg.params,
            };
            let summary = commands::validate_params(&path)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BATTSCHED_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
