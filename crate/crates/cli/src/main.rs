mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::DataSource;
use config::RunConfig;
use error::CliError;

/// Fractional SEIRD simulation and PINN parameter identification.
#[derive(Debug, Parser)]
#[command(name = "fracpinn", version)]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration value, e.g. `--set train.adam.lr0=5e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Observation CSV (t,s,e,i,r,d,mask).
    #[arg(long, conflicts_with = "cases")]
    obs: Option<PathBuf>,

    /// Cumulative case counts (day,confirmed,recovered,deaths).
    #[arg(long)]
    cases: Option<PathBuf>,
}

impl From<DataArgs> for DataSource {
    fn from(a: DataArgs) -> Self {
        DataSource { obs: a.obs, cases: a.cases }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the model and write the trajectory.
    Simulate,
    /// Simulate, subsample, and add observation noise.
    Generate,
    /// Fit the network and parameters to observations.
    Fit(DataArgs),
    /// Refit with α frozen on each value of the configured grid.
    Profile(DataArgs),
    /// Residual-bootstrap confidence intervals.
    Bootstrap(DataArgs),
    /// Fit with selected loss terms switched off.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of phys,cons,ic_term,reg (overrides the config).
        #[arg(long)]
        disable: Option<String>,
    },
}

fn init_pool(jobs: Option<usize>) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs {n}: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(())
}

fn run(cli: Cli) -> Result<String, CliError> {
    init_pool(cli.jobs)?;
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, out),
        Command::Generate => commands::cmd_generate(&cfg, out),
        Command::Fit(d) => commands::cmd_fit(&cfg, &d.into(), out),
        Command::Profile(d) => commands::cmd_profile(&cfg, &d.into(), out),
        Command::Bootstrap(d) => commands::cmd_bootstrap(&cfg, &d.into(), out),
        Command::Ablate { data, disable } => commands::cmd_ablate(&cfg, &data.into(), disable.as_deref(), out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
