use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hlflock::commands::{
    cmd_ensemble, cmd_run, cmd_sweep, cmd_verify, output_dir, write_condition_table, CliError, EnsembleOptions,
    Format, GridAxis,
};
use hlflock::config::SimConfig;

#[derive(Parser)]
#[command(name = "hlflock", version, about = "Hierarchical Cucker-Smale flocks with random interactions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Run replicas on one thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Write the absolute frame instead of coordinates relative to bird 1.
        #[arg(long)]
        absolute: bool,
    },
    /// Check the flocking guarantees for the initial state.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Monte Carlo estimates over independent replicas.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
        /// Also write each replica's trajectory.
        #[arg(long)]
        per_replica: bool,
    },
    /// Ensembles over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ens: EnsembleArgs,
        /// Axis as name=v1,v2,...; names are p, alpha, h, speed, box_side, seed.
        #[arg(long = "grid", required = true)]
        grid: Vec<GridAxis>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
}

fn load(common: &Common) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    // a closed pipe (`| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, format, absolute } => {
            let cfg = load(&common)?;
            let dir = output_dir(&cfg, common.out.as_deref());
            let summary = cmd_run(&cfg, &dir, format.into(), absolute)?;
            print_json(&summary);
        }
        Command::Verify { common, format } => {
            let cfg = load(&common)?;
            let report = cmd_verify(&cfg)?;
            if let Some(dir) = &common.out {
                match format {
                    FormatArg::Json => {
                        let text = serde_json::to_string_pretty(&report).expect("report serializes");
                        std::fs::create_dir_all(dir)
                            .and_then(|_| std::fs::write(dir.join("verify.json"), text + "\n"))
                            .map_err(|source| CliError::Io { path: dir.clone(), source })?;
                    }
                    FormatArg::Csv => write_condition_table(&report, &dir.join("conditions.csv"))?,
                }
            }
            print_json(&report);
        }
        Command::Ensemble { common, ens, format, per_replica } => {
            let cfg = load(&common)?;
            let dir = output_dir(&cfg, common.out.as_deref());
            let opts =
                EnsembleOptions { replicas: ens.replicas, horizon: ens.horizon, serial: ens.serial, per_replica };
            let report = cmd_ensemble(&cfg, &dir, format.into(), &opts)?;
            eprintln!(
                "{} replicas, flocking fraction {}, {} comparisons {}",
                report.replicas,
                report.flocking.fraction,
                report.comparisons.len(),
                if report.all_pass() { "all pass" } else { "with failures" }
            );
        }
        Command::Sweep { common, ens, grid, format } => {
            let cfg = load(&common)?;
            let dir = output_dir(&cfg, common.out.as_deref());
            let opts = EnsembleOptions { replicas: ens.replicas, horizon: ens.horizon, serial: ens.serial, per_replica: false };
            let rows = cmd_sweep(&cfg, &grid, &dir, format.into(), &opts)?;
            eprintln!("{} grid points written to {}", rows.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hlflock: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
