use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use micromaser_cli::commands::{self, Overrides, RunOutput};
use micromaser_cli::config::RunConfig;
use micromaser_cli::output::write_all;
use micromaser_cli::CliError;

#[derive(Parser)]
#[command(name = "micromaser", version, about = "One-atom maser and microlaser simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state photon statistics.
    Steady(Common),
    /// Steady state over a grid of pump parameters.
    Sweep(Common),
    /// Atom-by-atom quantum trajectory.
    Trajectory(Common),
    /// Trapping-state condition table.
    Trap(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "MICROMASER_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    atoms: Option<usize>,
    /// Atom indices at which to save P(n), comma separated.
    #[arg(long = "snapshot", value_delimiter = ',')]
    snapshots: Option<Vec<usize>>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, runner): (Common, fn(&RunConfig) -> Result<RunOutput, CliError>) = match cli.command {
        Command::Steady(c) => (c, commands::steady),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Trajectory(c) => (c, commands::trajectory),
        Command::Trap(c) => (c, commands::trap),
    };
    let mut config = RunConfig::from_path(&common.config)?;
    Overrides { seed: common.seed, atoms: common.atoms, snapshots: common.snapshots }.apply(&mut config);
    let out = common.out.or_else(|| config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let RunOutput { files, status } = runner(&config)?;
    for path in write_all(&out, &files)? {
        eprintln!("wrote {}", path.display());
    }
    status
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
