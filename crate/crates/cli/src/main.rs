mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Simulator and verification harness for the normalized curvature flow
/// of rotationally symmetric metrics on the two-sphere.
///
/// Exit codes: 0 success (warnings allowed), 1 usage or configuration
/// error, 2 runtime abort (`run`) or conclusion violation (`verify`).
#[derive(Parser)]
#[command(name = "krflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config; writes trace.csv, trace.json, run.json.
    Run { config: PathBuf },
    /// Re-run every check against stored artifacts; writes verify.json.
    Verify { dir: PathBuf },
    /// Run a config template across a parameter grid, one summary row per
    /// run; individual failures are recorded per row.
    Sweep {
        template: PathBuf,
        /// Parameter grid: `beta=0.05,0.1,0.2`, `amplitude=…`, or `seed=…`.
        #[arg(long)]
        grid: String,
    },
    /// Re-run one config across refinement levels (grid degree and record
    /// cadence jointly); writes refine.json with inter-level deltas.
    Refine {
        config: PathBuf,
        /// Polynomial degrees, e.g. `--levels 32,48,64`; the record and
        /// checkpoint cadences halve at each successive level.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        levels: Vec<usize>,
    },
    /// Print a digest of stored run (and verify) artifacts.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version print to stdout and exit 0; genuine
            // usage errors exit 1 (2 is reserved for runtime aborts).
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config } => commands::cmd_run(&config),
        Command::Verify { dir } => commands::cmd_verify(&dir),
        Command::Sweep { template, grid } => commands::cmd_sweep(&template, &grid),
        Command::Refine { config, levels } => commands::cmd_refine(&config, &levels),
        Command::Report { dir } => commands::cmd_report(&dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
