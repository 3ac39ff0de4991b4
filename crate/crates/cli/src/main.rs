use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmdll_cli::commands::{self, CommonOptions};
use mmdll_cli::CliError;

#[derive(Parser)]
#[command(name = "mmdll", version, about = "Behavioral DLL lock simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trace.csv and summary.json.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also write skew.svg.
        #[arg(long)]
        plot: bool,
    },
    /// Run every combination of the [sweep] axes.
    Sweep {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run all four locking schemes on the same plant.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Figures of merit for a comparison table (defaults to the shipped one).
    Fom {
        table: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Output directory; overrides [output].dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_cycles: Option<u32>,
    /// Omit the generation timestamp so outputs are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

impl Common {
    fn options(self, plot: bool) -> CommonOptions {
        CommonOptions {
            out: self.out,
            seed: self.seed,
            plot,
            timestamp: !self.no_timestamp,
            max_cycles: self.max_cycles,
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run {
            scenario,
            common,
            plot,
        } => {
            let report = commands::cmd_run(&scenario, &common.options(plot))?;
            print!("{}", commands::render_run(&report));
            Ok(commands::outcome_exit_code(report.summary.outcome))
        }
        Command::Sweep { scenario, common } => {
            let rows = commands::cmd_sweep(&scenario, &common.options(false))?;
            print!("{}", commands::render_sweep(&rows));
            Ok(0)
        }
        Command::Compare { scenario, common } => {
            let rows = commands::cmd_compare(&scenario, &common.options(false))?;
            print!("{}", commands::render_compare(&rows));
            Ok(0)
        }
        Command::Fom { table, out } => {
            let rows = commands::cmd_fom(table.as_deref(), out.as_deref())?;
            print!("{}", commands::render_fom(&rows));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
