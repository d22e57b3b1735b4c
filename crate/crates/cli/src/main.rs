mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical convex integration for the relaxed Muskat mixing problem.
#[derive(Debug, Parser)]
#[command(name = "mixlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the subsolution, dump it and report hull slack.
    Subsolution {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dump grid points per side (power of two, 16..=4096).
        #[arg(long, default_value_t = 256)]
        resolution: usize,
    },
    /// Run the perturbation schedule and write the atoms file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
    },
    /// Replay an atoms file and run the diagnostics suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        atoms: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print density, velocity and power-balance averages as a CSV row.
    Average {
        #[arg(long)]
        config: PathBuf,
        /// `s0,s1,l0,l1,t` in mixing coordinates.
        #[arg(long, allow_hyphen_values = true)]
        rect: String,
        /// Optional atoms file; the bare subsolution otherwise.
        #[arg(long)]
        atoms: Option<PathBuf>,
    },
    /// Merge the run and verify reports in a directory into report.json.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Subsolution { config, out, resolution } => commands::subsolution(&config, &out, resolution),
        Command::Run { config, out, resolution } => commands::run(&config, &out, resolution),
        Command::Verify { config, atoms, out } => commands::verify(&config, &atoms, &out),
        Command::Average { config, rect, atoms } => commands::average(&config, &rect, atoms.as_deref()),
        Command::Report { out } => commands::report(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
