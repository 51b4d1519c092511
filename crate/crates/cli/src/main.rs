use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leoma::commands::{cmd_beampattern, cmd_ephemeris, cmd_run, cmd_sweep, with_workers};
use leoma::scenario::{parse_scenario, ScenarioSpec};
use leoma::solver::Scheme;
use leoma::Error;

/// Movable-antenna ground station optimizer for Walker-Delta LEO constellations.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every scheme and write rates, trace, layout and gain CSVs.
    Run(Common),
    /// Write beam-pattern CSVs for selected slots.
    Beampattern {
        #[command(flatten)]
        common: Common,
        /// Comma-separated 1-based slot indices; defaults to the scenario's `pattern.slots`.
        #[arg(long, value_delimiter = ',')]
        slots: Vec<usize>,
    },
    /// Solve the Cartesian product of the scenario's sweep axes.
    Sweep(Common),
    /// Dump visible satellites per slot.
    Ephemeris(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated schemes (MA, SFPA, DFPA), overriding the scenario.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ScenarioSpec, Error> {
        let mut spec = parse_scenario(&self.config).map_err(|e| match e {
            Error::Io(io) => {
                Error::InvalidConfig(format!("cannot read {}: {io}", self.config.display()))
            }
            other => other,
        })?;
        if !self.scheme.is_empty() {
            let mut schemes = Vec::new();
            for name in &self.scheme {
                let s: Scheme = name.parse()?;
                if !schemes.contains(&s) {
                    schemes.push(s);
                }
            }
            spec.schemes = schemes;
        }
        Ok(spec)
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(c) => {
            let spec = c.load()?;
            let bundle = with_workers(c.workers, || cmd_run(&spec, &c.out))??;
            for w in &bundle.warnings {
                log::warn!("{w}");
            }
            for r in &bundle.results {
                println!(
                    "{}: avg_rate {:.4} bps/Hz after {} iteration(s){}",
                    r.scheme,
                    r.avg_rate,
                    r.iterations,
                    if r.converged { "" } else { " (not converged)" }
                );
            }
            println!("results written to {}", c.out.display());
        }
        Command::Beampattern { common: c, slots } => {
            let spec = c.load()?;
            let slots = if slots.is_empty() {
                spec.pattern.slots.clone()
            } else {
                slots
            };
            let files = with_workers(c.workers, || cmd_beampattern(&spec, &slots, &c.out))??;
            println!("{} beam-pattern file(s) written to {}", files.len(), c.out.display());
        }
        Command::Sweep(c) => {
            let spec = c.load()?;
            let rows = with_workers(c.workers, || cmd_sweep(&spec, &c.out))??;
            println!("{} sweep row(s) written to {}", rows.len(), c.out.join("sweep.csv").display());
        }
        Command::Ephemeris(c) => {
            let spec = c.load()?;
            let path = with_workers(c.workers, || cmd_ephemeris(&spec, &c.out))??;
            println!("ephemeris written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
