use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mimo_alloc::geometry::ConfigFile;
use mimo_alloc::harness::{self, ExperimentSpec, Figure, Report};

/// Optimal pilot/data energy allocation for multicell massive-MIMO uplink.
#[derive(Debug, Parser)]
#[command(name = "mimo-alloc", version)]
struct Cli {
    /// Experiment to run: fig1, fig2, fig3 or validate.
    #[arg(value_parser = parse_figure)]
    experiment: Figure,

    /// TOML system configuration (cells, antennas, terminals, ..., seed).
    #[arg(long)]
    config: PathBuf,

    /// Number of fading snapshots (fig3, validate).
    #[arg(long)]
    snapshots: Option<usize>,

    /// Master seed; overrides the config file.
    #[arg(long, env = "MIMO_ALLOC_SEED")]
    seed: Option<u64>,

    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Comma-separated antenna counts, e.g. 50,100.
    #[arg(long)]
    antennas: Option<String>,

    /// SNR sweep in dB as lo:hi:step.
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Option<String>,

    /// Monte Carlo trials per point (validate).
    #[arg(long)]
    trials: Option<usize>,
}

fn parse_figure(s: &str) -> Result<Figure, String> {
    s.parse().map_err(|e: mimo_alloc::Error| e.to_string())
}

fn run(cli: Cli) -> mimo_alloc::Result<Report> {
    let file = ConfigFile::load(&cli.config)?;
    let config = file.system();
    let seed = cli.seed.unwrap_or(file.seed);
    let mut spec = ExperimentSpec::new(cli.experiment, &config, seed, cli.out);
    if let Some(n) = cli.snapshots {
        spec.snapshots = n;
    }
    if let Some(list) = cli.antennas.as_deref() {
        spec.antenna_counts = harness::parse_antenna_list(list)?;
    }
    if let Some(range) = cli.snr_db.as_deref() {
        spec.snr_grid_db = harness::parse_snr_range(range)?;
    }
    if let Some(t) = cli.trials {
        spec.trials = t;
    }
    harness::run(&spec, &config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            for path in report.files() {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mimo-alloc: {e}");
            ExitCode::FAILURE
        }
    }
}
