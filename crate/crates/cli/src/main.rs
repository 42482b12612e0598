use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qdfeedback_cli::{load_config, run_experiment, write_outputs, CliError, Experiment};

/// Simulate QD-cavity spectra with intensity-dependent blueshift.
#[derive(Parser)]
#[command(name = "qdfeedback", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Noise seed for synthetic fits; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Paired up/down laser sweeps, optionally over bias voltages.
    Scan,
    /// Pump-probe map of the pump-induced QD shift.
    Twolaser,
    /// Trapped-charge build-up and decay under a pump schedule.
    Dynamics,
    /// Least-squares fit of a reflectivity spectrum.
    Fit,
    /// Power-law fit of simulated on-resonance shifts or of a CSV.
    Powerlaw,
    /// Shift, voltage and hysteresis width against power, with power-law fits.
    Fig2,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Scan => Experiment::Scan,
            Command::Twolaser => Experiment::TwoLaser,
            Command::Dynamics => Experiment::Dynamics,
            Command::Fit => Experiment::Fit,
            Command::Powerlaw => Experiment::PowerLaw,
            Command::Fig2 => Experiment::Fig2,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(vec![format!("--threads: {e}")]))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["--config <path> is required".into()]))?;
    let mut cfg = load_config(path)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let exp = Experiment::from(cli.command);
    let out = run_experiment(&cfg, exp)?;
    let written = write_outputs(&cli.out, &out.files)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
