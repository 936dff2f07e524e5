use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mimo_training::experiments::{
    cmd_alloc, cmd_required_r, cmd_simulate, cmd_sweep_c1, cmd_theory, cmd_validate, ExperimentConfig, OutputFormat,
    PowerMode, Table,
};
use mimo_training::Scheme;

/// Closed-form BER, power allocation and Monte Carlo simulation of
/// time-multiplexed (TDMT) and data-dependent superimposed (DDST) training
/// for zero-forcing MIMO receivers.
///
/// Settings are resolved as command-line flags, then the --config file,
/// then built-in defaults. SNR is sigma2_T / sigma2_v in dB with
/// sigma2_T = 1.
#[derive(Parser, Debug)]
#[command(name = "mimo-training", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Theoretical BER curves per SNR.
    Theory,
    /// Monte Carlo BER with 95 % Wilson intervals next to theory.
    Simulate,
    /// Both schemes across c1 = K/N at a fixed SNR.
    #[command(name = "sweep-c1")]
    SweepC1 {
        /// c1 values; those without an integer N = K/c1 are skipped.
        #[arg(long, value_delimiter = ',')]
        c1: Option<Vec<f64>>,
        /// SNR of the sweep in dB.
        #[arg(long)]
        sweep_snr_db: Option<f64>,
    },
    /// Smallest TDMT pilot length meeting the target BER, and DDST feasibility.
    #[command(name = "required-r")]
    RequiredR,
    /// BER-minimising pilot/data power splits and their limits.
    Alloc {
        /// Cross-check every split against a golden-section search.
        #[arg(long)]
        verify: bool,
    },
    /// Numerical checks of the large-system machinery; exits with 2 if any fails.
    ///
    /// --k and --m size the random-matrix checks here (default 32 and 64).
    Validate {
        /// Realisations per random-matrix check.
        #[arg(long)]
        reps: Option<usize>,
        /// Noise draws per characteristic-function check.
        #[arg(long)]
        draws: Option<u64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Tdmt,
    Ddst,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PowerArg {
    Optimal,
    Explicit,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Common {
    /// Transmit antennas.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Receive antennas.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Frame length in symbols.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// TDMT pilot length.
    #[arg(long, global = true)]
    n1: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    snr_db_start: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    snr_db_stop: Option<f64>,
    #[arg(long, global = true)]
    snr_db_step: Option<f64>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    /// Data bits per simulated point.
    #[arg(long, global = true)]
    bits: Option<u64>,
    /// Master seed.
    #[arg(long, global = true, env = "MIMO_TRAINING_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    power: Option<PowerArg>,
    /// Data power in explicit mode.
    #[arg(long, global = true)]
    sigma2_w: Option<f64>,
    /// Pilot power in explicit mode.
    #[arg(long, global = true)]
    sigma2_p: Option<f64>,
    #[arg(long, global = true)]
    target_ber: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML file with any of the settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?
        }
        None => ExperimentConfig::default(),
    };
    let c = &cli.common;
    let validating = matches!(cli.command, Command::Validate { .. });
    if validating {
        if let Some(k) = c.k {
            cfg.validate_k = k;
        }
        if let Some(m) = c.m {
            cfg.validate_m = m;
        }
    } else {
        cfg.k = c.k.unwrap_or(cfg.k);
        cfg.m = c.m.unwrap_or(cfg.m);
    }
    cfg.n = c.n.unwrap_or(cfg.n);
    cfg.n1 = c.n1.unwrap_or(cfg.n1);
    cfg.snr_db_start = c.snr_db_start.unwrap_or(cfg.snr_db_start);
    cfg.snr_db_stop = c.snr_db_stop.unwrap_or(cfg.snr_db_stop);
    cfg.snr_db_step = c.snr_db_step.unwrap_or(cfg.snr_db_step);
    if let Some(s) = c.scheme {
        cfg.schemes = match s {
            SchemeArg::Tdmt => vec![Scheme::Tdmt],
            SchemeArg::Ddst => vec![Scheme::Ddst],
            SchemeArg::Both => Scheme::ALL.to_vec(),
        };
    }
    cfg.bits = c.bits.unwrap_or(cfg.bits);
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    if let Some(p) = c.power {
        cfg.power = match p {
            PowerArg::Optimal => PowerMode::Optimal,
            PowerArg::Explicit => PowerMode::Explicit,
        };
    }
    cfg.sigma2_w = c.sigma2_w.or(cfg.sigma2_w);
    cfg.sigma2_p = c.sigma2_p.or(cfg.sigma2_p);
    cfg.target_ber = c.target_ber.unwrap_or(cfg.target_ber);
    cfg.out = c.out.clone().or(cfg.out);
    if let Some(f) = c.format {
        cfg.format = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    cfg.workers = c.workers.or(cfg.workers);
    match &cli.command {
        Command::SweepC1 { c1, sweep_snr_db } => {
            if let Some(grid) = c1 {
                cfg.c1_grid = grid.clone();
            }
            cfg.sweep_snr_db = sweep_snr_db.unwrap_or(cfg.sweep_snr_db);
        }
        Command::Alloc { verify } => cfg.verify |= *verify,
        Command::Validate { reps, draws } => {
            cfg.validate_reps = reps.unwrap_or(cfg.validate_reps);
            cfg.validate_draws = draws.unwrap_or(cfg.validate_draws);
        }
        _ => {}
    }
    Ok(cfg)
}

fn emit(table: &Table, cfg: &ExperimentConfig) -> Result<(), String> {
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    let text = table.render(cfg.format);
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    let cfg = resolve(cli)?;
    if cli.common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    let table = match &cli.command {
        Command::Theory => cmd_theory(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::SweepC1 { .. } => cmd_sweep_c1(&cfg),
        Command::RequiredR => cmd_required_r(&cfg),
        Command::Alloc { .. } => cmd_alloc(&cfg),
        Command::Validate { .. } => {
            let report = cmd_validate(&cfg).map_err(|e| e.to_string())?;
            emit(&report.table, &cfg)?;
            if !report.passed {
                eprintln!("validation failed");
                return Ok(ExitCode::from(2));
            }
            return Ok(ExitCode::SUCCESS);
        }
    }
    .map_err(|e| e.to_string())?;
    emit(&table, &cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
