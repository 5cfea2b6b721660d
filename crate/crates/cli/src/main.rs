//! `csadc` — batch front-end for the current-sensing delta-sigma ADC
//! simulator.

use clap::{Parser, Subcommand};
use csadc_cli::{cmd_report, cmd_simulate, cmd_sweep, RunOptions, SimulateArgs, SweepArgs};
use csadc_core::Window;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "csadc",
    about = "Behavioral simulator for a sub-pA current-sensing delta-sigma ADC",
    version
)]
struct Cli {
    /// Path to the flat key/value config file.
    #[arg(long, global = true, default_value = "csadc.toml")]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the config-file RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweep points (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Modulate one tone; writes bitstream.csv, decimated.csv, spectrum.csv,
    /// metrics.txt.
    Simulate {
        /// Tone amplitude in dB relative to full scale.
        #[arg(long, allow_hyphen_values = true, default_value_t = -5.0)]
        amp_dbfs: f64,
        /// Tone frequency (Hz).
        #[arg(long, default_value_t = 1.9e3)]
        freq_hz: f64,
        /// Number of modulator clocks to run.
        #[arg(long, default_value_t = 1 << 17)]
        n: usize,
        /// Snap the tone to an odd coherent FFT bin.
        #[arg(long, default_value_t = false)]
        coherent: bool,
        /// Analysis window: hann or rect.
        #[arg(long, default_value = "hann")]
        window: Window,
    },
    /// SNDR versus input level; writes sweep.csv and dr.txt.
    Sweep {
        /// Sweep start (dBFS, >= -120).
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        /// Sweep end (dBFS, <= 0).
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        /// Step (dB, > 0).
        #[arg(long)]
        step: f64,
        /// Tone frequency (Hz).
        #[arg(long, default_value_t = 1.9e3)]
        freq_hz: f64,
        /// Clocks per sweep point.
        #[arg(long, default_value_t = 1 << 17)]
        n: usize,
        /// Snap the tone to an odd coherent FFT bin.
        #[arg(long, default_value_t = true)]
        coherent: bool,
    },
    /// Summary table from previous simulate + sweep outputs; writes
    /// report.txt and prints the table.
    Report,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = RunOptions {
        config_path: cli.config,
        out_dir: cli.out,
        seed: cli.seed,
        jobs: cli.jobs,
    };
    let result = match cli.command {
        Command::Simulate {
            amp_dbfs,
            freq_hz,
            n,
            coherent,
            window,
        } => cmd_simulate(
            &opts,
            &SimulateArgs {
                amp_dbfs,
                freq_hz,
                n,
                coherent,
                window,
            },
        ),
        Command::Sweep {
            from,
            to,
            step,
            freq_hz,
            n,
            coherent,
        } => cmd_sweep(
            &opts,
            &SweepArgs {
                from_dbfs: from,
                to_dbfs: to,
                step_db: step,
                freq_hz,
                n,
                coherent,
            },
        ),
        Command::Report => cmd_report(&opts).map(|table| print!("{table}")),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
