//! Command implementations behind the `csadc` binary.
//!
//! Three batch commands over a flat key/value config file:
//!
//! - `simulate` — one tone through the full chain; writes `bitstream.csv`,
//!   `decimated.csv`, `spectrum.csv`, `metrics.txt`
//! - `sweep` — SNDR versus input level; writes `sweep.csv`, `dr.txt`
//! - `report` — performance-summary table against the published reference
//!   column; writes `report.txt`
//!
//! Every command writes a `manifest.txt` (config path, command line, seed,
//! timestamp) next to its outputs. Data artifacts are byte-reproducible for
//! a fixed seed; the manifest carries the wall-clock timestamp and is the
//! one file excluded from byte-identity.

use csadc_core::{
    analysis, decimate_cic, dynamic_range, gen_tone, io, min_detectable_signal, nanopore_filter,
    psd_estimate, run, sndr_in_band, snap_coherent, AnalysisError, Bitstream, ConfigError,
    ModulatorError, SimConfig, StimulusError, ValidatedConfig, Window,
};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Exit codes: 0 success, 2 config error, 3 runtime instability,
/// 4 missing inputs, 1 anything else.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("modulator unstable: {0}")]
    Instability(String),
    #[error("missing inputs: {}", .0.join(", "))]
    MissingInputs(Vec<String>),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Instability(_) => 3,
            CliError::MissingInputs(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<StimulusError> for CliError {
    fn from(e: StimulusError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Other(anyhow::anyhow!(e.to_string()))
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::Other(anyhow::anyhow!(e.to_string()))
    }
}

/// Common options shared by all commands.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides the config-file seed when set.
    pub seed: Option<u64>,
    /// Worker threads for sweep points (0 = rayon default).
    pub jobs: usize,
}

/// Manifest written alongside every command's outputs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_path: String,
    pub command: String,
    pub out_dir: String,
    pub seed: u64,
    pub timestamp: String,
}

impl RunManifest {
    fn new(opts: &RunOptions, command: String, seed: u64) -> Self {
        Self {
            config_path: opts.config_path.display().to_string(),
            command,
            out_dir: opts.out_dir.display().to_string(),
            seed,
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = format!(
            "config={}\ncommand={}\nout_dir={}\nseed={}\ntimestamp={}\n",
            self.config_path, self.command, self.out_dir, self.seed, self.timestamp
        );
        std::fs::write(dir.join("manifest.txt"), text)
            .map_err(|e| CliError::Other(anyhow::anyhow!("manifest: {e}")))?;
        Ok(())
    }
}

fn load(opts: &RunOptions) -> Result<(SimConfig, ValidatedConfig, u64), CliError> {
    let sim = SimConfig::from_path(&opts.config_path)?;
    let validated = sim.validated()?;
    let seed = opts.seed.unwrap_or(sim.modulator.seed);
    Ok((sim, validated, seed))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Other(anyhow::anyhow!("cannot create output dir {}: {e}", dir.display()))
    })
}

fn largest_pow2_at_most(n: usize) -> usize {
    let mut p = 1usize;
    while p * 2 <= n {
        p *= 2;
    }
    p
}

/// One modulator run: optional nanopore routing, tone generation, loop.
fn modulate(
    sim: &SimConfig,
    cfg: &ValidatedConfig,
    amp_dbfs: f64,
    f_sig_hz: f64,
    n: usize,
    seed: u64,
) -> Result<Bitstream, CliError> {
    let mut wave = gen_tone(amp_dbfs, f_sig_hz, cfg.fs_hz, n, cfg.full_scale_amp(), 0.0)?;
    if sim.nanopore_enabled {
        wave = nanopore_filter(&wave, &sim.nanopore);
    }
    match run(&wave, cfg, &sim.noise, seed) {
        Ok(bits) => Ok(bits),
        Err(ModulatorError::Unstable { at, limit, .. }) => Err(CliError::Instability(format!(
            "|state| exceeded {limit} at sample {at}"
        ))),
        Err(e) => Err(CliError::Other(anyhow::anyhow!(e.to_string()))),
    }
}

/// Parameters for `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub amp_dbfs: f64,
    pub freq_hz: f64,
    pub n: usize,
    /// Snap the tone to an odd coherent bin of the record.
    pub coherent: bool,
    pub window: Window,
}

/// Run one tone through the chain and write the four artifacts.
pub fn cmd_simulate(opts: &RunOptions, args: &SimulateArgs) -> Result<(), CliError> {
    let (sim, cfg, seed) = load(opts)?;
    ensure_out_dir(&opts.out_dir)?;
    let f_sig = if args.coherent {
        snap_coherent(args.freq_hz, cfg.fs_hz, args.n)
    } else {
        args.freq_hz
    };

    let bits = modulate(&sim, &cfg, args.amp_dbfs, f_sig, args.n, seed)?;
    io::write_bitstream_csv(&opts.out_dir.join("bitstream.csv"), &bits, seed)?;

    let dec = decimate_cic(&bits, cfg.osr, 3)?;
    io::write_decimated_csv(&opts.out_dir.join("decimated.csv"), &dec, seed)?;

    // full-rate spectrum (shows the shaped noise out to Nyquist)
    let n_fft = largest_pow2_at_most(bits.len());
    let spec_raw = psd_estimate(&bits.as_f64(), bits.fs_hz, args.window, n_fft)?;
    io::write_spectrum_csv(&opts.out_dir.join("spectrum.csv"), &spec_raw, seed)?;

    // band metrics from the decimated output
    let band = (cfg.output_rate_hz() / 2.0 - dec.rate_hz / dec.samples.len() as f64).max(1.0);
    let spec_dec = psd_estimate(
        &dec.samples,
        dec.rate_hz,
        args.window,
        largest_pow2_at_most(dec.samples.len()),
    )?;
    let metrics = sndr_in_band(&spec_dec, f_sig, band);
    let mut rows: Vec<(&str, f64)> = vec![
        ("fs_hz", cfg.fs_hz),
        ("full_scale_amp", cfg.full_scale_amp()),
        ("f_sig_hz", f_sig),
        ("amp_dbfs", args.amp_dbfs),
        ("band_hz", band),
        ("n", args.n as f64),
    ];
    match &metrics {
        Ok(m) => {
            rows.push(("sndr_db", m.sndr_db));
            rows.push(("snr_db", m.snr_db));
            rows.push(("sfdr_db", m.sfdr_db));
            let noise_rms_amp = m.noise_rms_fs * cfg.full_scale_amp();
            rows.push(("inband_noise_rms_a", noise_rms_amp));
            rows.push(("mds_amp_a", min_detectable_signal(noise_rms_amp)));
        }
        Err(e) => log::warn!("no band metrics: {e}"),
    }
    io::write_metrics_txt(
        &opts.out_dir.join("metrics.txt"),
        &rows,
        &[
            ("window", args.window.name().to_string()),
            ("seed", seed.to_string()),
            (
                "tone_found",
                if metrics.is_ok() { "yes" } else { "no" }.to_string(),
            ),
        ],
    )?;

    RunManifest::new(
        opts,
        format!(
            "simulate --amp-dbfs {} --freq-hz {} --n {}{}",
            args.amp_dbfs,
            args.freq_hz,
            args.n,
            if args.coherent { " --coherent" } else { "" }
        ),
        seed,
    )
    .write(&opts.out_dir)?;
    Ok(())
}

/// Parameters for `sweep`.
#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub from_dbfs: f64,
    pub to_dbfs: f64,
    pub step_db: f64,
    pub freq_hz: f64,
    pub n: usize,
    pub coherent: bool,
}

/// SNDR-versus-level sweep; points run concurrently up to the jobs bound.
pub fn cmd_sweep(opts: &RunOptions, args: &SweepArgs) -> Result<(), CliError> {
    let (sim, cfg, seed) = load(opts)?;
    if !(args.step_db > 0.0
        && args.from_dbfs <= args.to_dbfs
        && args.from_dbfs >= -120.0
        && args.to_dbfs <= 0.0)
    {
        return Err(CliError::Config(format!(
            "empty or invalid sweep range [{}, {}] step {} (expected -120 <= from <= to <= 0, step > 0)",
            args.from_dbfs, args.to_dbfs, args.step_db
        )));
    }
    ensure_out_dir(&opts.out_dir)?;
    let f_sig = if args.coherent {
        snap_coherent(args.freq_hz, cfg.fs_hz, args.n)
    } else {
        args.freq_hz
    };

    let mut amps = Vec::new();
    let mut a = args.from_dbfs;
    while a <= args.to_dbfs + 1e-9 {
        amps.push(a);
        a += args.step_db;
    }

    let worker = |(idx, amp): (usize, f64)| -> Result<(f64, Option<f64>), CliError> {
        let bits = modulate(&sim, &cfg, amp, f_sig, args.n, seed.wrapping_add(idx as u64))?;
        let dec = decimate_cic(&bits, cfg.osr, 3)?;
        let spec = psd_estimate(
            &dec.samples,
            dec.rate_hz,
            Window::Hann,
            largest_pow2_at_most(dec.samples.len()),
        )?;
        let band = cfg.output_rate_hz() / 2.0 - dec.rate_hz / dec.samples.len() as f64;
        Ok((amp, sndr_in_band(&spec, f_sig, band).ok().map(|m| m.sndr_db)))
    };

    let indexed: Vec<(usize, f64)> = amps.iter().copied().enumerate().collect();
    let results: Result<Vec<_>, CliError> = if opts.jobs == 1 {
        indexed.into_iter().map(worker).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| CliError::Other(anyhow::anyhow!(e.to_string())))?;
        pool.install(|| indexed.into_par_iter().map(worker).collect())
    };
    let rows = results?;

    io::write_sweep_csv(&opts.out_dir.join("sweep.csv"), &rows, seed)?;

    let measured: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|(a, s)| s.map(|v| (*a, v)))
        .collect();
    let dr_text = match dynamic_range(&measured) {
        Ok(dr) => format!("dr_db={dr}\npoints={}\n", measured.len()),
        Err(e) => {
            log::warn!("dynamic range fit failed: {e}");
            format!("dr_db=nan\npoints={}\nerror={e}\n", measured.len())
        }
    };
    std::fs::write(opts.out_dir.join("dr.txt"), dr_text)
        .map_err(|e| CliError::Other(anyhow::anyhow!("dr.txt: {e}")))?;

    RunManifest::new(
        opts,
        format!(
            "sweep --from {} --to {} --step {}",
            args.from_dbfs, args.to_dbfs, args.step_db
        ),
        seed,
    )
    .write(&opts.out_dir)?;
    Ok(())
}

/// Published reference column for the summary table.
struct Reference {
    power_uw: f64,
    supply_v: f64,
    area_mm2: f64,
    max_input_a: f64,
    min_input_a: f64,
    dr_fixed_db: f64,
    dr_cross_db: f64,
    fom_fixed_db: f64,
    fom_cross_db: f64,
}

const REFERENCE_4KHZ: Reference = Reference {
    power_uw: 125.0,
    supply_v: 1.0,
    area_mm2: 0.042,
    max_input_a: 1e-6,
    min_input_a: 0.6e-12,
    dr_fixed_db: 81.0,
    dr_cross_db: 125.0,
    fom_fixed_db: 153.0,
    fom_cross_db: 197.0,
};

fn metrics_value(rows: &[(String, String)], key: &str) -> Option<f64> {
    rows.iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
}

/// Assemble the performance-summary table from a previous `simulate`
/// (metrics.txt) and `sweep` (dr.txt) run in the output directory.
pub fn cmd_report(opts: &RunOptions) -> Result<String, CliError> {
    let (_sim, cfg, seed) = load(opts)?;

    let metrics_path = opts.out_dir.join("metrics.txt");
    let dr_path = opts.out_dir.join("dr.txt");
    let missing: Vec<String> = [&metrics_path, &dr_path]
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs(missing));
    }

    let metrics = io::read_metrics_txt(&metrics_path)?;
    let dr_rows = io::read_metrics_txt(&dr_path)?;
    let dr_db = metrics_value(&dr_rows, "dr_db")
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::MissingInputs(vec![format!("{}: dr_db", dr_path.display())]))?;
    let mds_a = metrics_value(&metrics, "mds_amp_a")
        .ok_or_else(|| CliError::MissingInputs(vec![format!("{}: mds_amp_a", metrics_path.display())]))?;
    let band_hz = metrics_value(&metrics, "band_hz").unwrap_or(cfg.output_rate_hz() / 2.0);

    // max input at the top of the DAC range, min input from the measured floor
    let max_input = 100e-6 / cfg.alpha;
    let dr_cross = analysis::cross_scale_dr(max_input, mds_a)?;
    let fom_fixed = analysis::fom_schreier(dr_db, band_hz, cfg.power_watt)?;
    let fom_cross = analysis::fom_schreier(dr_cross, band_hz, cfg.power_watt)?;

    let r = &REFERENCE_4KHZ;
    let rows: Vec<(&str, f64, f64)> = vec![
        ("power_per_channel_uW", cfg.power_watt * 1e6, r.power_uw),
        ("supply_V", cfg.supply_volt, r.supply_v),
        ("active_area_mm2", r.area_mm2, r.area_mm2),
        ("max_input_A", max_input, r.max_input_a),
        ("min_input_A", mds_a, r.min_input_a),
        ("dr_fixed_dB", dr_db, r.dr_fixed_db),
        ("dr_cross_scale_dB", dr_cross, r.dr_cross_db),
        ("fom_fixed_dB", fom_fixed, r.fom_fixed_db),
        ("fom_cross_scale_dB", fom_cross, r.fom_cross_db),
    ];

    let mut table = String::new();
    table.push_str(&format!(
        "performance summary @ {band_hz} Hz band (computed vs reference)\n"
    ));
    table.push_str(&format!(
        "{:<22} {:>14} {:>14} {:>10}\n",
        "metric", "computed", "reference", "delta"
    ));
    for (name, computed, reference) in &rows {
        let delta = computed - reference;
        let delta_str = if delta >= 0.0 {
            format!("+{}", format_sig(delta))
        } else {
            format!("-{}", format_sig(-delta))
        };
        table.push_str(&format!(
            "{:<22} {:>14} {:>14} {:>12}\n",
            name,
            format_sig(*computed),
            format_sig(*reference),
            delta_str
        ));
    }

    std::fs::write(opts.out_dir.join("report.txt"), &table)
        .map_err(|e| CliError::Other(anyhow::anyhow!("report.txt: {e}")))?;
    RunManifest::new(opts, "report".to_string(), seed).write(&opts.out_dir)?;
    Ok(table)
}

/// Compact numeric formatting: scientific for small magnitudes, fixed for
/// table-scale numbers.
fn format_sig(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".to_string()
    } else if a < 1e-3 || a >= 1e6 {
        format!("{v:.4e}")
    } else if a < 1.0 {
        format!("{v:.4}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_sig_ranges() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(125.0), "125.00");
        assert_eq!(format_sig(1e-6), "1.0000e-6");
        assert_eq!(format_sig(0.042), "0.0420");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Instability("x".into()).exit_code(), 3);
        assert_eq!(CliError::MissingInputs(vec![]).exit_code(), 4);
        assert_eq!(CliError::Other(anyhow::anyhow!("x")).exit_code(), 1);
    }
}
