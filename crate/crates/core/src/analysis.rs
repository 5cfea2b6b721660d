//! Spectral estimation, SNDR/SNR/SFDR extraction, dynamic-range fitting,
//! CIC decimation and figure-of-merit arithmetic.
//!
//! Spectra use an energy-normalized one-sided periodogram: the sum of bin
//! powers equals the time-domain mean power, and a coherent full-scale tone
//! reads 0 dBFS when its signal cluster is summed (exactly one bin under the
//! rectangular window, the main lobe +-3 bins under Hann). Bin values are
//! stored in dBFS relative to the full-scale tone power `FS^2/2` with
//! signals expressed in full-scale units.
//!
//! The Hann window is the default for every noise measurement, including
//! coherent tones: the modulator's leaky integrators put a slowly wandering
//! sub-bin component into the bitstream, and a rectangular window smears
//! that wander across the whole band (tens of dB of apparent floor shift),
//! while the Hann window confines it to the DC cluster.

use crate::model::{Bitstream, DecimatedRecord};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Analysis window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Hann window; signal aggregated over +-3 bins, DC cluster = 4 bins.
    Hann,
    /// Rectangular window; single-bin signal, DC cluster = 1 bin. Only
    /// appropriate for exactly coherent, drift-free records.
    Rect,
}

impl Window {
    /// Half-width of a signal/spur cluster in bins.
    pub fn cluster_half_width(self) -> usize {
        match self {
            Window::Hann => 3,
            Window::Rect => 0,
        }
    }

    /// Number of leading bins (from DC) excluded from noise sums.
    pub fn dc_exclusion_bins(self) -> usize {
        match self {
            Window::Hann => 4,
            Window::Rect => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rect => "rect",
        }
    }
}

impl std::str::FromStr for Window {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hann" => Ok(Window::Hann),
            "rect" => Ok(Window::Rect),
            other => Err(format!("unknown window `{other}` (expected hann|rect)")),
        }
    }
}

/// One-sided power spectrum with extraction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Bin center frequencies (Hz), DC through Nyquist.
    pub freqs_hz: Vec<f64>,
    /// Per-bin power in dBFS (re full-scale tone power); `-inf` for empty bins.
    pub psd: Vec<f64>,
    /// Transform length.
    pub n_fft: usize,
    /// Window used.
    pub window: Window,
    /// Width of the analyzable band (Nyquist), Hz.
    pub band_hz: f64,
}

/// SNDR/SNR/SFDR extracted from a band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandMetrics {
    pub sndr_db: f64,
    pub snr_db: f64,
    pub sfdr_db: f64,
    /// Linear signal power (full-scale units squared).
    pub signal_power: f64,
    /// Linear noise+distortion power in the band.
    pub noise_power: f64,
    /// RMS of in-band noise+distortion in full-scale units.
    pub noise_rms_fs: f64,
    pub band_hz: f64,
    pub f_sig_hz: f64,
}

/// Aggregate report row: band metrics plus dynamic range and the
/// Schreier figure of merit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub sndr_db: f64,
    pub snr_db: f64,
    pub sfdr_db: f64,
    pub dr_db: f64,
    pub fom_db: f64,
    pub band_hz: f64,
    pub f_conv_hz: f64,
    pub power_watt: f64,
}

impl MetricsReport {
    /// Invariants: SNDR cannot exceed SNR (within rounding), all finite.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let vals = [
            self.sndr_db,
            self.snr_db,
            self.sfdr_db,
            self.dr_db,
            self.fom_db,
            self.band_hz,
            self.f_conv_hz,
            self.power_watt,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite("MetricsReport"));
        }
        if self.sndr_db > self.snr_db + 0.01 {
            return Err(AnalysisError::Inconsistent("sndr_db > snr_db"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("n_fft {n_fft} exceeds signal length {len}")]
    FftTooLong { n_fft: usize, len: usize },
    #[error("n_fft {0} must be a power of two >= 8")]
    FftNotPowerOfTwo(usize),
    #[error("no tone found near {f_sig_hz} Hz (peak below noise floor)")]
    NoTone { f_sig_hz: f64 },
    #[error("band {band_hz} Hz outside (f_sig, Nyquist {nyquist_hz}]")]
    BadBand { band_hz: f64, nyquist_hz: f64 },
    #[error("decimation ratio {r} does not divide bitstream length {len}")]
    RatioMismatch { r: u32, len: usize },
    #[error("{0} must be >= 1")]
    BadOrder(&'static str),
    #[error("no monotone linear region found in sweep")]
    NoLinearRegion,
    #[error("need at least {need} sweep points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("inconsistent metrics: {0}")]
    Inconsistent(&'static str),
}

const DBFS_FLOOR: f64 = f64::NEG_INFINITY;

/// Full-scale tone power (signal in full-scale units): `1^2 / 2`.
const FS_TONE_POWER: f64 = 0.5;

fn to_dbfs(p: f64) -> f64 {
    if p > 0.0 {
        10.0 * (p / FS_TONE_POWER).log10()
    } else {
        DBFS_FLOOR
    }
}

fn from_dbfs(db: f64) -> f64 {
    if db == DBFS_FLOOR {
        0.0
    } else {
        FS_TONE_POWER * 10f64.powf(db / 10.0)
    }
}

impl SpectrumReport {
    /// Bin spacing (Hz).
    pub fn bin_hz(&self) -> f64 {
        self.freqs_hz[1] - self.freqs_hz[0]
    }

    /// Linear power of bin `k` (full-scale units squared).
    pub fn bin_power(&self, k: usize) -> f64 {
        from_dbfs(self.psd[k])
    }

    /// Index of the bin whose center is nearest `f_hz`.
    pub fn bin_of(&self, f_hz: f64) -> usize {
        let k = (f_hz / self.bin_hz()).round() as usize;
        k.min(self.psd.len() - 1)
    }

    /// Total linear power in `f_lo ..= f_hi` (inclusive of DC when f_lo == 0).
    pub fn band_power(&self, f_lo_hz: f64, f_hi_hz: f64) -> f64 {
        self.freqs_hz
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= f_lo_hz && **f <= f_hi_hz)
            .map(|(_, db)| from_dbfs(*db))
            .sum()
    }

    /// Sum of linear powers over every bin (equals time-domain mean power).
    pub fn total_power(&self) -> f64 {
        self.psd.iter().map(|db| from_dbfs(*db)).sum()
    }
}

/// Windowed one-sided periodogram of the trailing `n_fft` samples.
///
/// The signal is expected in full-scale units (a +-1 bitstream or a
/// decimated record). Energy normalization: summed bin powers equal the
/// time-domain mean power; a coherent 0 dBFS tone's signal cluster sums to
/// 0 dBFS.
pub fn psd_estimate(
    signal: &[f64],
    fs_hz: f64,
    window: Window,
    n_fft: usize,
) -> Result<SpectrumReport, AnalysisError> {
    if n_fft > signal.len() {
        return Err(AnalysisError::FftTooLong {
            n_fft,
            len: signal.len(),
        });
    }
    if n_fft < 8 || !n_fft.is_power_of_two() {
        return Err(AnalysisError::FftNotPowerOfTwo(n_fft));
    }
    let tail = &signal[signal.len() - n_fft..];

    let (w, w_sq_sum): (Vec<f64>, f64) = match window {
        Window::Rect => (vec![1.0; n_fft], n_fft as f64),
        Window::Hann => {
            let w: Vec<f64> = (0..n_fft)
                .map(|i| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n_fft as f64).cos()
                })
                .collect();
            let s = w.iter().map(|x| x * x).sum();
            (w, s)
        }
    };

    let mut buf: Vec<Complex<f64>> = tail
        .iter()
        .zip(&w)
        .map(|(x, wi)| Complex::new(x * wi, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);

    let half = n_fft / 2;
    let norm = 1.0 / (n_fft as f64 * w_sq_sum);
    let bin = fs_hz / n_fft as f64;
    let mut freqs = Vec::with_capacity(half + 1);
    let mut psd = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let one_sided = if k == 0 || k == half { 1.0 } else { 2.0 };
        let p = one_sided * buf[k].norm_sqr() * norm;
        freqs.push(k as f64 * bin);
        psd.push(to_dbfs(p));
    }
    Ok(SpectrumReport {
        freqs_hz: freqs,
        psd,
        n_fft,
        window,
        band_hz: fs_hz / 2.0,
    })
}

/// Fold a frequency into the first Nyquist zone.
fn fold(f_hz: f64, fs_hz: f64) -> f64 {
    let f = f_hz.rem_euclid(fs_hz);
    if f > fs_hz / 2.0 {
        fs_hz - f
    } else {
        f
    }
}

/// Extract SNDR, SNR and SFDR for a tone near `f_sig_hz` within `0..band_hz`.
///
/// Signal power is the tone bin plus its window-dependent leakage cluster
/// (single bin for Rect, +-3 bins for Hann). SNDR divides signal by all
/// remaining in-band power; SNR additionally excludes the clusters of the
/// first five harmonics (aliased into the first Nyquist zone); SFDR compares
/// the signal to the largest remaining in-band spur cluster. The DC cluster
/// is excluded from every noise sum.
pub fn sndr_in_band(
    spec: &SpectrumReport,
    f_sig_hz: f64,
    band_hz: f64,
) -> Result<BandMetrics, AnalysisError> {
    let nyq = *spec.freqs_hz.last().unwrap();
    if !(band_hz > f_sig_hz && band_hz <= nyq * (1.0 + 1e-12)) {
        return Err(AnalysisError::BadBand {
            band_hz,
            nyquist_hz: nyq,
        });
    }
    let half = spec.window.cluster_half_width();
    let dc_excl = spec.window.dc_exclusion_bins();
    let n_bins = spec.psd.len();
    let band_end = {
        let mut k = spec.bin_of(band_hz);
        if spec.freqs_hz[k] > band_hz + 1e-9 {
            k -= 1;
        }
        k.min(n_bins - 1)
    };

    // locate the tone: strongest bin within +-(half+2) of the nominal bin
    let k_nom = spec.bin_of(f_sig_hz);
    let search_lo = k_nom.saturating_sub(half + 2).max(dc_excl);
    let search_hi = (k_nom + half + 2).min(band_end);
    if search_lo > search_hi {
        return Err(AnalysisError::NoTone { f_sig_hz });
    }
    let k_sig = (search_lo..=search_hi)
        .max_by(|&a, &b| spec.bin_power(a).total_cmp(&spec.bin_power(b)))
        .unwrap();

    let cluster = |center: usize| -> (usize, usize) {
        (center.saturating_sub(half), (center + half).min(n_bins - 1))
    };
    let (sig_lo, sig_hi) = cluster(k_sig);
    let signal_power: f64 = (sig_lo..=sig_hi).map(|k| spec.bin_power(k)).sum();

    // harmonic clusters (2nd..6th), folded into the first Nyquist zone
    let fs = nyq * 2.0;
    let f0 = spec.freqs_hz[k_sig];
    let harm_clusters: Vec<(usize, usize)> = (2..=6)
        .map(|h| fold(h as f64 * f0, fs))
        .filter(|&fh| fh <= band_hz)
        .map(|fh| cluster(spec.bin_of(fh)))
        .collect();

    let in_sig = |k: usize| k >= sig_lo && k <= sig_hi;
    let in_harm = |k: usize| harm_clusters.iter().any(|&(lo, hi)| k >= lo && k <= hi);

    let mut noise_dist = 0.0; // everything but signal & DC
    let mut noise_only = 0.0; // also excluding harmonics
    let mut n_noise_bins = 0usize;
    for k in dc_excl..=band_end {
        if in_sig(k) {
            continue;
        }
        let p = spec.bin_power(k);
        noise_dist += p;
        n_noise_bins += 1;
        if !in_harm(k) {
            noise_only += p;
        }
    }
    if n_noise_bins == 0 {
        return Err(AnalysisError::BadBand {
            band_hz,
            nyquist_hz: nyq,
        });
    }

    // tone detection: the signal cluster must stand clear of the average floor
    let avg_bin = noise_dist / n_noise_bins as f64;
    let cluster_len = (sig_hi - sig_lo + 1) as f64;
    if !(signal_power > 8.0 * avg_bin * cluster_len) {
        return Err(AnalysisError::NoTone { f_sig_hz });
    }

    // largest spur cluster outside the signal
    let mut spur_power = 0.0;
    for k in dc_excl..=band_end {
        if in_sig(k) {
            continue;
        }
        let (lo, hi) = cluster(k);
        let p: f64 = (lo..=hi)
            .filter(|&j| !in_sig(j) && j >= dc_excl && j <= band_end)
            .map(|j| spec.bin_power(j))
            .sum();
        if p > spur_power {
            spur_power = p;
        }
    }

    let guard = |x: f64| x.max(f64::MIN_POSITIVE);
    let sndr_db = 10.0 * (signal_power / guard(noise_dist)).log10();
    let snr_db = 10.0 * (signal_power / guard(noise_only)).log10();
    let sfdr_db = 10.0 * (signal_power / guard(spur_power)).log10();
    Ok(BandMetrics {
        sndr_db,
        snr_db,
        sfdr_db,
        signal_power,
        noise_power: noise_dist,
        noise_rms_fs: noise_dist.sqrt(),
        band_hz,
        f_sig_hz: f0,
    })
}

/// Cascaded integrator-comb decimator over a +-1 bitstream.
///
/// Integrators and combs run in wrapping two's-complement `i64` arithmetic,
/// which keeps the filter exact for arbitrarily long runs; the output is
/// normalized by `r^order` for unity DC gain. The first `order` output
/// samples are warm-up.
pub fn decimate_cic(bits: &Bitstream, r: u32, order: u32) -> Result<DecimatedRecord, AnalysisError> {
    if order < 1 {
        return Err(AnalysisError::BadOrder("order"));
    }
    if r < 1 {
        return Err(AnalysisError::BadOrder("r"));
    }
    if bits.bits.is_empty() || bits.bits.len() % r as usize != 0 {
        return Err(AnalysisError::RatioMismatch {
            r,
            len: bits.bits.len(),
        });
    }
    let order = order as usize;
    let gain = (r as f64).powi(order as i32);
    let mut integ = vec![0i64; order];
    let mut comb = vec![0i64; order];
    let mut out = Vec::with_capacity(bits.bits.len() / r as usize);
    let mut pos = 0u32;
    for &b in &bits.bits {
        let mut x = i64::from(b);
        for s in integ.iter_mut() {
            *s = s.wrapping_add(x);
            x = *s;
        }
        pos += 1;
        if pos == r {
            pos = 0;
            let mut y = integ[order - 1];
            for c in comb.iter_mut() {
                let d = y.wrapping_sub(*c);
                *c = y;
                y = d;
            }
            out.push(y as f64 / gain);
        }
    }
    Ok(DecimatedRecord {
        samples: out,
        rate_hz: bits.fs_hz / r as f64,
    })
}

/// Closed-form CIC magnitude response `|sin(pi f r / fs) / (r sin(pi f / fs))|^order`.
pub fn cic_response(f_hz: f64, fs_hz: f64, r: u32, order: u32) -> f64 {
    if f_hz == 0.0 {
        return 1.0;
    }
    let x = std::f64::consts::PI * f_hz / fs_hz;
    let num = (x * r as f64).sin();
    let den = r as f64 * x.sin();
    (num / den).abs().powi(order as i32)
}

/// Minimum sweep points required for a dynamic-range fit.
const DR_MIN_POINTS: usize = 4;
/// Points within this many dB of the median `sndr - amp` offset are treated
/// as the linear region.
const DR_LINEAR_TOL_DB: f64 = 1.5;
/// Measured SNDR below this is too close to the floor to use in the fit.
const DR_SNDR_FLOOR_DB: f64 = 5.0;
/// The linear region must span at least this many dB of input amplitude.
const DR_MIN_SPAN_DB: f64 = 15.0;

/// Fit dynamic range from an `(amp_dbfs, sndr_db)` sweep.
///
/// A slope-1 line `sndr = amp + DR` is fitted by averaging `sndr - amp`
/// over the linear region: finite points with SNDR at least 5 dB above the
/// floor whose offset sits within 1.5 dB of the sweep median (which drops
/// the saturation knee near full scale). DR is the negated dBFS intercept
/// at SNDR = 0.
pub fn dynamic_range(sweep: &[(f64, f64)]) -> Result<f64, AnalysisError> {
    if sweep.len() < DR_MIN_POINTS {
        return Err(AnalysisError::TooFewPoints {
            need: DR_MIN_POINTS,
            got: sweep.len(),
        });
    }
    let mut offsets: Vec<(f64, f64)> = sweep
        .iter()
        .filter(|(a, s)| a.is_finite() && s.is_finite() && *s >= DR_SNDR_FLOOR_DB)
        .map(|&(a, s)| (a, s - a))
        .collect();
    if offsets.len() < DR_MIN_POINTS {
        return Err(AnalysisError::NoLinearRegion);
    }
    offsets.sort_by(|x, y| x.1.total_cmp(&y.1));
    let median = offsets[offsets.len() / 2].1;
    let kept: Vec<(f64, f64)> = offsets
        .iter()
        .copied()
        .filter(|(_, c)| (c - median).abs() <= DR_LINEAR_TOL_DB)
        .collect();
    if kept.len() < DR_MIN_POINTS {
        return Err(AnalysisError::NoLinearRegion);
    }
    let amp_min = kept.iter().map(|(a, _)| *a).fold(f64::INFINITY, f64::min);
    let amp_max = kept.iter().map(|(a, _)| *a).fold(f64::NEG_INFINITY, f64::max);
    if amp_max - amp_min < DR_MIN_SPAN_DB {
        return Err(AnalysisError::NoLinearRegion);
    }
    Ok(kept.iter().map(|(_, c)| c).sum::<f64>() / kept.len() as f64)
}

/// Cross-scale dynamic range `20*log10(i_max / i_min)` across reference
/// ranges.
pub fn cross_scale_dr(i_max_amp: f64, i_min_amp: f64) -> Result<f64, AnalysisError> {
    if !(i_max_amp > 0.0 && i_max_amp.is_finite()) {
        return Err(AnalysisError::NonPositive("i_max_amp"));
    }
    if !(i_min_amp > 0.0 && i_min_amp.is_finite()) {
        return Err(AnalysisError::NonPositive("i_min_amp"));
    }
    Ok(20.0 * (i_max_amp / i_min_amp).log10())
}

/// Schreier figure of merit: `DR + 10*log10((F_conv/2) / Power)` in dB.
pub fn fom_schreier(dr_db: f64, f_conv_hz: f64, power_watt: f64) -> Result<f64, AnalysisError> {
    if !dr_db.is_finite() {
        return Err(AnalysisError::NonFinite("dr_db"));
    }
    if !(f_conv_hz > 0.0 && f_conv_hz.is_finite()) {
        return Err(AnalysisError::NonPositive("f_conv_hz"));
    }
    if !(power_watt > 0.0 && power_watt.is_finite()) {
        return Err(AnalysisError::NonPositive("power_watt"));
    }
    Ok(dr_db + 10.0 * (f_conv_hz / 2.0 / power_watt).log10())
}

/// Minimum detectable signal: the tone amplitude whose power equals the
/// in-band noise power (SNR = 0 dB), i.e. `sqrt(2) * noise_rms`.
/// Precondition: `inband_noise_rms_amp >= 0`.
pub fn min_detectable_signal(inband_noise_rms_amp: f64) -> f64 {
    debug_assert!(inband_noise_rms_amp >= 0.0);
    std::f64::consts::SQRT_2 * inband_noise_rms_amp
}

/// Least-squares slope of the PSD in dB per decade between `f_lo` and
/// `f_hi`, using log-spaced band averages (12 bands).
pub fn fit_psd_slope(
    spec: &SpectrumReport,
    f_lo_hz: f64,
    f_hi_hz: f64,
) -> Result<f64, AnalysisError> {
    if !(f_lo_hz > 0.0 && f_hi_hz > f_lo_hz) {
        return Err(AnalysisError::NonPositive("slope fit band"));
    }
    const BANDS: usize = 12;
    let lr = (f_hi_hz / f_lo_hz).log10();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..BANDS {
        let lo = f_lo_hz * 10f64.powf(lr * i as f64 / BANDS as f64);
        let hi = f_lo_hz * 10f64.powf(lr * (i + 1) as f64 / BANDS as f64);
        let bins: Vec<f64> = spec
            .freqs_hz
            .iter()
            .zip(&spec.psd)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, db)| from_dbfs(*db))
            .collect();
        if bins.len() >= 2 {
            let mean = bins.iter().sum::<f64>() / bins.len() as f64;
            if mean > 0.0 {
                xs.push((lo * hi).sqrt().log10());
                ys.push(10.0 * mean.log10());
            }
        }
    }
    if xs.len() < 3 {
        return Err(AnalysisError::NoLinearRegion);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
