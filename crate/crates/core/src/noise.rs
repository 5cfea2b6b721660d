//! Seeded stochastic source models.
//!
//! The central property of the slope-scaled feedback is restated here at PSD
//! level: the DAC runs at a reference scaled up by `alpha`, its shot noise
//! power grows linearly with that current, and the capacitive scaling divides
//! the noise *power* by `alpha^2`, so the net input-referred DAC noise drops
//! by `alpha` compared with an unscaled DAC at the same full-scale:
//!
//! `input_referred_dac_noise_psd(alpha * i0, alpha) * alpha == dac_shot_noise_psd(i0)`
//!
//! All PSDs are one-sided (A²/Hz); a white PSD `S` sampled at `fs` yields
//! per-sample variance `S * fs / 2`. Every generator is deterministic per
//! seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Elementary charge (C), 2019 SI exact value.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;

/// Which physical source a PSD value describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    DacShot,
    AmpWhite,
    Flicker,
}

/// A one-sided noise power spectral density (A²/Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePsd {
    pub value: f64,
    pub kind: NoiseKind,
}

impl NoisePsd {
    /// Construct a custom PSD (e.g. to override the shot-noise law).
    pub fn new(kind: NoiseKind, value: f64) -> Result<Self, NoiseError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(NoiseError::NegativePsd(value));
        }
        Ok(Self { value, kind })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NoiseError {
    #[error("current must be >= 0, got {0}")]
    NegativeCurrent(f64),
    #[error("PSD must be >= 0 and finite, got {0}")]
    NegativePsd(f64),
    #[error("alpha must be > 0, got {0}")]
    BadAlpha(f64),
    #[error("flicker knee {knee_hz} Hz must lie below Nyquist {nyquist_hz} Hz")]
    KneeAboveNyquist { knee_hz: f64, nyquist_hz: f64 },
}

/// Shot noise PSD of the 1-b current DAC: `2 q I`, linear in the bias
/// current. The proportionality to bias current is the modeled law; the
/// `2q` constant is the standard shot value and can be overridden by
/// constructing a [`NoisePsd`] directly.
pub fn dac_shot_noise_psd(i_ref_amp: f64) -> Result<NoisePsd, NoiseError> {
    if !(i_ref_amp.is_finite() && i_ref_amp >= 0.0) {
        return Err(NoiseError::NegativeCurrent(i_ref_amp));
    }
    Ok(NoisePsd {
        value: 2.0 * ELEMENTARY_CHARGE * i_ref_amp,
        kind: NoiseKind::DacShot,
    })
}

/// Input-referred DAC noise after slope scaling: the shot PSD of the
/// (already up-scaled) reference divided by `alpha^2`.
pub fn input_referred_dac_noise_psd(i_ref_amp: f64, alpha: f64) -> Result<NoisePsd, NoiseError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(NoiseError::BadAlpha(alpha));
    }
    let shot = dac_shot_noise_psd(i_ref_amp)?;
    Ok(NoisePsd {
        value: shot.value / (alpha * alpha),
        kind: NoiseKind::DacShot,
    })
}

/// Derive the seed of a named noise stream from the master seed
/// (SplitMix64 over `master + stream`). Stream indices used by the
/// modulator: 0 = DAC shot, 1 = amplifier white, 2 = flicker.
pub fn derive_stream_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn gaussian_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Zero-mean Gaussian samples with variance `psd * fs / 2` (one-sided
/// convention). Deterministic per seed.
pub fn white_noise_samples(psd: NoisePsd, fs_hz: f64, n: usize, seed: u64) -> Vec<f64> {
    let sigma = (psd.value * fs_hz / 2.0).sqrt();
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = gaussian_rng(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma finite");
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Number of one-pole sections for the 1/f synthesis: one per decade
/// between `fs/1e5` and `fs/2`, inclusive of both ends.
fn flicker_section_count(fs_hz: f64) -> usize {
    let span = (fs_hz / 2.0) / (fs_hz * 1e-5);
    (span.log10().ceil() as usize) + 1
}

/// Magnitude-squared response of the unit-DC-gain one-pole filter
/// `y[n] = (1-a) x[n] + a y[n-1]` at frequency `f`.
fn one_pole_mag2(a: f64, f_hz: f64, fs_hz: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f_hz / fs_hz;
    let num = (1.0 - a) * (1.0 - a);
    let den = 1.0 + a * a - 2.0 * a * w.cos();
    num / den
}

/// Approximate 1/f noise by summing one-pole-filtered white sources with
/// poles spaced one per decade below Nyquist and section powers weighted
/// `1/f_pole`. The sum is normalized analytically so the synthesized PSD
/// equals `white_psd_at_knee` at `knee_hz`; below the knee the PSD rises at
/// ~-10 dB/decade toward DC.
pub fn flicker_noise_samples(
    white_psd_at_knee: f64,
    knee_hz: f64,
    fs_hz: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, NoiseError> {
    if !(white_psd_at_knee.is_finite() && white_psd_at_knee >= 0.0) {
        return Err(NoiseError::NegativePsd(white_psd_at_knee));
    }
    if knee_hz >= fs_hz / 2.0 {
        return Err(NoiseError::KneeAboveNyquist {
            knee_hz,
            nyquist_hz: fs_hz / 2.0,
        });
    }
    if white_psd_at_knee == 0.0 || knee_hz <= 0.0 {
        return Ok(vec![0.0; n]);
    }

    let k = flicker_section_count(fs_hz);
    let poles: Vec<f64> = (0..k).map(|j| (fs_hz / 2.0) / 10f64.powi(j as i32)).collect();
    let a: Vec<f64> = poles
        .iter()
        .map(|&fp| (-2.0 * std::f64::consts::PI * fp / fs_hz).exp())
        .collect();

    // Section input PSDs proportional to 1/f_pole; solve the common scale c
    // so that the summed output PSD at the knee equals white_psd_at_knee.
    let sum_at_knee: f64 = poles
        .iter()
        .zip(&a)
        .map(|(&fp, &aj)| (1.0 / fp) * one_pole_mag2(aj, knee_hz, fs_hz))
        .sum();
    let c = white_psd_at_knee / sum_at_knee;

    // Per-section white input std dev from its one-sided PSD c/f_pole.
    let sigmas: Vec<f64> = poles
        .iter()
        .map(|&fp| (c / fp * fs_hz / 2.0).sqrt())
        .collect();

    let mut rng = gaussian_rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut state = vec![0.0f64; k];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut acc = 0.0;
        for j in 0..k {
            let x = sigmas[j] * normal.sample(&mut rng);
            state[j] = a[j] * state[j] + (1.0 - a[j]) * x;
            acc += state[j];
        }
        out.push(acc);
    }
    Ok(out)
}

/// First-difference model of correlated double sampling:
/// `y[n] = x[n] - x[n-1]` with `y[0] = x[0]`. Cancels static offset,
/// suppresses low-frequency content and doubles broadband white power
/// (`|1 - z^-1|^2` averages to 2 over the band).
pub fn cds_filter(samples: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = 0.0;
    for &x in samples {
        out.push(x - prev);
        prev = x;
    }
    out
}
