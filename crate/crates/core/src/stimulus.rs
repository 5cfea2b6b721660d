//! Input current waveforms: tones, DC levels, steps, and the nanopore
//! front-end filter.

use crate::model::NanoporeModel;

/// A sampled input current record.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Input current samples (A).
    pub samples: Vec<f64>,
    /// Sample rate (Hz).
    pub fs_hz: f64,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// RMS of the samples (A).
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let p: f64 = self.samples.iter().map(|x| x * x).sum();
        (p / self.samples.len() as f64).sqrt()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StimulusError {
    #[error("signal frequency {f_sig_hz} Hz aliases at fs {fs_hz} Hz (requires f < fs/2)")]
    Aliasing { f_sig_hz: f64, fs_hz: f64 },
    #[error("waveform length must be > 0")]
    EmptyWaveform,
    #[error("{0} must be finite and positive")]
    BadParameter(&'static str),
}

/// Snap a tone frequency to the nearest odd coherent bin `f = k*fs/n`.
///
/// Odd `k` guarantees the tone is not a subharmonic of the record length,
/// which keeps spectral leakage at exactly zero for rectangular analysis of
/// `n` samples.
pub fn snap_coherent(f_hz: f64, fs_hz: f64, n: usize) -> f64 {
    let bin = fs_hz / n as f64;
    let x = f_hz / bin;
    // nearest odd integer to x
    let lower = 2.0 * ((x - 1.0) / 2.0).floor() + 1.0;
    let k = if x - lower <= lower + 2.0 - x {
        lower
    } else {
        lower + 2.0
    };
    k.max(1.0) * bin
}

/// Generate a sinusoidal test current.
///
/// Sample formula: `x[i] = full_scale_amp * 10^(amp_dbfs/20) *
/// sin(2*pi*f_sig_hz*i/fs_hz + phase_rad)`. An `amp_dbfs` of negative
/// infinity is the all-zero sentinel.
pub fn gen_tone(
    amp_dbfs: f64,
    f_sig_hz: f64,
    fs_hz: f64,
    n: usize,
    full_scale_amp: f64,
    phase_rad: f64,
) -> Result<Waveform, StimulusError> {
    if n == 0 {
        return Err(StimulusError::EmptyWaveform);
    }
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(StimulusError::BadParameter("fs_hz"));
    }
    if !(f_sig_hz.is_finite() && f_sig_hz >= 0.0) || f_sig_hz >= fs_hz / 2.0 {
        return Err(StimulusError::Aliasing { f_sig_hz, fs_hz });
    }
    if !full_scale_amp.is_finite() {
        return Err(StimulusError::BadParameter("full_scale_amp"));
    }
    let peak = if amp_dbfs == f64::NEG_INFINITY {
        0.0
    } else {
        full_scale_amp * 10f64.powf(amp_dbfs / 20.0)
    };
    let w = 2.0 * std::f64::consts::PI * f_sig_hz / fs_hz;
    let samples = (0..n)
        .map(|i| peak * (w * i as f64 + phase_rad).sin())
        .collect();
    Ok(Waveform { samples, fs_hz })
}

/// Generate a constant (DC) current.
pub fn gen_dc(level_amp: f64, fs_hz: f64, n: usize) -> Result<Waveform, StimulusError> {
    if n == 0 {
        return Err(StimulusError::EmptyWaveform);
    }
    if !level_amp.is_finite() {
        return Err(StimulusError::BadParameter("level_amp"));
    }
    Ok(Waveform {
        samples: vec![level_amp; n],
        fs_hz,
    })
}

/// Apply the nanopore front-end as a unity-DC-gain single-pole low-pass with
/// time constant `tau = r_pore * c_mem`, discretized by the bilinear
/// transform:
///
/// `y[i] = (x[i] + x[i-1] + (c - 1) * y[i-1]) / (1 + c)` with `c = 2*fs*tau`.
///
/// A `tau` below `0.1 / fs` is too fast to discretize meaningfully; the
/// filter still runs (converging to a pass-through) but logs a warning.
pub fn nanopore_filter(w: &Waveform, m: &NanoporeModel) -> Waveform {
    let tau = m.tau_s();
    if tau * w.fs_hz < 0.1 {
        log::warn!(
            "nanopore tau {:.3e}s is below 0.1/fs at fs {:.3e}Hz; pole is effectively above Nyquist",
            tau,
            w.fs_hz
        );
    }
    let c = 2.0 * w.fs_hz * tau;
    let b = 1.0 / (1.0 + c);
    let a = (c - 1.0) / (1.0 + c);
    let mut samples = Vec::with_capacity(w.len());
    let mut x_prev = 0.0;
    let mut y_prev = 0.0;
    for &x in &w.samples {
        let y = b * (x + x_prev) + a * y_prev;
        samples.push(y);
        x_prev = x;
        y_prev = y;
    }
    Waveform {
        samples,
        fs_hz: w.fs_hz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn tone_amplitude_examples() {
        // -5 dBFS of 1 uA full scale -> peak 0.5623 uA
        let w = gen_tone(-5.0, 1.9e3, 1.024e6, 1 << 16, 1e-6, 0.0).unwrap();
        let peak = w.samples.iter().cloned().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 0.5623e-6).abs() < 1e-9, "peak = {peak}");

        // 0 dBFS -> peak exactly FS (sample grid permitting)
        let fs = 1.0e6;
        let n = 1 << 12;
        let f = snap_coherent(250e3, fs, n);
        let w = gen_tone(0.0, f, fs, n, 2e-6, PI / 2.0).unwrap();
        assert!((w.samples[0] - 2e-6).abs() < 1e-18);

        // -inf sentinel -> all zero
        let w = gen_tone(f64::NEG_INFINITY, 1e3, 1e6, 64, 1e-6, 0.0).unwrap();
        assert!(w.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tone_aliasing_rejected() {
        assert!(matches!(
            gen_tone(-5.0, 600e3, 1.024e6, 16, 1e-6, 0.0),
            Err(StimulusError::Aliasing { .. })
        ));
    }

    #[test]
    fn tone_rms_matches_peak_over_sqrt2() {
        // n covering >= 100 full cycles -> rms = peak/sqrt(2) within 0.1%
        let fs = 1.024e6;
        let n = 1 << 16;
        let f = snap_coherent(2.5e3, fs, n); // ~160 cycles
        let w = gen_tone(0.0, f, fs, n, 1e-6, 0.0).unwrap();
        let expect = 1e-6 / 2f64.sqrt();
        assert!(
            (w.rms() - expect).abs() / expect < 1e-3,
            "rms {} vs {}",
            w.rms(),
            expect
        );
    }

    #[test]
    fn dc_examples() {
        let w = gen_dc(0.0, 1e6, 8).unwrap();
        assert_eq!(w.samples, vec![0.0; 8]);
        let w = gen_dc(600e-15, 1e6, 5).unwrap();
        assert!(w.samples.iter().all(|&x| x == 6e-13));
        let w = gen_dc(-1e-9, 1e6, 4).unwrap();
        assert_eq!(w.samples, vec![-1e-9; 4]);
        assert!(matches!(gen_dc(0.0, 1e6, 0), Err(StimulusError::EmptyWaveform)));
    }

    #[test]
    fn snap_picks_odd_bins() {
        let f = snap_coherent(1900.0, 1.024e6, 1 << 16);
        let k = f / (1.024e6 / 65536.0);
        assert!((k - 121.0).abs() < 1e-9);
        let f = snap_coherent(0.0, 1.024e6, 1 << 16);
        assert!(f > 0.0);
    }

    #[test]
    fn nanopore_dc_gain_is_unity() {
        // default tau = 500 us -> 512 samples at 1.024 MHz; run 64 tau
        let m = NanoporeModel::default();
        let w = gen_dc(1e-9, 1.024e6, 1 << 15).unwrap();
        let y = nanopore_filter(&w, &m);
        let tail = y.samples[y.len() - 1];
        assert!((tail - 1e-9).abs() / 1e-9 < 1e-9, "tail {tail}");
    }

    #[test]
    fn nanopore_step_response_63_percent_at_tau() {
        // analytic first-order step: y(tau) = 1 - e^-1 = 63.21% of final
        let fs = 1.024e6;
        let m = NanoporeModel {
            r_pore_ohm: 1e6,
            c_mem_farad: 1e-9, // tau = 1 ms -> fs*tau = 1024 >= 100
            v_bias_volt: 0.0,
        };
        let tau = m.tau_s();
        let n = (8.0 * tau * fs) as usize;
        let w = gen_dc(1e-9, fs, n).unwrap();
        let y = nanopore_filter(&w, &m);
        let at_tau = y.samples[(tau * fs) as usize];
        let expect = 1e-9 * (1.0 - (-1.0f64).exp());
        assert!(
            (at_tau - expect).abs() / expect < 0.01,
            "y(tau) = {at_tau}, expect {expect}"
        );
    }

    #[test]
    fn nanopore_tone_attenuation_at_10x_corner() {
        // |H| at f = 10 * f_c is 1/sqrt(101) = -20.04 dB, tolerance 0.3 dB
        let fs = 1.024e6;
        let tau = 200.0 / fs; // fs*tau = 200 >= 100
        let m = NanoporeModel {
            r_pore_ohm: 1e6,
            c_mem_farad: tau / 1e6,
            v_bias_volt: 0.0,
        };
        let f = 10.0 / (2.0 * PI * tau);
        let n = 1 << 16;
        let f = snap_coherent(f, fs, n);
        let w = gen_tone(0.0, f, fs, n, 1e-9, 0.0).unwrap();
        let y = nanopore_filter(&w, &m);
        // steady-state amplitude from the tail rms
        let tail = &y.samples[n / 2..];
        let rms = (tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64).sqrt();
        let gain_db = 20.0 * (rms * 2f64.sqrt() / 1e-9).log10();
        assert!(
            (gain_db + 20.04).abs() < 0.3,
            "measured {gain_db} dB, expect -20.04 dB"
        );
    }

    #[test]
    fn nanopore_filter_is_linear() {
        let m = NanoporeModel::default();
        let fs = 1.024e6;
        let x1 = gen_tone(-3.0, 1.7e3, fs, 2048, 1e-9, 0.3).unwrap();
        let x2 = gen_tone(-9.0, 4.1e3, fs, 2048, 1e-9, 1.1).unwrap();
        let (a, b) = (2.5, -0.7);
        let combo = Waveform {
            samples: x1
                .samples
                .iter()
                .zip(&x2.samples)
                .map(|(u, v)| a * u + b * v)
                .collect(),
            fs_hz: fs,
        };
        let y_combo = nanopore_filter(&combo, &m);
        let y1 = nanopore_filter(&x1, &m);
        let y2 = nanopore_filter(&x2, &m);
        for i in 0..2048 {
            let want = a * y1.samples[i] + b * y2.samples[i];
            let got = y_combo.samples[i];
            let scale = want.abs().max(1e-12);
            assert!(
                (got - want).abs() / scale < 1e-12,
                "nonlinear at {i}: {got} vs {want}"
            );
        }
    }
}
