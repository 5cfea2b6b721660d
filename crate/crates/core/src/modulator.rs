//! Discrete-time behavioral engine of the 2nd-order 1-bit loop with
//! slope-scaled feedback, CDS-enhanced leaky integrators, reset dead-time
//! and feedback into both stages.
//!
//! The continuous-time loop is simulated at one state update per clock:
//!
//! ```text
//! x1' = p*x1 + (1-rf)*a1*(u - v + fb_noise)
//! x2' = p*x2 + (1-rf)*a2*(x1' - v)
//! v'  = sign(x2')          (sign(0) = +1)
//! ```
//!
//! where `u` is the input current divided by the effective full-scale
//! `i_ref/alpha`, `v` is the previous quantizer decision, `p = 1 - 1/a_eff`
//! models finite amplifier gain and `rf` is the reset dead-time fraction.
//! With CDS enabled the effective gain is the squared DC gain.

use crate::model::{Bitstream, NoiseConfig, ValidatedConfig};
use crate::noise::{
    self, cds_filter, derive_stream_seed, flicker_noise_samples, input_referred_dac_noise_psd,
    white_noise_samples, NoisePsd,
};
use crate::stimulus::Waveform;

/// Noise stream indices hanging off the master seed, in documented split
/// order: 0 = DAC shot (feedback node), 1 = amplifier white (input node),
/// 2 = flicker (input node, CDS path).
pub const STREAM_DAC_SHOT: u64 = 0;
pub const STREAM_AMP_WHITE: u64 = 1;
pub const STREAM_FLICKER: u64 = 2;

/// Integrator states and the previous quantizer decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopState {
    /// First integrator state (normalized).
    pub x1: f64,
    /// Second integrator state (normalized).
    pub x2: f64,
    /// Previous quantizer decision (+1 or -1).
    pub last_bit: i8,
}

impl Default for LoopState {
    fn default() -> Self {
        // sign(0) = +1 applied to the zero initial state
        Self {
            x1: 0.0,
            x2: 0.0,
            last_bit: 1,
        }
    }
}

/// Behavioral 1-b feedback DAC: the integrator/differentiator pair collapses
/// to a current source of magnitude exactly `i_ref / alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackDac {
    pub i_ref_amp: f64,
    pub alpha: f64,
    /// Differential charge pump provides both polarities.
    pub polarity: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ModulatorError {
    #[error("loop unstable at sample {at}: |state| exceeded {limit}")]
    Unstable {
        at: usize,
        limit: f64,
        /// Bits produced before the overflow, preserved for diagnosis.
        partial: Bitstream,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("input rate {input_hz} Hz does not match configured fs {fs_hz} Hz")]
    RateMismatch { input_hz: f64, fs_hz: f64 },
    #[error("bit must be +1 or -1, got {0}")]
    BadBit(i8),
    #[error("amplifier gain must be >= 1, got {0}")]
    BadGain(f64),
}

/// Slope-scaled feedback current for one quantizer decision:
/// `bit * i_ref / alpha` (A).
pub fn slope_scaled_feedback(bit: i8, dac: &FeedbackDac) -> Result<f64, ModulatorError> {
    if bit != 1 && bit != -1 {
        return Err(ModulatorError::BadBit(bit));
    }
    Ok(f64::from(bit) * dac.i_ref_amp / dac.alpha)
}

/// Effective amplifier gain under correlated double sampling: CDS squares
/// the DC gain (a 40 dB stage behaves like 80 dB); with CDS disabled the
/// DC gain is returned unchanged.
pub fn cds_effective_gain(a_dc: f64, cds_enabled: bool) -> Result<f64, ModulatorError> {
    if !(a_dc.is_finite() && a_dc >= 1.0) {
        return Err(ModulatorError::BadGain(a_dc));
    }
    Ok(if cds_enabled { a_dc * a_dc } else { a_dc })
}

/// Per-sample state retention factor of a finite-gain integrator:
/// `p = 1 - 1/a_eff`. An infinite-gain amplifier gives the ideal `p = 1`.
pub fn integrator_leak_pole(a_eff: f64) -> f64 {
    if a_eff.is_infinite() {
        1.0
    } else {
        1.0 - 1.0 / a_eff
    }
}

fn loop_params(cfg: &ValidatedConfig) -> (f64, f64, f64) {
    let a_eff = cds_effective_gain(cfg.amp_dc_gain, cfg.cds_enabled)
        .expect("validated config has amp_dc_gain >= 1");
    let p = integrator_leak_pole(a_eff);
    let dead = 1.0 - cfg.reset_fraction;
    (p, dead * cfg.loop_coeffs[0], dead * cfg.loop_coeffs[1])
}

/// Advance the loop by one clock. `u` is the normalized input, `fb_noise`
/// the normalized additive feedback-node noise. Returns the new quantizer
/// decision; the state is updated in place.
pub fn step(
    state: &mut LoopState,
    u: f64,
    fb_noise: f64,
    cfg: &ValidatedConfig,
) -> Result<i8, ModulatorError> {
    let (p, a1, a2) = loop_params(cfg);
    step_inner(state, u, fb_noise, p, a1, a2, cfg.stability_limit)
}

#[inline]
fn step_inner(
    state: &mut LoopState,
    u: f64,
    fb_noise: f64,
    p: f64,
    a1: f64,
    a2: f64,
    limit: f64,
) -> Result<i8, ModulatorError> {
    let v = f64::from(state.last_bit);
    let x1 = p * state.x1 + a1 * (u - v + fb_noise);
    let x2 = p * state.x2 + a2 * (x1 - v);
    if !(x1.abs() <= limit && x2.abs() <= limit) {
        return Err(ModulatorError::Unstable {
            at: 0,
            limit,
            partial: Bitstream {
                bits: Vec::new(),
                fs_hz: 0.0,
                full_scale_amp: 0.0,
            },
        });
    }
    state.x1 = x1;
    state.x2 = x2;
    let bit = if x2 >= 0.0 { 1 } else { -1 };
    state.last_bit = bit;
    Ok(bit)
}

/// Run the modulator over a full input waveform.
///
/// Deterministic for a given `(input, cfg, noise, seed)`. Noise streams are
/// derived from the seed in the documented split order and injected at the
/// input node (amplifier white directly; offset and flicker through the CDS
/// first-difference when CDS is enabled) and at the feedback node (DAC
/// shot). On overflow the partial bitstream is preserved inside the error.
pub fn run(
    input: &Waveform,
    cfg: &ValidatedConfig,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Bitstream, ModulatorError> {
    let n = input.len();
    if n == 0 {
        return Err(ModulatorError::EmptyInput);
    }
    if input.fs_hz != cfg.fs_hz {
        return Err(ModulatorError::RateMismatch {
            input_hz: input.fs_hz,
            fs_hz: cfg.fs_hz,
        });
    }
    let full_scale = cfg.full_scale_amp();
    let (p, a1, a2) = loop_params(cfg);

    // Feedback-node stream: input-referred DAC shot noise (A).
    let fb = if noise.dac_shot_enabled {
        let psd = input_referred_dac_noise_psd(cfg.i_ref_amp, cfg.alpha)
            .expect("validated config has alpha > 0");
        Some(white_noise_samples(
            psd,
            cfg.fs_hz,
            n,
            derive_stream_seed(seed, STREAM_DAC_SHOT),
        ))
    } else {
        None
    };

    // Input-node broadband stream: residual amplifier white noise (A).
    let amp = if noise.amp_white_psd > 0.0 {
        let psd = NoisePsd::new(noise::NoiseKind::AmpWhite, noise.amp_white_psd)
            .expect("validated noise config");
        Some(white_noise_samples(
            psd,
            cfg.fs_hz,
            n,
            derive_stream_seed(seed, STREAM_AMP_WHITE),
        ))
    } else {
        None
    };

    // Slow path: offset plus flicker, first-differenced by CDS when enabled.
    let slow = {
        let mut slow = if noise.flicker_enabled && noise.flicker_knee_hz > 0.0 {
            flicker_noise_samples(
                noise.amp_white_psd,
                noise.flicker_knee_hz,
                cfg.fs_hz,
                n,
                derive_stream_seed(seed, STREAM_FLICKER),
            )
            .expect("knee below Nyquist checked by NoiseConfig::validate")
        } else if noise.amp_offset_amp != 0.0 {
            vec![0.0; n]
        } else {
            Vec::new()
        };
        if !slow.is_empty() && noise.amp_offset_amp != 0.0 {
            for s in &mut slow {
                *s += noise.amp_offset_amp;
            }
        }
        if !slow.is_empty() && cfg.cds_enabled {
            slow = cds_filter(&slow);
        }
        slow
    };

    let mut state = LoopState::default();
    let mut bits: Vec<i8> = Vec::with_capacity(n);
    for i in 0..n {
        let mut in_amp = input.samples[i];
        if let Some(a) = &amp {
            in_amp += a[i];
        }
        if !slow.is_empty() {
            in_amp += slow[i];
        }
        let u = in_amp / full_scale;
        let fbn = fb.as_ref().map_or(0.0, |f| f[i] / full_scale);
        match step_inner(&mut state, u, fbn, p, a1, a2, cfg.stability_limit) {
            Ok(bit) => bits.push(bit),
            Err(_) => {
                return Err(ModulatorError::Unstable {
                    at: i,
                    limit: cfg.stability_limit,
                    partial: Bitstream {
                        bits,
                        fs_hz: cfg.fs_hz,
                        full_scale_amp: full_scale,
                    },
                })
            }
        }
    }
    Ok(Bitstream {
        bits,
        fs_hz: cfg.fs_hz,
        full_scale_amp: full_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_config, ModulatorConfig, NoiseConfig};
    use crate::stimulus::{gen_dc, gen_tone, snap_coherent};

    fn cfg_default() -> ValidatedConfig {
        validate_config(ModulatorConfig::default()).unwrap()
    }

    fn cfg_ideal() -> ValidatedConfig {
        validate_config(ModulatorConfig {
            amp_dc_gain: f64::INFINITY.min(1e12),
            cds_enabled: false,
            reset_fraction: 0.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn feedback_examples() {
        let dac = FeedbackDac {
            i_ref_amp: 10e-9,
            alpha: 100.0,
            polarity: true,
        };
        let i = slope_scaled_feedback(1, &dac).unwrap();
        assert!((i - 100e-12).abs() < 1e-21);

        let dac = FeedbackDac {
            i_ref_amp: 1e-6,
            alpha: 1.0,
            polarity: true,
        };
        assert_eq!(slope_scaled_feedback(-1, &dac).unwrap(), -1e-6);

        let dac = FeedbackDac {
            i_ref_amp: 100e-6,
            alpha: 100.0,
            polarity: true,
        };
        assert!((slope_scaled_feedback(1, &dac).unwrap() - 1e-6).abs() < 1e-18);

        assert!(slope_scaled_feedback(0, &dac).is_err());
    }

    #[test]
    fn cds_gain_examples() {
        // 40 dB stage acts as 80 dB under CDS
        assert_eq!(cds_effective_gain(100.0, true).unwrap(), 10_000.0);
        assert_eq!(cds_effective_gain(1.0, true).unwrap(), 1.0);
        assert_eq!(cds_effective_gain(10.0, true).unwrap(), 100.0);
        assert_eq!(cds_effective_gain(100.0, false).unwrap(), 100.0);
        assert!(cds_effective_gain(0.5, true).is_err());
    }

    #[test]
    fn leak_pole_examples() {
        assert!((integrator_leak_pole(1e4) - 0.9999).abs() < 1e-12);
        assert_eq!(integrator_leak_pole(f64::INFINITY), 1.0);
        assert_eq!(integrator_leak_pole(1.0), 0.0);
    }

    #[test]
    fn zero_input_bitstream_has_zero_mean() {
        let cfg = cfg_ideal();
        let n = 1 << 14;
        let w = gen_dc(0.0, cfg.fs_hz, n).unwrap();
        let b = run(&w, &cfg, &NoiseConfig::disabled(), 0).unwrap();
        let mean: f64 = b.bits.iter().map(|&x| f64::from(x)).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 2.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn dc_mean_tracks_input() {
        // u = 0.5 for 2^14 samples: mean(bits) = 0.5 +- 0.01
        let cfg = cfg_ideal();
        let n = 1 << 14;
        let w = gen_dc(0.5 * cfg.full_scale_amp(), cfg.fs_hz, n).unwrap();
        let b = run(&w, &cfg, &NoiseConfig::disabled(), 0).unwrap();
        let mean: f64 = b.bits.iter().map(|&x| f64::from(x)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn empty_input_is_an_error() {
        let cfg = cfg_default();
        let w = crate::stimulus::Waveform {
            samples: vec![],
            fs_hz: cfg.fs_hz,
        };
        assert!(matches!(
            run(&w, &cfg, &NoiseConfig::disabled(), 0),
            Err(ModulatorError::EmptyInput)
        ));
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let cfg = cfg_default();
        let w = gen_dc(0.0, 2.048e6, 16).unwrap();
        assert!(matches!(
            run(&w, &cfg, &NoiseConfig::disabled(), 0),
            Err(ModulatorError::RateMismatch { .. })
        ));
    }

    #[test]
    fn same_seed_same_bits() {
        let cfg = cfg_default();
        let f = snap_coherent(1.9e3, cfg.fs_hz, 4096);
        let w = gen_tone(-5.0, f, cfg.fs_hz, 4096, cfg.full_scale_amp(), 0.0).unwrap();
        let noise = NoiseConfig::default();
        let b1 = run(&w, &cfg, &noise, 42).unwrap();
        let b2 = run(&w, &cfg, &noise, 42).unwrap();
        assert_eq!(b1, b2);
        let b3 = run(&w, &cfg, &noise, 43).unwrap();
        assert_ne!(b1.bits, b3.bits);
    }

    #[test]
    fn full_scale_invariance_under_power_of_two_scaling() {
        // scaling (i_ref, input) by the same power of two leaves bits unchanged
        let base = ModulatorConfig::default();
        let f = snap_coherent(1.9e3, base.fs_hz, 4096);
        for k in [2.0, 8.0, 0.25] {
            let cfg_a = validate_config(base.clone()).unwrap();
            let cfg_b = validate_config(ModulatorConfig {
                i_ref_amp: base.i_ref_amp * k,
                i_ref_range_check: false,
                ..base.clone()
            })
            .unwrap();
            let wa = gen_tone(-5.0, f, base.fs_hz, 4096, cfg_a.full_scale_amp(), 0.1).unwrap();
            let wb = crate::stimulus::Waveform {
                samples: wa.samples.iter().map(|x| x * k).collect(),
                fs_hz: base.fs_hz,
            };
            let ba = run(&wa, &cfg_a, &NoiseConfig::disabled(), 0).unwrap();
            let bb = run(&wb, &cfg_b, &NoiseConfig::disabled(), 0).unwrap();
            assert_eq!(ba.bits, bb.bits, "k = {k}");
        }
    }

    #[test]
    fn alpha_transparency_for_noiseless_runs() {
        // identical normalized inputs give identical bits for any alpha
        let f = snap_coherent(1.9e3, 1.024e6, 4096);
        let mk = |alpha: f64, c3: f64| {
            validate_config(ModulatorConfig {
                alpha,
                c2_farad: 100e-15,
                c3_farad: c3,
                i_ref_amp: 1e-6 * alpha / 100.0,
                i_ref_range_check: false,
                ..Default::default()
            })
            .unwrap()
        };
        let cfg_a = mk(100.0, 10e-12);
        let cfg_b = mk(25.0, 2.5e-12);
        // same normalized amplitude: scale input by each full scale
        let wa = gen_tone(-5.0, f, 1.024e6, 4096, cfg_a.full_scale_amp(), 0.0).unwrap();
        let wb = gen_tone(-5.0, f, 1.024e6, 4096, cfg_b.full_scale_amp(), 0.0).unwrap();
        let ba = run(&wa, &cfg_a, &NoiseConfig::disabled(), 0).unwrap();
        let bb = run(&wb, &cfg_b, &NoiseConfig::disabled(), 0).unwrap();
        assert_eq!(ba.bits, bb.bits);
    }

    #[test]
    fn stability_envelope_dc_inputs() {
        // noiseless DC inputs with |u| <= 0.7 never trip the overflow flag
        let cfg = cfg_default();
        let n = 1 << 16;
        for frac in [-0.7, -0.35, 0.0, 0.35, 0.7] {
            let w = gen_dc(frac * cfg.full_scale_amp(), cfg.fs_hz, n).unwrap();
            let out = run(&w, &cfg, &NoiseConfig::disabled(), 0);
            assert!(out.is_ok(), "unstable at u = {frac}");
        }
    }

    #[test]
    fn overload_flags_instability_with_partial_bits() {
        let cfg = validate_config(ModulatorConfig {
            stability_limit: 3.0,
            ..Default::default()
        })
        .unwrap();
        let w = gen_dc(5.0 * cfg.full_scale_amp(), cfg.fs_hz, 1 << 12).unwrap();
        match run(&w, &cfg, &NoiseConfig::disabled(), 0) {
            Err(ModulatorError::Unstable { at, partial, .. }) => {
                assert!(at > 0);
                assert_eq!(partial.bits.len(), at);
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn sign_zero_tie_break_is_positive() {
        // crafted state at exactly zero: quantizer emits +1
        let cfg = cfg_ideal();
        let mut s = LoopState {
            x1: 0.0,
            x2: 0.0,
            last_bit: 1,
        };
        // u chosen so x2' lands exactly on 0: x1' = a1*(u-1), x2' = a2*(x1'-1)
        // with a1 = a2 = 0.5: x2' = 0 when x1' = 1, i.e. u - 1 = 2 -> u = 3
        let bit = step(&mut s, 3.0, 0.0, &cfg).unwrap();
        assert_eq!(s.x2, 0.0);
        assert_eq!(bit, 1);
    }

    #[test]
    fn offset_is_cancelled_by_cds_path() {
        // with CDS on, a static offset leaves the bitstream mean near zero;
        // with CDS off the mean follows the offset
        let n = 1 << 14;
        let base = ModulatorConfig::default();
        let cfg_on = validate_config(base.clone()).unwrap();
        let cfg_off = validate_config(ModulatorConfig {
            cds_enabled: false,
            ..base
        })
        .unwrap();
        let offset = 0.05 * cfg_on.full_scale_amp();
        let noise = NoiseConfig {
            dac_shot_enabled: false,
            amp_white_psd: 0.0,
            flicker_enabled: false,
            flicker_knee_hz: 0.0,
            amp_offset_amp: offset,
        };
        let w = gen_dc(0.0, cfg_on.fs_hz, n).unwrap();
        let mean = |b: &Bitstream| b.bits.iter().map(|&x| f64::from(x)).sum::<f64>() / n as f64;
        let m_on = mean(&run(&w, &cfg_on, &noise, 1).unwrap());
        let m_off = mean(&run(&w, &cfg_off, &noise, 1).unwrap());
        assert!(m_on.abs() < 0.005, "cds on mean {m_on}");
        assert!((m_off - 0.05).abs() < 0.01, "cds off mean {m_off}");
    }
}
