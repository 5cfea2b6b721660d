//! Configuration and record types shared by every other module.
//!
//! [`ModulatorConfig`] carries all physical and loop parameters,
//! [`NoiseConfig`] the stochastic-source settings and [`NanoporeModel`] the
//! input-side circuit model. A [`SimConfig`] bundles the three plus the
//! input-routing flag and maps 1:1 onto the flat key/value config file
//! (TOML syntax, keys named exactly like the struct fields, unknown keys
//! rejected).

use serde::{Deserialize, Serialize};
use std::path::Path;

/// Relative tolerance for the `alpha == c3/c2` consistency check.
pub const ALPHA_REL_TOL: f64 = 1e-9;

/// Configuration errors, each naming the offending field.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("alpha ({alpha}) inconsistent with c3_farad/c2_farad ({ratio})")]
    InconsistentAlpha { alpha: f64, ratio: f64 },
    #[error("{field} out of range: {value} (expected {expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("{field} must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("osr must be an integer >= 2, got {0}")]
    OsrTooSmall(u32),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config file {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
}

/// All physical and loop parameters of the modulator.
///
/// Defaults mirror the reported operating point: 1.024 MHz clock, OSR 128,
/// `alpha` = 100 from C2 = 100 fF / C3 = 10 pF, 1 % reset dead-time,
/// 40 dB single-stage amplifier with CDS enabled, 125 µW / 1 V for the
/// figure-of-merit arithmetic. The 1 µA reference (10 nA effective
/// full-scale) is the calibrated operating point used by the paper-point
/// checks; the DAC supports 100 nA..100 µA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulatorConfig {
    /// Sampling / modulator clock frequency (Hz).
    pub fs_hz: f64,
    /// Oversampling ratio (output rate is `fs_hz / osr`).
    pub osr: u32,
    /// Current-scaling ratio, must equal `c3_farad / c2_farad`.
    pub alpha: f64,
    /// Differentiator capacitor (F).
    pub c2_farad: f64,
    /// Integrator capacitor (F).
    pub c3_farad: f64,
    /// DAC reference current (A); the effective full-scale input is
    /// `i_ref_amp / alpha`.
    pub i_ref_amp: f64,
    /// Single-stage amplifier DC gain (V/V).
    pub amp_dc_gain: f64,
    /// Correlated double sampling: squares the effective amplifier gain and
    /// cancels offset / low-frequency noise.
    pub cds_enabled: bool,
    /// Fraction of the clock period consumed by the charge-pump reset
    /// (0..=0.1); shortens the effective integration window.
    pub reset_fraction: f64,
    /// Integrator scaling coefficients `[a1, a2]`.
    pub loop_coeffs: [f64; 2],
    /// Reported per-channel power (W), used only in figure-of-merit arithmetic.
    pub power_watt: f64,
    /// Supply voltage (V), reported only.
    pub supply_volt: f64,
    /// Master RNG seed; every noise source derives its own stream from it.
    pub seed: u64,
    /// Integrator state magnitude beyond which a run is flagged unstable.
    pub stability_limit: f64,
    /// Enforce the DAC range 100 nA..100 µA on `i_ref_amp`. Disable to
    /// simulate hypothetical references outside the hardware range.
    pub i_ref_range_check: bool,
}

impl Default for ModulatorConfig {
    fn default() -> Self {
        Self {
            fs_hz: 1.024e6,
            osr: 128,
            alpha: 100.0,
            c2_farad: 100e-15,
            c3_farad: 10e-12,
            i_ref_amp: 1e-6,
            amp_dc_gain: 100.0,
            cds_enabled: true,
            reset_fraction: 0.01,
            loop_coeffs: [0.5, 0.5],
            power_watt: 125e-6,
            supply_volt: 1.0,
            seed: 1,
            stability_limit: 10.0,
            i_ref_range_check: true,
        }
    }
}

/// A [`ModulatorConfig`] that passed [`validate_config`]. Immutable; share
/// freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(ModulatorConfig);

impl ValidatedConfig {
    /// Consume the wrapper and return the inner config.
    pub fn into_inner(self) -> ModulatorConfig {
        self.0
    }

    /// Effective full-scale input current `i_ref_amp / alpha` (A).
    pub fn full_scale_amp(&self) -> f64 {
        self.0.i_ref_amp / self.0.alpha
    }

    /// Decimated output rate `fs_hz / osr` (Hz).
    pub fn output_rate_hz(&self) -> f64 {
        self.0.fs_hz / self.0.osr as f64
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = ModulatorConfig;
    fn deref(&self) -> &ModulatorConfig {
        &self.0
    }
}

fn require_finite(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NonFinite { field, value })
    }
}

/// Validate a modulator configuration.
///
/// `alpha` is recomputed from `c3_farad / c2_farad`; a provided value that
/// disagrees with the capacitor ratio by more than 1 part in 1e9 is an
/// error. Validation is idempotent: validating an already-validated config
/// returns an equal value.
pub fn validate_config(cfg: ModulatorConfig) -> Result<ValidatedConfig, ConfigError> {
    for (field, value) in [
        ("fs_hz", cfg.fs_hz),
        ("alpha", cfg.alpha),
        ("c2_farad", cfg.c2_farad),
        ("c3_farad", cfg.c3_farad),
        ("i_ref_amp", cfg.i_ref_amp),
        ("amp_dc_gain", cfg.amp_dc_gain),
        ("reset_fraction", cfg.reset_fraction),
        ("power_watt", cfg.power_watt),
        ("supply_volt", cfg.supply_volt),
        ("stability_limit", cfg.stability_limit),
        ("loop_coeffs[0]", cfg.loop_coeffs[0]),
        ("loop_coeffs[1]", cfg.loop_coeffs[1]),
    ] {
        require_finite(field, value)?;
    }
    if cfg.fs_hz <= 0.0 {
        return Err(ConfigError::OutOfRange {
            field: "fs_hz",
            value: cfg.fs_hz,
            expected: "> 0",
        });
    }
    if cfg.osr < 2 {
        return Err(ConfigError::OsrTooSmall(cfg.osr));
    }
    if cfg.c2_farad <= 0.0 {
        return Err(ConfigError::OutOfRange {
            field: "c2_farad",
            value: cfg.c2_farad,
            expected: "> 0",
        });
    }
    if cfg.c3_farad <= 0.0 {
        return Err(ConfigError::OutOfRange {
            field: "c3_farad",
            value: cfg.c3_farad,
            expected: "> 0",
        });
    }
    let ratio = cfg.c3_farad / cfg.c2_farad;
    if (cfg.alpha - ratio).abs() > ALPHA_REL_TOL * ratio.abs() {
        return Err(ConfigError::InconsistentAlpha {
            alpha: cfg.alpha,
            ratio,
        });
    }
    if !(0.0..=0.1).contains(&cfg.reset_fraction) {
        return Err(ConfigError::OutOfRange {
            field: "reset_fraction",
            value: cfg.reset_fraction,
            expected: "0 ..= 0.1",
        });
    }
    if cfg.i_ref_range_check && !(100e-9..=100e-6).contains(&cfg.i_ref_amp) {
        return Err(ConfigError::OutOfRange {
            field: "i_ref_amp",
            value: cfg.i_ref_amp,
            expected: "100e-9 ..= 100e-6 (disable i_ref_range_check to override)",
        });
    }
    if !cfg.i_ref_range_check && cfg.i_ref_amp <= 0.0 {
        return Err(ConfigError::OutOfRange {
            field: "i_ref_amp",
            value: cfg.i_ref_amp,
            expected: "> 0",
        });
    }
    if cfg.amp_dc_gain < 1.0 {
        return Err(ConfigError::OutOfRange {
            field: "amp_dc_gain",
            value: cfg.amp_dc_gain,
            expected: ">= 1",
        });
    }
    if cfg.loop_coeffs[0] <= 0.0 || cfg.loop_coeffs[1] <= 0.0 {
        return Err(ConfigError::OutOfRange {
            field: "loop_coeffs",
            value: cfg.loop_coeffs[0].min(cfg.loop_coeffs[1]),
            expected: "> 0",
        });
    }
    if cfg.power_watt <= 0.0 {
        return Err(ConfigError::OutOfRange {
            field: "power_watt",
            value: cfg.power_watt,
            expected: "> 0",
        });
    }
    if cfg.stability_limit <= 0.0 {
        return Err(ConfigError::OutOfRange {
            field: "stability_limit",
            value: cfg.stability_limit,
            expected: "> 0",
        });
    }
    let mut cfg = cfg;
    cfg.alpha = ratio;
    Ok(ValidatedConfig(cfg))
}

/// Effective full-scale input current for a reference `i_ref` scaled by
/// `alpha`: `i_ref / alpha`.
pub fn effective_full_scale(i_ref_amp: f64, alpha: f64) -> Result<f64, ConfigError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(ConfigError::OutOfRange {
            field: "alpha",
            value: alpha,
            expected: "> 0",
        });
    }
    require_finite("i_ref_amp", i_ref_amp)?;
    Ok(i_ref_amp / alpha)
}

/// Stochastic-source settings. All PSDs are one-sided, in A²/Hz, referred to
/// the virtual-ground input node.
///
/// The default `amp_white_psd` is the calibrated residual broadband
/// input-referred noise that places the simulated in-band floor at the
/// reported 4 kHz operating point (a calibration constant; the underlying
/// DAC-noise magnitude is not published).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Enable shot noise of the 1-b current DAC (injected at the feedback node).
    pub dac_shot_enabled: bool,
    /// Input-referred amplifier white noise PSD (A²/Hz).
    pub amp_white_psd: f64,
    /// 1/f corner frequency (Hz): flicker PSD equals `amp_white_psd` at this
    /// frequency and rises as 1/f below it.
    pub flicker_knee_hz: f64,
    /// Enable the 1/f source.
    pub flicker_enabled: bool,
    /// Static input-referred offset expressed as an equivalent input current (A).
    pub amp_offset_amp: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            dac_shot_enabled: true,
            amp_white_psd: 2.2e-29,
            flicker_knee_hz: 10e3,
            flicker_enabled: true,
            amp_offset_amp: 0.0,
        }
    }
}

impl NoiseConfig {
    /// Check invariants: PSDs and the knee must be non-negative and finite.
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_finite("amp_white_psd", self.amp_white_psd)?;
        require_finite("flicker_knee_hz", self.flicker_knee_hz)?;
        require_finite("amp_offset_amp", self.amp_offset_amp)?;
        if self.amp_white_psd < 0.0 {
            return Err(ConfigError::OutOfRange {
                field: "amp_white_psd",
                value: self.amp_white_psd,
                expected: ">= 0",
            });
        }
        if self.flicker_knee_hz < 0.0 {
            return Err(ConfigError::OutOfRange {
                field: "flicker_knee_hz",
                value: self.flicker_knee_hz,
                expected: ">= 0",
            });
        }
        Ok(())
    }

    /// A config with every source disabled (for noiseless runs).
    pub fn disabled() -> Self {
        Self {
            dac_shot_enabled: false,
            amp_white_psd: 0.0,
            flicker_knee_hz: 0.0,
            flicker_enabled: false,
            amp_offset_amp: 0.0,
        }
    }
}

/// Input-side circuit model: a biased pore resistance shunted by the
/// membrane capacitance.
///
/// The component values are illustrative, not published ground truth: the
/// defaults (500 MΩ, 1 pF, 0.2 V) produce nA-scale currents with a
/// multi-kHz pole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NanoporeModel {
    /// Pore resistance (Ω).
    pub r_pore_ohm: f64,
    /// Membrane capacitance (F).
    pub c_mem_farad: f64,
    /// Bias voltage across the pore (V).
    pub v_bias_volt: f64,
}

impl Default for NanoporeModel {
    fn default() -> Self {
        Self {
            r_pore_ohm: 500e6,
            c_mem_farad: 1e-12,
            v_bias_volt: 0.2,
        }
    }
}

impl NanoporeModel {
    /// Check invariants: positive resistance, non-negative capacitance.
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_finite("r_pore_ohm", self.r_pore_ohm)?;
        require_finite("c_mem_farad", self.c_mem_farad)?;
        require_finite("v_bias_volt", self.v_bias_volt)?;
        if self.r_pore_ohm <= 0.0 {
            return Err(ConfigError::OutOfRange {
                field: "r_pore_ohm",
                value: self.r_pore_ohm,
                expected: "> 0",
            });
        }
        if self.c_mem_farad < 0.0 {
            return Err(ConfigError::OutOfRange {
                field: "c_mem_farad",
                value: self.c_mem_farad,
                expected: ">= 0",
            });
        }
        Ok(())
    }

    /// Source current when the model acts as a generator: `v_bias / r_pore`.
    pub fn source_current_amp(&self) -> f64 {
        self.v_bias_volt / self.r_pore_ohm
    }

    /// Front-end time constant `r_pore * c_mem` (s).
    pub fn tau_s(&self) -> f64 {
        self.r_pore_ohm * self.c_mem_farad
    }
}

/// One-bit quantizer decisions at the modulator clock rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Bitstream {
    /// Quantizer decisions, each +1 or -1.
    pub bits: Vec<i8>,
    /// Clock rate (Hz).
    pub fs_hz: f64,
    /// Effective input full-scale current `i_ref / alpha` (A).
    pub full_scale_amp: f64,
}

impl Bitstream {
    /// Bits as f64 in {-1.0, +1.0} (normalized full-scale units).
    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Decimated modulator output at `fs / osr`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecimatedRecord {
    /// Normalized output samples in -1..=+1 (full-scale units).
    pub samples: Vec<f64>,
    /// Output rate `fs / r` (Hz).
    pub rate_hz: f64,
}

/// Full simulation configuration: one flat key/value file.
///
/// File syntax is TOML restricted to top-level keys; key names equal the
/// field names of [`ModulatorConfig`], [`NoiseConfig`] and [`NanoporeModel`]
/// plus `nanopore_enabled`. Unknown keys are an error.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    #[serde(flatten)]
    pub modulator: ModulatorConfig,
    #[serde(flatten)]
    pub noise: NoiseConfig,
    #[serde(flatten)]
    pub nanopore: NanoporeModel,
    /// Route the input waveform through the nanopore front-end filter before
    /// modulation. Off by default: the measured-style sweeps drive the
    /// modulator input directly.
    pub nanopore_enabled: bool,
}

const KNOWN_KEYS: &[&str] = &[
    // modulator
    "fs_hz",
    "osr",
    "alpha",
    "c2_farad",
    "c3_farad",
    "i_ref_amp",
    "amp_dc_gain",
    "cds_enabled",
    "reset_fraction",
    "loop_coeffs",
    "power_watt",
    "supply_volt",
    "seed",
    "stability_limit",
    "i_ref_range_check",
    // noise
    "dac_shot_enabled",
    "amp_white_psd",
    "flicker_knee_hz",
    "flicker_enabled",
    "amp_offset_amp",
    // nanopore
    "r_pore_ohm",
    "c_mem_farad",
    "v_bias_volt",
    // routing
    "nanopore_enabled",
];

impl SimConfig {
    /// Parse from flat key/value text. Unknown keys are rejected by name.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for key in table.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
        }
        let cfg: SimConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.noise.validate()?;
        cfg.nanopore.validate()?;
        Ok(cfg)
    }

    /// Read and parse a config file.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Serialize to the flat key/value file format.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validate the modulator part, returning the validated wrapper.
    pub fn validated(&self) -> Result<ValidatedConfig, ConfigError> {
        validate_config(self.modulator.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_point_alpha_from_capacitors() {
        // c2 = 100 fF, c3 = 10 pF -> alpha = 100 (to f64 division rounding)
        let cfg = ModulatorConfig::default();
        let v = validate_config(cfg).unwrap();
        assert!((v.alpha - 100.0).abs() / 100.0 < 1e-12, "alpha {}", v.alpha);
        assert!((v.full_scale_amp() - 1e-8).abs() / 1e-8 < 1e-12);
    }

    #[test]
    fn identity_ratio_alpha_one() {
        let cfg = ModulatorConfig {
            c2_farad: 1e-12,
            c3_farad: 1e-12,
            alpha: 1.0,
            i_ref_amp: 1e-6,
            ..Default::default()
        };
        let v = validate_config(cfg).unwrap();
        assert_eq!(v.alpha, 1.0);
    }

    #[test]
    fn reset_fraction_out_of_range() {
        let cfg = ModulatorConfig {
            reset_fraction: 0.5,
            ..Default::default()
        };
        let err = validate_config(cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("reset_fraction"), "got: {msg}");
    }

    #[test]
    fn inconsistent_alpha_rejected() {
        let cfg = ModulatorConfig {
            alpha: 50.0,
            ..Default::default()
        };
        assert!(matches!(
            validate_config(cfg),
            Err(ConfigError::InconsistentAlpha { .. })
        ));
    }

    #[test]
    fn osr_lower_bound() {
        let cfg = ModulatorConfig {
            osr: 1,
            ..Default::default()
        };
        assert!(matches!(validate_config(cfg), Err(ConfigError::OsrTooSmall(1))));
    }

    #[test]
    fn i_ref_range_enforced_and_overridable() {
        let cfg = ModulatorConfig {
            i_ref_amp: 1e-9,
            ..Default::default()
        };
        assert!(validate_config(cfg.clone()).is_err());
        let cfg = ModulatorConfig {
            i_ref_range_check: false,
            ..cfg
        };
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn validate_is_idempotent() {
        let v1 = validate_config(ModulatorConfig::default()).unwrap();
        let v2 = validate_config(v1.clone().into_inner()).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn full_scale_examples() {
        // 100 uA reference at alpha=100 -> 1 uA max input
        assert_eq!(effective_full_scale(100e-6, 100.0).unwrap(), 1e-6);
        // alpha=1 identity
        assert_eq!(effective_full_scale(10e-9, 1.0).unwrap(), 10e-9);
        // 10 nA reference at alpha=100 -> 100 pA
        let fs = effective_full_scale(10e-9, 100.0).unwrap();
        assert!((fs - 100e-12).abs() < 1e-21);
        assert!(effective_full_scale(1e-6, 0.0).is_err());
        assert!(effective_full_scale(1e-6, -2.0).is_err());
    }

    #[test]
    fn config_file_roundtrip_and_unknown_key() {
        let cfg = SimConfig::default();
        let text = cfg.to_toml_string();
        let back = SimConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);

        let err = SimConfig::from_toml_str("fs_hz = 1.0e6\nbogus_key = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "bogus_key"));
    }

    #[test]
    fn config_file_partial_overrides() {
        let cfg = SimConfig::from_toml_str("i_ref_amp = 1.0e-5\nseed = 99\n").unwrap();
        assert_eq!(cfg.modulator.i_ref_amp, 1e-5);
        assert_eq!(cfg.modulator.seed, 99);
        assert_eq!(cfg.modulator.fs_hz, 1.024e6);
    }

    #[test]
    fn nanopore_source_current() {
        let m = NanoporeModel::default();
        // 0.2 V over 500 MOhm -> 0.4 nA
        assert!((m.source_current_amp() - 0.4e-9).abs() < 1e-18);
        assert_eq!(m.tau_s(), 500e-6);
    }
}
