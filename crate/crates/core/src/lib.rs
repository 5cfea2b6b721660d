//! Behavioral, sample-accurate simulator and analysis toolkit for a sub-pA
//! current-sensing 2nd-order 1-bit delta-sigma ADC.
//!
//! The converter folds a capacitive transimpedance front-end into the first
//! integrator of a continuous-time delta-sigma loop and scales the feedback
//! DAC current through an integrator/differentiator capacitor pair
//! (`alpha = C3/C2`). Scaling the DAC reference up by `alpha` while dividing
//! the feedback current by `alpha` cuts the input-referred DAC noise power by
//! `alpha`, which is what enables sub-picoampere sensing.
//!
//! Module map:
//!
//! - [`model`] — configuration and record types, validation, config-file parsing
//! - [`stimulus`] — test-current generation and the nanopore front-end filter
//! - [`modulator`] — the discrete-time behavioral loop engine
//! - [`noise`] — seeded stochastic sources (DAC shot, amplifier white/flicker, CDS)
//! - [`analysis`] — spectral estimation, SNDR/DR extraction, CIC decimation,
//!   figure-of-merit arithmetic
//! - [`io`] — CSV and key=value text artifacts
//!
//! All currents are in amperes, frequencies in Hz, capacitances in farads.
//! Every stochastic path is seeded and reproducible: the same seed gives a
//! bit-identical bitstream.

pub mod analysis;
pub mod io;
pub mod model;
pub mod modulator;
pub mod noise;
pub mod stimulus;

pub use analysis::{
    cross_scale_dr, decimate_cic, dynamic_range, fit_psd_slope, fom_schreier,
    min_detectable_signal, psd_estimate, sndr_in_band, AnalysisError, BandMetrics, MetricsReport,
    SpectrumReport, Window,
};
pub use model::{
    effective_full_scale, validate_config, Bitstream, ConfigError, DecimatedRecord,
    ModulatorConfig, NanoporeModel, NoiseConfig, SimConfig, ValidatedConfig,
};
pub use modulator::{
    cds_effective_gain, integrator_leak_pole, run, slope_scaled_feedback, step, FeedbackDac,
    LoopState, ModulatorError,
};
pub use noise::{
    cds_filter, dac_shot_noise_psd, derive_stream_seed, flicker_noise_samples,
    input_referred_dac_noise_psd, white_noise_samples, NoiseError, NoiseKind, NoisePsd,
};
pub use stimulus::{gen_dc, gen_tone, nanopore_filter, snap_coherent, StimulusError, Waveform};
