//! Cross-module integration: modulate, decimate, analyze.

use csadc_core::{
    decimate_cic, fit_psd_slope, flicker_noise_samples, gen_tone, psd_estimate, run,
    sndr_in_band, snap_coherent, validate_config, ModulatorConfig, NoiseConfig, Window,
};

fn paper_cfg() -> csadc_core::ValidatedConfig {
    validate_config(ModulatorConfig::default()).unwrap()
}

#[test]
fn decimation_preserves_inband_sndr_within_1db() {
    // tone below 0.8 * (fs / 2r): compare bitstream-domain and
    // decimated-domain SNDR over the same band
    let cfg = paper_cfg();
    let n = 1 << 17;
    let f = snap_coherent(1.9e3, cfg.fs_hz, n);
    let w = gen_tone(-5.0, f, cfg.fs_hz, n, cfg.full_scale_amp(), 0.0).unwrap();
    let bits = run(&w, &cfg, &NoiseConfig::default(), 11).unwrap();

    let spec_raw = psd_estimate(&bits.as_f64(), bits.fs_hz, Window::Hann, n).unwrap();
    let raw = sndr_in_band(&spec_raw, f, 3999.0).unwrap();

    let dec = decimate_cic(&bits, cfg.osr, 3).unwrap();
    let spec_dec = psd_estimate(&dec.samples, dec.rate_hz, Window::Hann, dec.samples.len()).unwrap();
    let de = sndr_in_band(&spec_dec, f, 3999.0).unwrap();

    assert!(
        (raw.sndr_db - de.sndr_db).abs() < 1.0,
        "raw {} vs decimated {}",
        raw.sndr_db,
        de.sndr_db
    );
}

#[test]
fn noiseless_psd_rises_at_40db_per_decade() {
    // 2nd-order noise transfer signature between 10 kHz and 100 kHz
    let cfg = paper_cfg();
    let n = 1 << 16;
    let f = snap_coherent(1.9e3, cfg.fs_hz, n);
    let w = gen_tone(-5.0, f, cfg.fs_hz, n, cfg.full_scale_amp(), 0.0).unwrap();
    let bits = run(&w, &cfg, &NoiseConfig::disabled(), 0).unwrap();
    let spec = psd_estimate(&bits.as_f64(), bits.fs_hz, Window::Hann, n).unwrap();
    let slope = fit_psd_slope(&spec, 10e3, 100e3).unwrap();
    assert!((35.0..=45.0).contains(&slope), "slope {slope} dB/decade");
}

#[test]
fn flicker_psd_slope_and_knee() {
    let fs = 1.024e6;
    let knee = 10e3;
    let target_psd = 1e-24;
    let x = flicker_noise_samples(target_psd, knee, fs, 1 << 20, 8).unwrap();
    let spec = psd_estimate(&x, fs, Window::Hann, 1 << 20).unwrap();

    // -10 dB/decade +- 2 between fs/1e5 and fs/10
    let slope = fit_psd_slope(&spec, fs / 1e5, fs / 10.0).unwrap();
    assert!(
        (-12.0..=-8.0).contains(&slope),
        "flicker slope {slope} dB/decade"
    );

    // PSD at the knee within 3 dB of the white level used to anchor it
    let psd_near_knee = spec.band_power(0.8 * knee, 1.25 * knee) / (0.45 * knee);
    let err_db = 10.0 * (psd_near_knee / target_psd).log10();
    assert!(err_db.abs() < 3.0, "knee PSD off by {err_db} dB");
}

#[test]
fn modulated_tone_survives_the_whole_chain() {
    // full chain: stimulus -> modulator -> decimator -> spectrum -> metrics
    let cfg = paper_cfg();
    let n = 1 << 16;
    let f = snap_coherent(1.9e3, cfg.fs_hz, n);
    let w = gen_tone(-5.0, f, cfg.fs_hz, n, cfg.full_scale_amp(), 0.0).unwrap();
    let bits = run(&w, &cfg, &NoiseConfig::default(), 21).unwrap();
    let dec = decimate_cic(&bits, cfg.osr, 3).unwrap();
    assert_eq!(dec.rate_hz, 8000.0);
    assert_eq!(dec.samples.len(), n / 128);
    let spec = psd_estimate(&dec.samples, dec.rate_hz, Window::Hann, dec.samples.len()).unwrap();
    let m = sndr_in_band(&spec, f, 3999.0).unwrap();
    assert!(m.sndr_db > 70.0, "sndr {}", m.sndr_db);
    assert!(m.snr_db + 0.01 >= m.sndr_db);
    assert!(m.sfdr_db >= m.sndr_db);
}
