//! CSV and key=value text artifacts.
//!
//! Data files carry a single `#`-prefixed metadata header so they are
//! self-describing without a manifest lookup. All writers are
//! deterministic: the same record produces byte-identical files.

use crate::analysis::{MetricsReport, SpectrumReport};
use crate::model::{Bitstream, DecimatedRecord};
use crate::stimulus::Waveform;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Write a waveform as `time_s,current_a` rows.
pub fn write_waveform_csv(path: &Path, w: &Waveform) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(file_err(path))?);
    (|| {
        writeln!(f, "# fs_hz={}", w.fs_hz)?;
        writeln!(f, "time_s,current_a")?;
        for (i, x) in w.samples.iter().enumerate() {
            writeln!(f, "{},{}", i as f64 / w.fs_hz, x)?;
        }
        f.flush()
    })()
    .map_err(file_err(path))
}

/// Read a waveform written by [`write_waveform_csv`].
pub fn read_waveform_csv(path: &Path) -> Result<Waveform, IoError> {
    let f = BufReader::new(std::fs::File::open(path).map_err(file_err(path))?);
    let mut fs_hz = None;
    let mut samples = Vec::new();
    for (ln, line) in f.lines().enumerate() {
        let line = line.map_err(file_err(path))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                if let Some(v) = kv.strip_prefix("fs_hz=") {
                    fs_hz = v.parse::<f64>().ok();
                }
            }
            continue;
        }
        if line.starts_with("time_s") {
            continue;
        }
        let mut cols = line.split(',');
        let (_t, c) = (cols.next(), cols.next());
        let c = c.ok_or_else(|| IoError::Format {
            path: path.display().to_string(),
            line: ln + 1,
            msg: "expected two columns".into(),
        })?;
        let v: f64 = c.trim().parse().map_err(|e| IoError::Format {
            path: path.display().to_string(),
            line: ln + 1,
            msg: format!("bad current value: {e}"),
        })?;
        samples.push(v);
    }
    let fs_hz = fs_hz.ok_or_else(|| IoError::Format {
        path: path.display().to_string(),
        line: 0,
        msg: "missing `# fs_hz=` header".into(),
    })?;
    Ok(Waveform { samples, fs_hz })
}

/// Write a bitstream as one +-1 per line with an `fs`/full-scale/seed header.
pub fn write_bitstream_csv(path: &Path, b: &Bitstream, seed: u64) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(file_err(path))?);
    (|| {
        writeln!(
            f,
            "# fs_hz={} full_scale_amp={} seed={}",
            b.fs_hz, b.full_scale_amp, seed
        )?;
        writeln!(f, "bit")?;
        for &bit in &b.bits {
            writeln!(f, "{bit}")?;
        }
        f.flush()
    })()
    .map_err(file_err(path))
}

/// Read a bitstream written by [`write_bitstream_csv`].
pub fn read_bitstream_csv(path: &Path) -> Result<Bitstream, IoError> {
    let f = BufReader::new(std::fs::File::open(path).map_err(file_err(path))?);
    let mut fs_hz = 0.0;
    let mut full_scale_amp = 0.0;
    let mut bits = Vec::new();
    for (ln, line) in f.lines().enumerate() {
        let line = line.map_err(file_err(path))?;
        let line = line.trim();
        if line.is_empty() || line == "bit" {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                if let Some(v) = kv.strip_prefix("fs_hz=") {
                    fs_hz = v.parse().unwrap_or(0.0);
                } else if let Some(v) = kv.strip_prefix("full_scale_amp=") {
                    full_scale_amp = v.parse().unwrap_or(0.0);
                }
            }
            continue;
        }
        let v: i8 = line.parse().map_err(|e| IoError::Format {
            path: path.display().to_string(),
            line: ln + 1,
            msg: format!("bad bit: {e}"),
        })?;
        if v != 1 && v != -1 {
            return Err(IoError::Format {
                path: path.display().to_string(),
                line: ln + 1,
                msg: format!("bit must be +-1, got {v}"),
            });
        }
        bits.push(v);
    }
    Ok(Bitstream {
        bits,
        fs_hz,
        full_scale_amp,
    })
}

/// Write a decimated record as one sample per line.
pub fn write_decimated_csv(path: &Path, d: &DecimatedRecord, seed: u64) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(file_err(path))?);
    (|| {
        writeln!(f, "# rate_hz={} seed={}", d.rate_hz, seed)?;
        writeln!(f, "sample")?;
        for &s in &d.samples {
            writeln!(f, "{s}")?;
        }
        f.flush()
    })()
    .map_err(file_err(path))
}

/// Write a spectrum as `freq_hz,psd_dbfs` rows.
pub fn write_spectrum_csv(path: &Path, s: &SpectrumReport, seed: u64) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(file_err(path))?);
    (|| {
        writeln!(
            f,
            "# n_fft={} window={} band_hz={} seed={}",
            s.n_fft,
            s.window.name(),
            s.band_hz,
            seed
        )?;
        writeln!(f, "freq_hz,psd_dbfs")?;
        for (fr, db) in s.freqs_hz.iter().zip(&s.psd) {
            if db.is_finite() {
                writeln!(f, "{fr},{db}")?;
            } else {
                writeln!(f, "{fr},-inf")?;
            }
        }
        f.flush()
    })()
    .map_err(file_err(path))
}

/// Write a `(amp_dbfs, sndr_db)` sweep; unmeasurable points print `nan`.
pub fn write_sweep_csv(path: &Path, rows: &[(f64, Option<f64>)], seed: u64) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(file_err(path))?);
    (|| {
        writeln!(f, "# seed={seed}")?;
        writeln!(f, "amp_dbfs,sndr_db")?;
        for (amp, sndr) in rows {
            match sndr {
                Some(s) => writeln!(f, "{amp},{s}")?,
                None => writeln!(f, "{amp},nan")?,
            }
        }
        f.flush()
    })()
    .map_err(file_err(path))
}

/// Key=value lines for a metrics block; `extra` rows are appended verbatim.
pub fn write_metrics_txt(
    path: &Path,
    rows: &[(&str, f64)],
    extra: &[(&str, String)],
) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(file_err(path))?);
    (|| {
        for (k, v) in rows {
            writeln!(f, "{k}={v}")?;
        }
        for (k, v) in extra {
            writeln!(f, "{k}={v}")?;
        }
        f.flush()
    })()
    .map_err(file_err(path))
}

/// Read a key=value metrics block into (key, value) pairs.
pub fn read_metrics_txt(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let f = BufReader::new(std::fs::File::open(path).map_err(file_err(path))?);
    let mut rows = Vec::new();
    for (ln, line) in f.lines().enumerate() {
        let line = line.map_err(file_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| IoError::Format {
            path: path.display().to_string(),
            line: ln + 1,
            msg: "expected key=value".into(),
        })?;
        rows.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(rows)
}

/// Flat key=value rendering of a full metrics report.
pub fn metrics_report_rows(m: &MetricsReport) -> Vec<(&'static str, f64)> {
    vec![
        ("sndr_db", m.sndr_db),
        ("snr_db", m.snr_db),
        ("sfdr_db", m.sfdr_db),
        ("dr_db", m.dr_db),
        ("fom_db", m.fom_db),
        ("band_hz", m.band_hz),
        ("f_conv_hz", m.f_conv_hz),
        ("power_watt", m.power_watt),
    ]
}
