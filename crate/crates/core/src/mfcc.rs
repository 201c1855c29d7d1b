//! MFCC extraction: the observation function for statistical steganalysis.
//!
//! Per 30 ms frame (10 ms step): in-frame pre-emphasis, Hamming window,
//! zero-padded 256-point FFT, triangular mel filterbank energies, natural
//! log with a 1e-10 floor, orthonormal DCT-II, keep c1..cN (c0 optional).

use thiserror::Error;

use crate::audio::{frame_signal, AudioError, PcmSignal, SAMPLE_RATE};
use crate::dsp;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("signal too short for one analysis window ({samples} samples, need {needed})")]
    SignalTooShort { samples: usize, needed: usize },
}

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub window_ms: u32,
    pub step_ms: u32,
    pub num_filters: usize,
    pub num_coeffs: usize,
    pub pre_emphasis: f64,
    pub include_c0: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            window_ms: 30,
            step_ms: 10,
            num_filters: 26,
            num_coeffs: 19,
            pre_emphasis: 0.97,
            include_c0: false,
        }
    }
}

impl MfccConfig {
    pub fn with_num_coeffs(num_coeffs: usize) -> Self {
        assert!((1..=19).contains(&num_coeffs), "num_coeffs must be 1..=19");
        MfccConfig {
            num_coeffs,
            ..Default::default()
        }
    }

    /// Feature vector length per frame.
    pub fn dim(&self) -> usize {
        self.num_coeffs + self.include_c0 as usize
    }

    pub fn fft_size(&self) -> usize {
        let window = (self.window_ms as usize * SAMPLE_RATE as usize) / 1000;
        window.next_power_of_two().max(256)
    }
}

/// Per-frame MFCC rows; all rows have the same length and finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub num_coeffs: usize,
    pub source_id: String,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Mel scale used for filter placement.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Filter edge frequencies in Hz: `num_filters + 2` points equally spaced on
/// the mel scale from 0 to the Nyquist frequency. Filter `m` is the triangle
/// over points `m-1 .. m+1`, so point `m` is its center.
pub fn mel_filter_edges(num_filters: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..num_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (num_filters + 1) as f64))
        .collect()
}

/// Triangular mel filterbank sampled at FFT bin frequencies. Returns one
/// weight row of length `fft_size/2 + 1` per filter.
pub fn mel_filterbank(num_filters: usize, fft_size: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    assert!(num_filters >= 1, "need at least one filter");
    assert!(fft_size.is_power_of_two(), "fft_size must be a power of two");
    let edges = mel_filter_edges(num_filters, sample_rate);
    let bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    (0..num_filters)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Extract MFCC rows for every analysis frame of the signal.
pub fn extract_mfcc(signal: &PcmSignal, cfg: &MfccConfig) -> Result<FeatureMatrix, FeatureError> {
    let frames = frame_signal(signal, cfg.window_ms, cfg.step_ms).map_err(|e| match e {
        AudioError::SignalTooShort { samples, needed } => {
            FeatureError::SignalTooShort { samples, needed }
        }
        other => panic!("unexpected framing error: {other}"),
    })?;
    let window_len = (cfg.window_ms as usize * SAMPLE_RATE as usize) / 1000;
    let fft_size = cfg.fft_size();
    let hamming = dsp::hamming(window_len);
    let filters = mel_filterbank(cfg.num_filters, fft_size, SAMPLE_RATE);

    let mut rows = Vec::with_capacity(frames.len());
    let mut buf = vec![0.0f64; window_len];
    for frame in frames {
        // in-frame pre-emphasis: y[0] scaled like HTK does
        buf[0] = frame[0] as f64 * (1.0 - cfg.pre_emphasis);
        for n in 1..window_len {
            buf[n] = frame[n] as f64 - cfg.pre_emphasis * frame[n - 1] as f64;
        }
        for (v, w) in buf.iter_mut().zip(&hamming) {
            *v *= w;
        }
        let power = dsp::power_spectrum(&buf, fft_size);
        let log_energies: Vec<f64> = filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        let cepstra = dsp::dct2_orthonormal(&log_energies);
        let start = if cfg.include_c0 { 0 } else { 1 };
        rows.push(cepstra[start..start + cfg.dim()].to_vec());
    }
    Ok(FeatureMatrix {
        rows,
        num_coeffs: cfg.num_coeffs,
        source_id: signal.source_id.clone(),
    })
}

/// Debug/interop dump: one CSV row per frame, columns c1..cN (c0 first when
/// present).
pub fn write_csv(features: &FeatureMatrix, mut out: impl std::io::Write) -> std::io::Result<()> {
    for row in &features.rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_speech;

    fn tone(seconds: f64, freq: f64) -> PcmSignal {
        let n = (seconds * 8000.0) as usize;
        let samples = (0..n)
            .map(|i| (8000.0 * (std::f64::consts::TAU * freq * i as f64 / 8000.0).sin()) as i16)
            .collect();
        PcmSignal::new(samples, format!("tone-{freq}"))
    }

    #[test]
    fn seven_seconds_gives_698_frames() {
        let sig = synth_speech(7.0, 1);
        let f = extract_mfcc(&sig, &MfccConfig::default()).unwrap();
        assert_eq!(f.len(), 698);
        assert!(f.rows.iter().all(|r| r.len() == 19));
    }

    #[test]
    fn too_short_signal_errors() {
        let sig = PcmSignal::new(vec![0i16; 239], "short");
        assert!(matches!(
            extract_mfcc(&sig, &MfccConfig::default()),
            Err(FeatureError::SignalTooShort { .. })
        ));
    }

    #[test]
    fn all_zero_signal_yields_finite_values() {
        let sig = PcmSignal::new(vec![0i16; 8000], "zeros");
        let f = extract_mfcc(&sig, &MfccConfig::default()).unwrap();
        assert!(f.rows.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn different_tones_differ_in_c1() {
        let cfg = MfccConfig::with_num_coeffs(12);
        let a = extract_mfcc(&tone(0.5, 1000.0), &cfg).unwrap();
        let b = extract_mfcc(&tone(0.5, 2000.0), &cfg).unwrap();
        let c1a = a.rows[10][0];
        let c1b = b.rows[10][0];
        assert!((c1a - c1b).abs() > 0.5, "c1 {c1a} vs {c1b}");
    }

    #[test]
    fn filterbank_is_unimodal_with_increasing_centers() {
        let filters = mel_filterbank(26, 256, 8000);
        assert_eq!(filters.len(), 26);
        for f in &filters {
            assert_eq!(f.len(), 129);
            assert!(f.iter().all(|&w| (0.0..=1.0).contains(&w)));
            let peak = f
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            // nondecreasing up to the peak, nonincreasing after
            assert!(f[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(f[peak..].windows(2).all(|w| w[0] >= w[1]));
        }
        let edges = mel_filter_edges(26, 8000);
        let centers = &edges[1..27];
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        assert!(*centers.last().unwrap() <= 4000.0);
    }

    #[test]
    fn amplitude_scaling_leaves_higher_cepstra_alone() {
        // doubling an i16 signal is an exact scalar gain, so with c0
        // excluded the cepstra must not move
        let base = synth_speech(1.0, 6);
        let quiet = PcmSignal::new(base.samples.iter().map(|&s| s / 4).collect(), "q");
        let loud = PcmSignal::new(quiet.samples.iter().map(|&s| s * 2).collect(), "l");
        let cfg = MfccConfig::default();
        let a = extract_mfcc(&quiet, &cfg).unwrap();
        let b = extract_mfcc(&loud, &cfg).unwrap();
        let mut max_diff = 0.0f64;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (x, y) in ra.iter().zip(rb) {
                max_diff = max_diff.max((x - y).abs());
            }
        }
        assert!(max_diff < 1e-6, "higher cepstra moved by {max_diff}");
    }
}
