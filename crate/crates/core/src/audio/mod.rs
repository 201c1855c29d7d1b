//! PCM audio I/O, framing, corpus ingestion and synthetic speech generation.
//!
//! Everything in the toolkit runs on narrowband telephony audio: mono,
//! signed 16-bit, 8000 Hz. Other formats are rejected at ingestion rather
//! than resampled.

mod corpus;
mod synth;
mod wav;

pub use corpus::{ingest_corpus, CorpusEntry, CorpusManifest, Split};
pub use synth::{synth_speech, synth_speech_for_speaker, VoiceProfile};
pub use wav::{read_wav, wav_duration_seconds, write_wav};

use thiserror::Error;

/// Fixed toolkit sample rate in Hz.
pub const SAMPLE_RATE: u32 = 8000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("not a RIFF/WAVE file")]
    NotWav,
    #[error("unsupported WAV format: {0} (need PCM 16-bit mono 8000 Hz)")]
    UnsupportedFormat(String),
    #[error("signal too short: {samples} samples, need at least {needed}")]
    SignalTooShort { samples: usize, needed: usize },
    #[error("corpus directory contains no usable WAV files")]
    EmptyCorpus,
    #[error("corpus has a single speaker; cannot form a speaker-disjoint split")]
    SingleSpeaker,
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Mono 16-bit carrier voice at 8000 Hz.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcmSignal {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl PcmSignal {
    pub fn new(samples: Vec<i16>, source_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
            source_id: source_id.into(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of the first `seconds`, truncated down to whole samples.
    pub fn trimmed_to_seconds(&self, seconds: f64) -> PcmSignal {
        let n = ((seconds * self.sample_rate as f64).floor() as usize).min(self.samples.len());
        PcmSignal {
            samples: self.samples[..n].to_vec(),
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }

    /// Copy truncated down to a whole number of `frame_samples` frames.
    pub fn trimmed_to_frames(&self, frame_samples: usize) -> PcmSignal {
        let n = (self.samples.len() / frame_samples) * frame_samples;
        PcmSignal {
            samples: self.samples[..n].to_vec(),
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }
}

/// Mean energy of a sample block in dBFS (0 dBFS = full-scale square wave).
pub fn mean_energy_dbfs(samples: &[i16]) -> f64 {
    if samples.is_empty() {
        return f64::NEG_INFINITY;
    }
    let full = 32768.0f64 * 32768.0;
    let mean_sq = samples
        .iter()
        .map(|&s| {
            let v = s as f64;
            v * v
        })
        .sum::<f64>()
        / samples.len() as f64;
    if mean_sq == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (mean_sq / full).log10()
    }
}

/// Scale samples so the peak magnitude hits `target_dbfs` (≤ 0). No-op on silence.
pub fn peak_normalize(signal: &PcmSignal, target_dbfs: f64) -> PcmSignal {
    let peak = signal.samples.iter().map(|&s| (s as i32).abs()).max().unwrap_or(0);
    if peak == 0 {
        return signal.clone();
    }
    let target = 32767.0 * 10f64.powf(target_dbfs / 20.0);
    let gain = target / peak as f64;
    let samples = signal
        .samples
        .iter()
        .map(|&s| ((s as f64 * gain).round() as i32).clamp(-32768, 32767) as i16)
        .collect();
    PcmSignal {
        samples,
        sample_rate: signal.sample_rate,
        source_id: signal.source_id.clone(),
    }
}

/// Slice a signal into overlapping analysis windows.
///
/// Frame `i` covers samples `[i*step, i*step + window)`. A trailing partial
/// window is dropped, never padded, so the frame count is exactly
/// `floor((len - window) / step) + 1`.
pub fn frame_signal(
    signal: &PcmSignal,
    window_ms: u32,
    step_ms: u32,
) -> Result<Vec<&[i16]>, AudioError> {
    assert!(step_ms > 0 && window_ms >= step_ms, "window_ms >= step_ms > 0");
    let window = (window_ms as usize * SAMPLE_RATE as usize) / 1000;
    let step = (step_ms as usize * SAMPLE_RATE as usize) / 1000;
    frame_slice(&signal.samples, window, step)
}

/// Same as [`frame_signal`] but in sample units.
pub fn frame_slice(samples: &[i16], window: usize, step: usize) -> Result<Vec<&[i16]>, AudioError> {
    if samples.len() < window {
        return Err(AudioError::SignalTooShort {
            samples: samples.len(),
            needed: window,
        });
    }
    let count = (samples.len() - window) / step + 1;
    Ok((0..count).map(|i| &samples[i * step..i * step + window]).collect())
}
