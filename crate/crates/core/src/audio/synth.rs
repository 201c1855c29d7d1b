//! Deterministic speech-like signal generator.
//!
//! Stands in for licensed speech corpora: concatenated 100-300 ms "phones",
//! each an order-8 all-pole resonator (four formant-like pole pairs) excited
//! by a pitch-period pulse train (voiced) or white noise (unvoiced), with an
//! energy contour and silence gaps. Not speech, but close enough in its
//! short-term spectral statistics to exercise codecs, VAD and steganalysis.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PcmSignal, SAMPLE_RATE};

/// Per-speaker voice characteristics, derived deterministically from a seed.
///
/// Utterances synthesized from the same profile share a pitch range, formant
/// placement tendency and loudness, so a synthetic corpus has distinguishable
/// "speakers" and speaker-disjoint splits mean something.
#[derive(Debug, Clone)]
pub struct VoiceProfile {
    pitch_lo_hz: f64,
    pitch_hi_hz: f64,
    formant_scale: f64,
    voiced_prob: f64,
    base_rms_dbfs: f64,
}

const PROFILE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl VoiceProfile {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PROFILE_SEED_SALT);
        let lo: f64 = rng.random_range(80.0..150.0);
        let hi = (lo * rng.random_range(1.3..1.8)).min(250.0);
        VoiceProfile {
            pitch_lo_hz: lo,
            pitch_hi_hz: hi,
            formant_scale: rng.random_range(0.88..1.10),
            voiced_prob: rng.random_range(0.68..0.82),
            base_rms_dbfs: rng.random_range(-28.0..-20.0),
        }
    }
}

/// Deterministic speech-like signal of `duration_s` seconds.
///
/// The voice profile and the phone sequence are both drawn from `seed`, so
/// equal `(duration, seed)` pairs give bit-identical output.
pub fn synth_speech(duration_s: f64, seed: u64) -> PcmSignal {
    assert!(duration_s > 0.0, "duration must be positive");
    let profile = VoiceProfile::from_seed(seed);
    let mut sig = synth_speech_for_speaker(&profile, duration_s, seed.wrapping_add(1));
    sig.source_id = format!("synth-{seed}");
    sig
}

/// Synthesize one utterance of a given speaker.
///
/// `utterance_seed` drives the phone sequence; the profile fixes the voice.
pub fn synth_speech_for_speaker(
    profile: &VoiceProfile,
    duration_s: f64,
    utterance_seed: u64,
) -> PcmSignal {
    assert!(duration_s > 0.0, "duration must be positive");
    let total = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(utterance_seed);
    let mut samples: Vec<i16> = Vec::with_capacity(total + 4000);
    while samples.len() < total {
        let phone_ms = rng.random_range(100.0..300.0);
        let phone_len = (phone_ms * SAMPLE_RATE as f64 / 1000.0) as usize;
        if rng.random_range(0.0..1.0) < 0.10 {
            samples.extend(std::iter::repeat(0i16).take(phone_len));
            continue;
        }
        let voiced = rng.random_range(0.0..1.0) < profile.voiced_prob;
        let phone = synth_phone(profile, &mut rng, phone_len, voiced);
        samples.extend_from_slice(&phone);
    }
    samples.truncate(total);
    PcmSignal::new(samples, format!("utt-{utterance_seed}"))
}

fn synth_phone(profile: &VoiceProfile, rng: &mut ChaCha8Rng, len: usize, voiced: bool) -> Vec<i16> {
    // four formant-like resonances spanning the telephony band
    let bands = [(250.0, 800.0), (900.0, 1800.0), (1900.0, 2850.0), (2950.0, 3700.0)];
    let mut sections = Vec::with_capacity(4);
    for (lo, hi) in bands {
        let f = (rng.random_range(lo..hi) * profile.formant_scale).min(3900.0);
        let bw = rng.random_range(80.0..300.0);
        sections.push(Resonator::new(f, bw));
    }

    let mut excitation = vec![0.0f64; len];
    if voiced {
        let f0 = rng.random_range(profile.pitch_lo_hz..profile.pitch_hi_hz);
        let mut pos = 0.0f64;
        while (pos as usize) < len {
            excitation[pos as usize] = 1.0;
            let jitter = rng.random_range(0.99..1.01);
            pos += SAMPLE_RATE as f64 / f0 * jitter;
        }
        // glottal-style rolloff so the voiced spectrum tilts down with
        // frequency like real speech
        for coef in [0.7, 0.65] {
            let mut prev = 0.0;
            for e in excitation.iter_mut() {
                prev = *e + coef * prev;
                *e = prev;
            }
        }
    } else {
        // fricative-like: white noise with a mild high-pass character
        let mut prev = 0.0;
        for e in excitation.iter_mut() {
            let n: f64 = rng.random_range(-1.0..1.0);
            *e = n - 0.4 * prev;
            prev = n;
        }
    }

    let mut out = excitation;
    for sec in sections.iter_mut() {
        for v in out.iter_mut() {
            *v = sec.tick(*v);
        }
    }

    // slow intra-phone loudness modulation plus raised-cosine edges;
    // unvoiced phones sit well below vowels like real fricatives do
    let mut target_dbfs = profile.base_rms_dbfs + rng.random_range(-4.0..4.0);
    if !voiced {
        target_dbfs -= 12.0;
    }
    let target_rms = 32768.0 * 10f64.powf(target_dbfs / 20.0);
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    let gain = if rms > 0.0 { target_rms / rms } else { 0.0 };
    let mod_rate = rng.random_range(1.5..4.0);
    let mod_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let edge = (len / 8).max(1).min(80);
    for (n, v) in out.iter_mut().enumerate() {
        let t = n as f64 / SAMPLE_RATE as f64;
        let m = 1.0 + 0.3 * (std::f64::consts::TAU * mod_rate * t + mod_phase).sin();
        let mut w = 1.0;
        if n < edge {
            w = 0.5 - 0.5 * (std::f64::consts::PI * n as f64 / edge as f64).cos();
        } else if n + edge >= len {
            let k = len - 1 - n;
            w = 0.5 - 0.5 * (std::f64::consts::PI * k as f64 / edge as f64).cos();
        }
        *v *= gain * m * w;
    }

    // keep well clear of clipping
    let peak = out.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let limit = 0.9 * 32767.0;
    let safety = if peak > limit { limit / peak } else { 1.0 };
    out.iter()
        .map(|&v| ((v * safety).round() as i32).clamp(-32768, 32767) as i16)
        .collect()
}

/// Two-pole resonator `1 / (1 - 2 r cos(theta) z^-1 + r^2 z^-2)`.
struct Resonator {
    c1: f64,
    c2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(center_hz: f64, bandwidth_hz: f64) -> Self {
        let r = (-std::f64::consts::PI * bandwidth_hz / SAMPLE_RATE as f64).exp();
        let theta = std::f64::consts::TAU * center_hz / SAMPLE_RATE as f64;
        Resonator {
            c1: 2.0 * r * theta.cos(),
            c2: -r * r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = x + self.c1 * self.y1 + self.c2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::mean_energy_dbfs;

    #[test]
    fn same_seed_same_samples() {
        let a = synth_speech(1.5, 42);
        let b = synth_speech(1.5, 42);
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn different_seeds_differ() {
        let a = synth_speech(1.0, 1);
        let b = synth_speech(1.0, 2);
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn duration_is_exact() {
        assert_eq!(synth_speech(7.0, 3).samples.len(), 56000);
        assert_eq!(synth_speech(0.26, 3).samples.len(), 2080);
    }

    #[test]
    fn mean_energy_in_band_across_seeds() {
        for seed in 0..25u64 {
            let s = synth_speech(2.0, seed);
            let e = mean_energy_dbfs(&s.samples);
            assert!((-40.0..=-10.0).contains(&e), "seed {seed}: {e} dBFS");
        }
    }

    #[test]
    fn speaker_profile_is_deterministic() {
        let p = VoiceProfile::from_seed(9);
        let a = synth_speech_for_speaker(&p, 1.0, 77);
        let b = synth_speech_for_speaker(&VoiceProfile::from_seed(9), 1.0, 77);
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn long_term_spectrum_is_nonflat_and_time_varying() {
        let s = synth_speech(4.0, 5);
        let window = crate::dsp::hamming(256);
        let avg_spectrum = |samples: &[i16]| {
            let mut acc = vec![0.0f64; 129];
            let mut frames = 0;
            for chunk in samples.chunks_exact(256) {
                let f: Vec<f64> = chunk
                    .iter()
                    .zip(&window)
                    .map(|(&x, w)| x as f64 * w)
                    .collect();
                for (a, p) in acc.iter_mut().zip(crate::dsp::power_spectrum(&f, 256)) {
                    *a += p;
                }
                frames += 1;
            }
            for a in acc.iter_mut() {
                *a /= frames as f64;
            }
            acc
        };
        let half = s.samples.len() / 2;
        let first = avg_spectrum(&s.samples[..half]);
        let second = avg_spectrum(&s.samples[half..]);

        // non-flat: geometric mean well below arithmetic mean
        let eps = 1e-12;
        let ln_mean = first.iter().map(|&p| (p + eps).ln()).sum::<f64>() / first.len() as f64;
        let mean = first.iter().sum::<f64>() / first.len() as f64;
        let flatness = ln_mean.exp() / mean;
        assert!(flatness < 0.5, "long-term spectrum too flat: {flatness}");

        // time-varying: the two halves have visibly different spectra
        let num: f64 = first
            .iter()
            .zip(&second)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = first.iter().map(|a| a.powi(2)).sum::<f64>().sqrt();
        assert!(num / den > 0.05, "spectrum not time-varying: {}", num / den);
    }
}
