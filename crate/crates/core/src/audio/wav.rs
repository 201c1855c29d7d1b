//! Canonical WAV reader/writer: RIFF little-endian, PCM tag 1, 16-bit,
//! mono, 8000 Hz. The writer always emits the 44-byte fmt+data layout; the
//! reader walks chunks so corpora with extra LIST/fact chunks still load.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioError, PcmSignal, SAMPLE_RATE};

struct WavFormat {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn parse_header(bytes: &[u8]) -> Result<(WavFormat, usize, usize), AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::NotWav);
    }
    let mut fmt: Option<WavFormat> = None;
    let mut data: Option<(usize, usize)> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(AudioError::NotWav);
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(AudioError::NotWav);
                }
                let le16 = |o: usize| u16::from_le_bytes(bytes[body + o..body + o + 2].try_into().unwrap());
                let le32 = |o: usize| u32::from_le_bytes(bytes[body + o..body + o + 4].try_into().unwrap());
                fmt = Some(WavFormat {
                    format_tag: le16(0),
                    channels: le16(2),
                    sample_rate: le32(4),
                    bits_per_sample: le16(14),
                });
            }
            b"data" => {
                data = Some((body, size));
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = body + size + (size & 1);
    }
    let fmt = fmt.ok_or(AudioError::NotWav)?;
    let data = data.ok_or(AudioError::NotWav)?;
    Ok((fmt, data.0, data.1))
}

fn check_format(fmt: &WavFormat) -> Result<(), AudioError> {
    if fmt.format_tag != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "format tag {}",
            fmt.format_tag
        )));
    }
    if fmt.channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels",
            fmt.channels
        )));
    }
    if fmt.sample_rate != SAMPLE_RATE {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} Hz",
            fmt.sample_rate
        )));
    }
    if fmt.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} bits per sample",
            fmt.bits_per_sample
        )));
    }
    Ok(())
}

/// Read a PCM 16-bit mono 8000 Hz WAV file. `source_id` is the file stem.
pub fn read_wav(path: impl AsRef<Path>) -> Result<PcmSignal, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (fmt, data_off, data_len) = parse_header(&bytes)?;
    check_format(&fmt)?;
    let n = data_len / 2;
    let samples = (0..n)
        .map(|i| i16::from_le_bytes(bytes[data_off + 2 * i..data_off + 2 * i + 2].try_into().unwrap()))
        .collect();
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "wav".to_string());
    Ok(PcmSignal::new(samples, source_id))
}

/// Duration in seconds without decoding the sample data.
pub fn wav_duration_seconds(path: impl AsRef<Path>) -> Result<f64, AudioError> {
    let bytes = fs::read(path.as_ref())?;
    let (fmt, _, data_len) = parse_header(&bytes)?;
    check_format(&fmt)?;
    Ok((data_len / 2) as f64 / SAMPLE_RATE as f64)
}

/// Write the canonical 44-byte-header WAV. Bit-exact inverse of [`read_wav`].
pub fn write_wav(signal: &PcmSignal, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let data_len = (signal.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in &signal.samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("transteg-wav-{}-{}", std::process::id(), name));
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let sig = PcmSignal::new((-400..400).map(|x| (x * 37) as i16).collect(), "rt");
        let p = tmp("rt.wav");
        write_wav(&sig, &p).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.samples, sig.samples);
        assert_eq!(back.sample_rate, 8000);
        assert_eq!(back.source_id, p.file_stem().unwrap().to_string_lossy());
        std::fs::remove_file(&p).unwrap();
    }

    #[test]
    fn one_second_has_8000_samples() {
        let sig = PcmSignal::new(vec![1i16; 8000], "sec");
        let p = tmp("sec.wav");
        write_wav(&sig, &p).unwrap();
        assert_eq!(read_wav(&p).unwrap().samples.len(), 8000);
        assert_eq!(wav_duration_seconds(&p).unwrap(), 1.0);
        std::fs::remove_file(&p).unwrap();
    }

    #[test]
    fn empty_signal_writes_valid_wav() {
        let sig = PcmSignal::new(vec![], "empty");
        let p = tmp("empty.wav");
        write_wav(&sig, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 44);
        assert_eq!(read_wav(&p).unwrap().samples.len(), 0);
        std::fs::remove_file(&p).unwrap();
    }

    #[test]
    fn writes_are_deterministic() {
        let sig = PcmSignal::new(vec![5i16; 123], "d");
        let p1 = tmp("d1.wav");
        let p2 = tmp("d2.wav");
        write_wav(&sig, &p1).unwrap();
        write_wav(&sig, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(&p1).unwrap();
        std::fs::remove_file(&p2).unwrap();
    }

    #[test]
    fn rejects_wrong_rate_and_channels() {
        // hand-build a 44.1 kHz stereo header
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&36u32.to_le_bytes());
        b.extend_from_slice(b"WAVE");
        b.extend_from_slice(b"fmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(&44100u32.to_le_bytes());
        b.extend_from_slice(&(44100u32 * 4).to_le_bytes());
        b.extend_from_slice(&4u16.to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&0u32.to_le_bytes());
        let p = tmp("bad.wav");
        std::fs::write(&p, &b).unwrap();
        assert!(matches!(read_wav(&p), Err(AudioError::UnsupportedFormat(_))));
        std::fs::remove_file(&p).unwrap();
    }

    #[test]
    fn rejects_non_wav() {
        let p = tmp("not.wav");
        std::fs::write(&p, b"definitely not riff").unwrap();
        assert!(matches!(read_wav(&p), Err(AudioError::NotWav)));
        std::fs::remove_file(&p).unwrap();
    }
}
