//! Speech codec menu behind one contract: 20 ms frames of 160 samples in,
//! a fixed number of payload bytes out. The byte count per frame is what
//! creates (or fills) the free space the covert channel lives in.
//!
//! Payload byte order: G.711 one byte per sample; G.726 code words packed
//! LSB-first within bytes; the LPC vocoder packs its 64-bit frame MSB-first.

pub mod g711;
pub mod g726;
pub mod lpcvoc;

use thiserror::Error;

use crate::audio::PcmSignal;
use g726::{G726Rate, G726State};

/// Samples per 20 ms frame at 8 kHz.
pub const FRAME_SAMPLES: usize = 160;
/// Frame duration shared by every codec here.
pub const FRAME_MS: u32 = 20;
/// Packets (frames) per second.
pub const FRAMES_PER_SECOND: u32 = 50;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("wrong frame length: expected {expected} samples, got {got}")]
    WrongFrameLength { expected: usize, got: usize },
    #[error("wrong payload length: expected {expected} bytes, got {got}")]
    WrongPayloadLength { expected: usize, got: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("unknown codec name: {0}")]
    UnknownCodec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodecId {
    G711Ulaw,
    G711Alaw,
    G726_40,
    G726_32,
    G726_24,
    G726_16,
    Lpcvoc,
}

impl CodecId {
    pub const ALL: [CodecId; 7] = [
        CodecId::G711Ulaw,
        CodecId::G711Alaw,
        CodecId::G726_40,
        CodecId::G726_32,
        CodecId::G726_24,
        CodecId::G726_16,
        CodecId::Lpcvoc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CodecId::G711Ulaw => "g711u",
            CodecId::G711Alaw => "g711a",
            CodecId::G726_40 => "g726-40",
            CodecId::G726_32 => "g726-32",
            CodecId::G726_24 => "g726-24",
            CodecId::G726_16 => "g726-16",
            CodecId::Lpcvoc => "lpcvoc",
        }
    }

    pub fn from_name(name: &str) -> Result<CodecId, CodecError> {
        CodecId::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| CodecError::UnknownCodec(name.to_string()))
    }

    fn g726_rate(self) -> Option<G726Rate> {
        match self {
            CodecId::G726_40 => Some(G726Rate::R40),
            CodecId::G726_32 => Some(G726Rate::R32),
            CodecId::G726_24 => Some(G726Rate::R24),
            CodecId::G726_16 => Some(G726Rate::R16),
            _ => None,
        }
    }
}

impl std::fmt::Display for CodecId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Static per-codec facts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecSpec {
    pub id: CodecId,
    pub frame_ms: u32,
    pub payload_bytes_per_frame: usize,
    pub bitrate_bps: u32,
    pub has_structural_fields: bool,
}

/// Constant table lookup; `payload_bytes_per_frame` is exactly
/// `bitrate * frame_ms / 8` for every entry.
pub fn codec_spec(id: CodecId) -> CodecSpec {
    let (bitrate_bps, structural) = match id {
        CodecId::G711Ulaw | CodecId::G711Alaw => (64_000, false),
        CodecId::G726_40 => (40_000, false),
        CodecId::G726_32 => (32_000, false),
        CodecId::G726_24 => (24_000, false),
        CodecId::G726_16 => (16_000, false),
        CodecId::Lpcvoc => (3_200, true),
    };
    CodecSpec {
        id,
        frame_ms: FRAME_MS,
        payload_bytes_per_frame: (bitrate_bps as usize * FRAME_MS as usize) / 8 / 1000,
        bitrate_bps,
        has_structural_fields: structural,
    }
}

/// Codec-specific predictor/adaptation state carried across frames.
///
/// G.711 and the LPC vocoder are stateless; G.726 carries its adaptive
/// quantizer and predictor registers. A state value belongs to one stream
/// direction and must not be shared.
#[derive(Debug, Clone)]
pub struct CodecState {
    codec: CodecId,
    g726: Option<G726State>,
}

impl CodecState {
    pub fn new(codec: CodecId) -> Self {
        CodecState {
            codec,
            g726: codec.g726_rate().map(|_| G726State::new()),
        }
    }

    pub fn codec(&self) -> CodecId {
        self.codec
    }

    /// Back to the codec's defined initial state.
    pub fn reset(&mut self) {
        *self = CodecState::new(self.codec);
    }
}

/// Encode exactly one 20 ms frame. Output length always equals
/// `codec_spec(codec).payload_bytes_per_frame`.
pub fn encode(
    codec: CodecId,
    state: &mut CodecState,
    pcm: &[i16],
) -> Result<Vec<u8>, CodecError> {
    assert_eq!(state.codec, codec, "codec state belongs to {}", state.codec);
    if pcm.len() != FRAME_SAMPLES {
        return Err(CodecError::WrongFrameLength {
            expected: FRAME_SAMPLES,
            got: pcm.len(),
        });
    }
    let payload = match codec {
        CodecId::G711Ulaw => pcm.iter().map(|&s| g711::ulaw_encode(s)).collect(),
        CodecId::G711Alaw => pcm.iter().map(|&s| g711::alaw_encode(s)).collect(),
        CodecId::G726_40 | CodecId::G726_32 | CodecId::G726_24 | CodecId::G726_16 => {
            let rate = codec.g726_rate().unwrap();
            g726::encode_block(state.g726.as_mut().unwrap(), rate, pcm)
        }
        CodecId::Lpcvoc => lpcvoc::encode_frame(pcm).to_vec(),
    };
    debug_assert_eq!(payload.len(), codec_spec(codec).payload_bytes_per_frame);
    Ok(payload)
}

/// Decode one payload back to a 20 ms frame of 160 samples.
pub fn decode(
    codec: CodecId,
    state: &mut CodecState,
    payload: &[u8],
) -> Result<Vec<i16>, CodecError> {
    assert_eq!(state.codec, codec, "codec state belongs to {}", state.codec);
    let expected = codec_spec(codec).payload_bytes_per_frame;
    if payload.len() != expected {
        return Err(CodecError::WrongPayloadLength {
            expected,
            got: payload.len(),
        });
    }
    let pcm = match codec {
        CodecId::G711Ulaw => payload.iter().map(|&b| g711::ulaw_decode(b)).collect(),
        CodecId::G711Alaw => payload.iter().map(|&b| g711::alaw_decode(b)).collect(),
        CodecId::G726_40 | CodecId::G726_32 | CodecId::G726_24 | CodecId::G726_16 => {
            let rate = codec.g726_rate().unwrap();
            g726::decode_block(state.g726.as_mut().unwrap(), rate, payload)
        }
        CodecId::Lpcvoc => lpcvoc::decode_frame(payload)?.to_vec(),
    };
    Ok(pcm)
}

/// Encode+decode a whole frame-aligned signal with continuous state; the
/// "what the far end hears" transform for one codec pass.
pub fn transcode_signal(codec: CodecId, signal: &PcmSignal) -> Result<PcmSignal, CodecError> {
    if signal.samples.len() % FRAME_SAMPLES != 0 {
        return Err(CodecError::WrongFrameLength {
            expected: FRAME_SAMPLES,
            got: signal.samples.len() % FRAME_SAMPLES,
        });
    }
    let mut enc = CodecState::new(codec);
    let mut dec = CodecState::new(codec);
    let mut out = Vec::with_capacity(signal.samples.len());
    for frame in signal.samples.chunks(FRAME_SAMPLES) {
        let payload = encode(codec, &mut enc, frame)?;
        out.extend(decode(codec, &mut dec, &payload)?);
    }
    Ok(PcmSignal {
        samples: out,
        sample_rate: signal.sample_rate,
        source_id: signal.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_table_sizes() {
        assert_eq!(codec_spec(CodecId::G711Ulaw).payload_bytes_per_frame, 160);
        assert_eq!(codec_spec(CodecId::G711Ulaw).bitrate_bps, 64_000);
        assert_eq!(codec_spec(CodecId::G726_40).payload_bytes_per_frame, 100);
        assert_eq!(codec_spec(CodecId::G726_32).payload_bytes_per_frame, 80);
        assert_eq!(codec_spec(CodecId::G726_24).payload_bytes_per_frame, 60);
        assert_eq!(codec_spec(CodecId::G726_16).payload_bytes_per_frame, 40);
        assert_eq!(codec_spec(CodecId::Lpcvoc).payload_bytes_per_frame, 8);
        assert_eq!(codec_spec(CodecId::Lpcvoc).bitrate_bps, 3_200);
        for c in CodecId::ALL {
            let s = codec_spec(c);
            assert_eq!(
                s.payload_bytes_per_frame,
                (s.bitrate_bps as usize * s.frame_ms as usize) / 8000
            );
        }
    }

    #[test]
    fn payload_length_exactness_all_codecs() {
        let frame: Vec<i16> = (0..160).map(|n| ((n * 321) % 9000) as i16 - 4500).collect();
        for c in CodecId::ALL {
            let mut st = CodecState::new(c);
            let payload = encode(c, &mut st, &frame).unwrap();
            assert_eq!(payload.len(), codec_spec(c).payload_bytes_per_frame, "{c}");
        }
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let mut st = CodecState::new(CodecId::G711Ulaw);
        assert!(matches!(
            encode(CodecId::G711Ulaw, &mut st, &[0i16; 159]),
            Err(CodecError::WrongFrameLength { expected: 160, got: 159 })
        ));
        assert!(matches!(
            decode(CodecId::G726_32, &mut CodecState::new(CodecId::G726_32), &[0u8; 79]),
            Err(CodecError::WrongPayloadLength { expected: 80, got: 79 })
        ));
    }

    #[test]
    fn names_round_trip() {
        for c in CodecId::ALL {
            assert_eq!(CodecId::from_name(c.name()).unwrap(), c);
        }
        assert!(CodecId::from_name("speex").is_err());
    }

    #[test]
    fn decoded_samples_in_legal_range_for_noise_payloads() {
        // any payload bytes must decode without panicking, sync aside
        let mut seed = 7u64;
        for c in CodecId::ALL {
            if c == CodecId::Lpcvoc {
                continue;
            }
            let len = codec_spec(c).payload_bytes_per_frame;
            let payload: Vec<u8> = (0..len)
                .map(|_| {
                    seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (seed >> 33) as u8
                })
                .collect();
            let mut st = CodecState::new(c);
            let out = decode(c, &mut st, &payload).unwrap();
            assert_eq!(out.len(), 160);
        }
    }
}
