//! RTP packet model (RFC 3550 fixed header, no CSRC/extensions), bit-exact
//! serialization, 20 ms packetization, and the ".rtps" stream file format
//! used in place of capture files:
//! magic "RTPS1", then per packet a 2-byte big-endian length followed by the
//! serialized packet.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::PcmSignal;
use crate::codecs::{self, CodecId, CodecState, FRAME_SAMPLES};

pub const RTP_VERSION: u8 = 2;
pub const HEADER_LEN: usize = 12;
/// Timestamp stride per 20 ms packet at 8 kHz.
pub const TIMESTAMP_STRIDE: u32 = 160;

const RTPS_MAGIC: &[u8; 5] = b"RTPS1";

#[derive(Debug, Error)]
pub enum RtpError {
    #[error("packet too short: {0} bytes, need at least 12")]
    TooShort(usize),
    #[error("bad RTP version {0}, expected 2")]
    BadVersion(u8),
    #[error("signal not frame aligned: {0} samples is not a multiple of 160")]
    NotFrameAligned(usize),
    #[error("inconsistent stream: {0}")]
    InconsistentStream(String),
    #[error("not an RTPS stream file")]
    BadMagic,
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] codecs::CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtpHeader {
    pub version: u8,
    pub padding: bool,
    pub extension: bool,
    pub csrc_count: u8,
    pub marker: bool,
    pub payload_type: u8,
    pub sequence_number: u16,
    pub timestamp: u32,
    pub ssrc: u32,
}

impl RtpHeader {
    pub fn serialize(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0] = (self.version << 6)
            | ((self.padding as u8) << 5)
            | ((self.extension as u8) << 4)
            | (self.csrc_count & 0x0F);
        out[1] = ((self.marker as u8) << 7) | (self.payload_type & 0x7F);
        out[2..4].copy_from_slice(&self.sequence_number.to_be_bytes());
        out[4..8].copy_from_slice(&self.timestamp.to_be_bytes());
        out[8..12].copy_from_slice(&self.ssrc.to_be_bytes());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtpPacket {
    pub header: RtpHeader,
    pub payload: Vec<u8>,
}

impl RtpPacket {
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.serialize());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<RtpPacket, RtpError> {
        if bytes.len() < HEADER_LEN {
            return Err(RtpError::TooShort(bytes.len()));
        }
        let version = bytes[0] >> 6;
        if version != RTP_VERSION {
            return Err(RtpError::BadVersion(version));
        }
        let header = RtpHeader {
            version,
            padding: bytes[0] & 0x20 != 0,
            extension: bytes[0] & 0x10 != 0,
            csrc_count: bytes[0] & 0x0F,
            marker: bytes[1] & 0x80 != 0,
            payload_type: bytes[1] & 0x7F,
            sequence_number: u16::from_be_bytes(bytes[2..4].try_into().unwrap()),
            timestamp: u32::from_be_bytes(bytes[4..8].try_into().unwrap()),
            ssrc: u32::from_be_bytes(bytes[8..12].try_into().unwrap()),
        };
        Ok(RtpPacket {
            header,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

/// An ordered voice stream plus the payload-type table the warden uses to
/// look up the codec a PT code declares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtpStream {
    pub packets: Vec<RtpPacket>,
    pub codec_pt_map: BTreeMap<u8, CodecId>,
}

impl RtpStream {
    pub fn new(packets: Vec<RtpPacket>, codec_pt_map: BTreeMap<u8, CodecId>) -> Self {
        RtpStream {
            packets,
            codec_pt_map,
        }
    }

    /// The single payload type of the stream, if it is consistent.
    pub fn payload_type(&self) -> Result<u8, RtpError> {
        let first = self
            .packets
            .first()
            .ok_or_else(|| RtpError::InconsistentStream("empty stream".into()))?
            .header
            .payload_type;
        if self.packets.iter().any(|p| p.header.payload_type != first) {
            return Err(RtpError::InconsistentStream("mixed payload types".into()));
        }
        Ok(first)
    }

    /// Codec declared by the stream's PT.
    pub fn declared_codec(&self) -> Result<CodecId, RtpError> {
        let pt = self.payload_type()?;
        self.codec_pt_map.get(&pt).copied().ok_or_else(|| {
            RtpError::InconsistentStream(format!("payload type {pt} not in codec map"))
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.packets.len() as f64 * 0.02
    }
}

/// Encode a frame-aligned signal into one RTP packet per 20 ms frame.
///
/// The initial sequence number and timestamp are drawn deterministically
/// from `seed`; successive packets stride by 1 and 160.
pub fn packetize(
    signal: &PcmSignal,
    codec: CodecId,
    payload_type: u8,
    ssrc: u32,
    seed: u64,
) -> Result<RtpStream, RtpError> {
    if signal.samples.len() % FRAME_SAMPLES != 0 {
        return Err(RtpError::NotFrameAligned(signal.samples.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq0: u16 = rng.random();
    let ts0: u32 = rng.random();

    let mut state = CodecState::new(codec);
    let mut packets = Vec::with_capacity(signal.samples.len() / FRAME_SAMPLES);
    for (i, frame) in signal.samples.chunks(FRAME_SAMPLES).enumerate() {
        let payload = codecs::encode(codec, &mut state, frame)?;
        packets.push(RtpPacket {
            header: RtpHeader {
                version: RTP_VERSION,
                padding: false,
                extension: false,
                csrc_count: 0,
                marker: i == 0,
                payload_type,
                sequence_number: seq0.wrapping_add(i as u16),
                timestamp: ts0.wrapping_add(i as u32 * TIMESTAMP_STRIDE),
                ssrc,
            },
            payload,
        });
    }
    let mut codec_pt_map = BTreeMap::new();
    codec_pt_map.insert(payload_type, codec);
    Ok(RtpStream::new(packets, codec_pt_map))
}

/// Decode a stream with a fresh codec state, concatenating frames in
/// sequence order.
pub fn depacketize(stream: &RtpStream) -> Result<PcmSignal, RtpError> {
    let codec = stream.declared_codec()?;
    let expected = codecs::codec_spec(codec).payload_bytes_per_frame;
    for p in &stream.packets {
        if p.payload.len() != expected {
            return Err(RtpError::InconsistentStream(format!(
                "payload of {} bytes under PT declaring {codec} (expected {expected})",
                p.payload.len()
            )));
        }
    }

    // order by sequence number relative to the first packet (mod 2^16)
    let base = stream.packets[0].header.sequence_number;
    let mut order: Vec<usize> = (0..stream.packets.len()).collect();
    order.sort_by_key(|&i| stream.packets[i].header.sequence_number.wrapping_sub(base));

    let mut state = CodecState::new(codec);
    let mut samples = Vec::with_capacity(stream.packets.len() * FRAME_SAMPLES);
    for idx in order {
        samples.extend(codecs::decode(codec, &mut state, &stream.packets[idx].payload)?);
    }
    let ssrc = stream.packets[0].header.ssrc;
    Ok(PcmSignal::new(samples, format!("ssrc-{ssrc:08x}")))
}

/// Write a stream to the ".rtps" container.
pub fn write_rtps(stream: &RtpStream, path: impl AsRef<Path>) -> Result<(), RtpError> {
    let mut out = Vec::new();
    out.extend_from_slice(RTPS_MAGIC);
    for p in &stream.packets {
        let bytes = p.serialize();
        let len = u16::try_from(bytes.len())
            .map_err(|_| RtpError::InconsistentStream("packet over 65535 bytes".into()))?;
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read packets from a ".rtps" file. The codec map is not stored in the
/// container; the caller supplies what the warden believes the PT means.
pub fn read_rtps(
    path: impl AsRef<Path>,
    codec_pt_map: BTreeMap<u8, CodecId>,
) -> Result<RtpStream, RtpError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < RTPS_MAGIC.len() || &bytes[..RTPS_MAGIC.len()] != RTPS_MAGIC {
        return Err(RtpError::BadMagic);
    }
    let mut packets = Vec::new();
    let mut pos = RTPS_MAGIC.len();
    while pos < bytes.len() {
        if pos + 2 > bytes.len() {
            return Err(RtpError::BadMagic);
        }
        let len = u16::from_be_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        if pos + len > bytes.len() {
            return Err(RtpError::BadMagic);
        }
        packets.push(RtpPacket::parse(&bytes[pos..pos + len])?);
        pos += len;
    }
    Ok(RtpStream::new(packets, codec_pt_map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_speech;

    #[test]
    fn minimal_packet_is_12_bytes() {
        let p = RtpPacket {
            header: RtpHeader {
                version: 2,
                padding: false,
                extension: false,
                csrc_count: 0,
                marker: false,
                payload_type: 0,
                sequence_number: 0,
                timestamp: 0,
                ssrc: 0,
            },
            payload: vec![],
        };
        assert_eq!(p.serialize().len(), 12);
        assert_eq!(RtpPacket::parse(&p.serialize()).unwrap(), p);
    }

    #[test]
    fn version_bits_checked() {
        let mut bytes = vec![0u8; 12];
        bytes[0] = 0b0100_0000; // version 1
        assert!(matches!(RtpPacket::parse(&bytes), Err(RtpError::BadVersion(1))));
        assert!(matches!(RtpPacket::parse(&bytes[..5]), Err(RtpError::TooShort(5))));
    }

    #[test]
    fn seven_seconds_is_350_packets() {
        let sig = synth_speech(7.0, 11);
        let stream = packetize(&sig, CodecId::G711Ulaw, 0, 0xABCD, 3).unwrap();
        assert_eq!(stream.packets.len(), 350);
        assert!(stream.packets.iter().all(|p| p.payload.len() == 160));
        let back = depacketize(&stream).unwrap();
        assert_eq!(back.samples.len(), 56000);
    }

    #[test]
    fn header_strides_are_exact() {
        let sig = synth_speech(0.5, 2).trimmed_to_frames(160);
        let stream = packetize(&sig, CodecId::G726_32, 96, 7, 9).unwrap();
        for w in stream.packets.windows(2) {
            let a = &w[0].header;
            let b = &w[1].header;
            assert_eq!(b.sequence_number, a.sequence_number.wrapping_add(1));
            assert_eq!(b.timestamp, a.timestamp.wrapping_add(160));
            assert_eq!(b.ssrc, a.ssrc);
        }
    }

    #[test]
    fn same_seed_same_headers() {
        let sig = synth_speech(0.3, 4).trimmed_to_frames(160);
        let a = packetize(&sig, CodecId::G711Alaw, 8, 1, 42).unwrap();
        let b = packetize(&sig, CodecId::G711Alaw, 8, 1, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unaligned_signal_rejected() {
        let sig = PcmSignal::new(vec![0i16; 161], "x");
        assert!(matches!(
            packetize(&sig, CodecId::G711Ulaw, 0, 1, 1),
            Err(RtpError::NotFrameAligned(161))
        ));
    }

    #[test]
    fn empty_stream_is_inconsistent() {
        let stream = RtpStream::new(vec![], BTreeMap::new());
        assert!(matches!(
            depacketize(&stream),
            Err(RtpError::InconsistentStream(_))
        ));
    }

    #[test]
    fn ulaw_depacketize_stays_within_quantization_error() {
        let sig = synth_speech(0.4, 8).trimmed_to_frames(160);
        let stream = packetize(&sig, CodecId::G711Ulaw, 0, 1, 1).unwrap();
        let back = depacketize(&stream).unwrap();
        // worst-case mu-law error: half of the top segment step, plus the
        // clip region at the extremes
        for (a, b) in sig.samples.iter().zip(&back.samples) {
            assert!((*a as i32 - *b as i32).abs() <= 644, "{a} vs {b}");
        }
    }

    #[test]
    fn rtps_file_round_trip() {
        let sig = synth_speech(0.2, 5).trimmed_to_frames(160);
        let stream = packetize(&sig, CodecId::Lpcvoc, 97, 12, 6).unwrap();
        let path = std::env::temp_dir().join(format!("transteg-{}.rtps", std::process::id()));
        write_rtps(&stream, &path).unwrap();
        let back = read_rtps(&path, stream.codec_pt_map.clone()).unwrap();
        assert_eq!(back, stream);
        std::fs::remove_file(&path).unwrap();
    }
}
