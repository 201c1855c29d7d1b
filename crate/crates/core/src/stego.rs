//! The covert channel: transcode each overt payload to a cheaper codec,
//! keep the declared payload type and payload size, and fill the freed tail
//! bytes with hidden data. Extraction recovers the steganogram and restores
//! an overt-coded stream (what a warden at the receiving side observes).
//!
//! Layout is fixed: covert bytes first, steganogram in the tail, the final
//! partial tail zero-padded. The hidden-data length travels out of band.

use thiserror::Error;

use crate::audio::PcmSignal;
use crate::codecs::{self, CodecError, CodecId, CodecState, FRAMES_PER_SECOND};
use crate::rtp::{self, RtpError, RtpPacket, RtpStream};

#[derive(Debug, Error)]
pub enum StegoError {
    #[error("covert codec {covert} does not fit under overt codec {overt}")]
    CovertNotSmaller { overt: CodecId, covert: CodecId },
    #[error("stream/codec mismatch: {0}")]
    StreamCodecMismatch(String),
    #[error("steganogram of {len} bytes exceeds stream capacity of {capacity}")]
    SteganogramTooLarge { len: usize, capacity: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Rtp(#[from] RtpError),
}

/// Steganogram placement inside the payload. Only one layout is supported;
/// spreading variants change nothing about capacity and are not modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    #[default]
    CovertFirstStegoTail,
}

/// An overt/covert codec pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StegoConfig {
    pub overt: CodecId,
    pub covert: CodecId,
    pub placement: Placement,
}

impl StegoConfig {
    pub fn new(overt: CodecId, covert: CodecId) -> Result<Self, StegoError> {
        let cfg = StegoConfig {
            overt,
            covert,
            placement: Placement::CovertFirstStegoTail,
        };
        cfg.capacity_per_packet()?;
        Ok(cfg)
    }

    fn capacity_per_packet(&self) -> Result<usize, StegoError> {
        let overt = codecs::codec_spec(self.overt).payload_bytes_per_frame;
        let covert = codecs::codec_spec(self.covert).payload_bytes_per_frame;
        if covert >= overt {
            return Err(StegoError::CovertNotSmaller {
                overt: self.overt,
                covert: self.covert,
            });
        }
        Ok(overt - covert)
    }
}

/// Free bytes per packet for a codec pair.
pub fn stego_capacity(cfg: &StegoConfig) -> Result<usize, StegoError> {
    cfg.capacity_per_packet()
}

/// Carrier stream with hidden data plus the channel bookkeeping.
#[derive(Debug, Clone)]
pub struct StegoResult {
    pub stream: RtpStream,
    pub bytes_embedded: usize,
    pub bandwidth_bps: u32,
}

fn check_overt_stream(stream: &RtpStream, cfg: &StegoConfig) -> Result<usize, StegoError> {
    let declared = stream
        .declared_codec()
        .map_err(|e| StegoError::StreamCodecMismatch(e.to_string()))?;
    if declared != cfg.overt {
        return Err(StegoError::StreamCodecMismatch(format!(
            "stream PT declares {declared}, config overt is {}",
            cfg.overt
        )));
    }
    let overt_len = codecs::codec_spec(cfg.overt).payload_bytes_per_frame;
    for p in &stream.packets {
        if p.payload.len() != overt_len {
            return Err(StegoError::StreamCodecMismatch(format!(
                "packet payload {} bytes, overt codec {} needs {overt_len}",
                p.payload.len(),
                cfg.overt
            )));
        }
    }
    Ok(overt_len)
}

/// Transcode an overt stream to the covert codec in place and fill the freed
/// space with the steganogram. Headers are byte-identical to the input and
/// payload sizes are unchanged.
pub fn embed(
    stream: &RtpStream,
    cfg: &StegoConfig,
    steganogram: &[u8],
) -> Result<StegoResult, StegoError> {
    let overt_len = check_overt_stream(stream, cfg)?;
    let covert_len = codecs::codec_spec(cfg.covert).payload_bytes_per_frame;
    let free = overt_len - covert_len;
    let capacity = free * stream.packets.len();
    if steganogram.len() > capacity {
        return Err(StegoError::SteganogramTooLarge {
            len: steganogram.len(),
            capacity,
        });
    }

    let mut overt_dec = CodecState::new(cfg.overt);
    let mut covert_enc = CodecState::new(cfg.covert);
    let mut hidden = steganogram.iter().copied();
    let mut packets = Vec::with_capacity(stream.packets.len());
    for p in &stream.packets {
        let pcm = codecs::decode(cfg.overt, &mut overt_dec, &p.payload)?;
        let covert = codecs::encode(cfg.covert, &mut covert_enc, &pcm)?;
        let mut payload = Vec::with_capacity(overt_len);
        payload.extend_from_slice(&covert);
        for _ in 0..free {
            payload.push(hidden.next().unwrap_or(0));
        }
        packets.push(RtpPacket {
            header: p.header.clone(),
            payload,
        });
    }
    Ok(StegoResult {
        stream: RtpStream::new(packets, stream.codec_pt_map.clone()),
        bytes_embedded: steganogram.len(),
        bandwidth_bps: (free * 8) as u32 * FRAMES_PER_SECOND,
    })
}

/// Recover the steganogram and restore an overt-coded stream from a carrier
/// produced by [`embed`] with the same configuration.
pub fn extract(
    stream: &RtpStream,
    cfg: &StegoConfig,
    expected_len: usize,
) -> Result<(Vec<u8>, RtpStream), StegoError> {
    let overt_len = check_overt_stream(stream, cfg)?;
    let covert_len = codecs::codec_spec(cfg.covert).payload_bytes_per_frame;
    let free = overt_len - covert_len;
    let capacity = free * stream.packets.len();
    if expected_len > capacity {
        return Err(StegoError::SteganogramTooLarge {
            len: expected_len,
            capacity,
        });
    }

    let mut covert_dec = CodecState::new(cfg.covert);
    let mut overt_enc = CodecState::new(cfg.overt);
    let mut steganogram = Vec::with_capacity(expected_len);
    let mut packets = Vec::with_capacity(stream.packets.len());
    for p in &stream.packets {
        let pcm = codecs::decode(cfg.covert, &mut covert_dec, &p.payload[..covert_len])?;
        steganogram.extend_from_slice(&p.payload[covert_len..]);
        let payload = codecs::encode(cfg.overt, &mut overt_enc, &pcm)?;
        packets.push(RtpPacket {
            header: p.header.clone(),
            payload,
        });
    }
    steganogram.truncate(expected_len);
    Ok((
        steganogram,
        RtpStream::new(packets, stream.codec_pt_map.clone()),
    ))
}

/// Where hidden communication starts and ends relative to the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Sender embeds, receiver extracts.
    S1,
    /// Sender embeds, an intermediate node extracts.
    S2,
    /// An intermediate node embeds, the receiver extracts.
    S3,
    /// Intermediate nodes embed and extract; endpoints are unaware.
    S4,
}

/// Warden observation points: near the sender, in the middle, near the
/// receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TapLocation {
    W1,
    W2,
    W3,
}

/// What the voice payload at a tap is actually coded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapCoding {
    /// Untouched overt stream.
    Overt,
    /// Covert codec plus hidden data, declared as overt.
    CovertHidden,
    /// Covert decoded and re-encoded with the overt codec after extraction.
    OvertRetranscoded,
}

/// One warden observation.
#[derive(Debug, Clone)]
pub struct ScenarioTap {
    pub location: TapLocation,
    pub coding: TapCoding,
    pub stream: RtpStream,
}

/// Stream coding seen at each tap per scenario.
pub fn scenario_codings(scenario: Scenario) -> [(TapLocation, TapCoding); 3] {
    use TapCoding::*;
    use TapLocation::*;
    match scenario {
        Scenario::S1 => [(W1, CovertHidden), (W2, CovertHidden), (W3, CovertHidden)],
        Scenario::S2 => [
            (W1, CovertHidden),
            (W2, CovertHidden),
            (W3, OvertRetranscoded),
        ],
        Scenario::S3 => [(W1, Overt), (W2, CovertHidden), (W3, CovertHidden)],
        Scenario::S4 => [(W1, Overt), (W2, CovertHidden), (W3, OvertRetranscoded)],
    }
}

/// Run a hidden-communication scenario over a carrier signal and collect the
/// streams a warden would capture at the requested taps.
#[allow(clippy::too_many_arguments)]
pub fn run_scenario(
    scenario: Scenario,
    cfg: &StegoConfig,
    signal: &PcmSignal,
    steganogram: &[u8],
    taps: &[TapLocation],
    payload_type: u8,
    ssrc: u32,
    seed: u64,
) -> Result<Vec<ScenarioTap>, StegoError> {
    let overt = rtp::packetize(signal, cfg.overt, payload_type, ssrc, seed)?;
    let embedded = embed(&overt, cfg, steganogram)?;
    let (_, restored) = extract(&embedded.stream, cfg, steganogram.len())?;

    let codings = scenario_codings(scenario);
    let mut out = Vec::with_capacity(taps.len());
    for &tap in taps {
        let (_, coding) = codings.iter().find(|(loc, _)| *loc == tap).unwrap();
        let stream = match coding {
            TapCoding::Overt => overt.clone(),
            TapCoding::CovertHidden => embedded.stream.clone(),
            TapCoding::OvertRetranscoded => restored.clone(),
        };
        out.push(ScenarioTap {
            location: tap,
            coding: *coding,
            stream,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_speech;
    use TapCoding::*;
    use TapLocation::*;

    fn pair(overt: CodecId, covert: CodecId) -> StegoConfig {
        StegoConfig::new(overt, covert).unwrap()
    }

    #[test]
    fn capacity_arithmetic() {
        assert_eq!(
            stego_capacity(&pair(CodecId::G711Ulaw, CodecId::G726_32)).unwrap(),
            80
        );
        assert_eq!(
            stego_capacity(&pair(CodecId::G711Ulaw, CodecId::Lpcvoc)).unwrap(),
            152
        );
        assert!(matches!(
            StegoConfig::new(CodecId::G726_32, CodecId::G711Ulaw),
            Err(StegoError::CovertNotSmaller { .. })
        ));
    }

    #[test]
    fn bandwidth_is_capacity_times_packet_rate() {
        let sig = synth_speech(1.0, 3);
        let stream = rtp::packetize(&sig, CodecId::G711Ulaw, 0, 1, 1).unwrap();
        let cfg = pair(CodecId::G711Ulaw, CodecId::G726_32);
        let r = embed(&stream, &cfg, b"hi").unwrap();
        assert_eq!(r.bandwidth_bps, 80 * 8 * 50);
        assert_eq!(r.bytes_embedded, 2);
    }

    #[test]
    fn headers_and_sizes_preserved_through_embed_and_extract() {
        let sig = synth_speech(1.0, 7);
        let stream = rtp::packetize(&sig, CodecId::G711Ulaw, 0, 99, 5).unwrap();
        let cfg = pair(CodecId::G711Ulaw, CodecId::G726_32);
        let message: Vec<u8> = (0..1000u32).map(|i| (i * 7 % 251) as u8).collect();
        let embedded = embed(&stream, &cfg, &message).unwrap();
        let (got, restored) = extract(&embedded.stream, &cfg, message.len()).unwrap();
        assert_eq!(got, message);
        for ((a, b), c) in stream
            .packets
            .iter()
            .zip(&embedded.stream.packets)
            .zip(&restored.packets)
        {
            assert_eq!(a.header.serialize(), b.header.serialize());
            assert_eq!(a.header.serialize(), c.header.serialize());
            assert_eq!(a.payload.len(), b.payload.len());
            assert_eq!(a.payload.len(), c.payload.len());
        }
        // lossy covert pass: the restored stream cannot be byte-identical
        assert!(stream
            .packets
            .iter()
            .zip(&restored.packets)
            .any(|(a, b)| a.payload != b.payload));
    }

    #[test]
    fn empty_steganogram_gives_zero_tails() {
        let sig = synth_speech(0.2, 2);
        let stream = rtp::packetize(&sig, CodecId::G711Ulaw, 0, 1, 1).unwrap();
        let cfg = pair(CodecId::G711Ulaw, CodecId::Lpcvoc);
        let r = embed(&stream, &cfg, &[]).unwrap();
        for p in &r.stream.packets {
            assert!(p.payload[8..].iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn oversized_steganogram_rejected() {
        let sig = synth_speech(0.2, 2);
        let stream = rtp::packetize(&sig, CodecId::G711Ulaw, 0, 1, 1).unwrap();
        let cfg = pair(CodecId::G711Ulaw, CodecId::G726_32);
        let too_big = vec![0u8; 80 * stream.packets.len() + 1];
        assert!(matches!(
            embed(&stream, &cfg, &too_big),
            Err(StegoError::SteganogramTooLarge { .. })
        ));
    }

    #[test]
    fn wrong_overt_codec_rejected() {
        let sig = synth_speech(0.2, 2);
        let stream = rtp::packetize(&sig, CodecId::G726_32, 96, 1, 1).unwrap();
        let cfg = pair(CodecId::G711Ulaw, CodecId::G726_32);
        assert!(matches!(
            embed(&stream, &cfg, &[]),
            Err(StegoError::StreamCodecMismatch(_))
        ));
    }

    #[test]
    fn scenario_tap_codings_follow_the_table() {
        assert_eq!(
            scenario_codings(Scenario::S4),
            [(W1, Overt), (W2, CovertHidden), (W3, OvertRetranscoded)]
        );
        assert_eq!(
            scenario_codings(Scenario::S1),
            [(W1, CovertHidden), (W2, CovertHidden), (W3, CovertHidden)]
        );
        assert_eq!(
            scenario_codings(Scenario::S2),
            [(W1, CovertHidden), (W2, CovertHidden), (W3, OvertRetranscoded)]
        );
        assert_eq!(
            scenario_codings(Scenario::S3),
            [(W1, Overt), (W2, CovertHidden), (W3, CovertHidden)]
        );
    }

    #[test]
    fn run_scenario_returns_requested_taps() {
        let sig = synth_speech(0.5, 9);
        let cfg = pair(CodecId::G711Ulaw, CodecId::G726_32);
        let taps = run_scenario(Scenario::S4, &cfg, &sig, b"secret", &[W1, W3], 0, 5, 4).unwrap();
        assert_eq!(taps.len(), 2);
        assert_eq!(taps[0].location, W1);
        assert_eq!(taps[0].coding, Overt);
        assert_eq!(taps[1].location, W3);
        assert_eq!(taps[1].coding, OvertRetranscoded);
    }
}
