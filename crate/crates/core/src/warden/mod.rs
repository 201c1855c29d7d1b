//! The warden's detection toolbox: payload comparison for distributed taps,
//! codec validity tests and VAD for covert-coded traffic, the MFCC+GMM
//! statistical detector for the re-transcoded single-tap case, and a
//! dispatcher that routes each warden case to its method.
//!
//! Privacy constraint: no decoded PCM ever leaves these functions. Every
//! detector returns a verdict with a score and a short text detail only.

pub mod vad;

use thiserror::Error;

use crate::codecs::{self, CodecId};
use crate::gmm::{self, GmmError, GmmModel};
use crate::mfcc::{self, FeatureError, MfccConfig};
use crate::rtp::{depacketize, RtpError, RtpPacket, RtpStream};
use crate::stego::{Scenario, TapLocation};

#[derive(Debug, Error)]
pub enum WardenError {
    #[error("streams not aligned: {0}")]
    UnalignedStreams(String),
    #[error("payload type {0} not in the warden's codec map")]
    UnknownPayloadType(u8),
    #[error("stream too short: {got_ms} ms, statistical detection needs {needed_ms} ms")]
    TooShort { got_ms: u64, needed_ms: u64 },
    #[error("taps do not satisfy case {case}: {detail}")]
    TapsMismatch { case: &'static str, detail: String },
    #[error(transparent)]
    Rtp(#[from] RtpError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMethod {
    PayloadCompare,
    ValidityTest,
    VadCheck,
    Statistical,
}

impl DetectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            DetectionMethod::PayloadCompare => "PAYLOAD_COMPARE",
            DetectionMethod::ValidityTest => "VALIDITY_TEST",
            DetectionMethod::VadCheck => "VAD_CHECK",
            DetectionMethod::Statistical => "STATISTICAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    TranstegDetected,
    NoEvidence,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::TranstegDetected => "TRANSTEG_DETECTED",
            Verdict::NoEvidence => "NO_EVIDENCE",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectionVerdict {
    pub method: DetectionMethod,
    pub verdict: Verdict,
    pub score: f64,
    pub detail: String,
}

impl DetectionVerdict {
    /// CSV row: case, method, verdict, score, detail.
    pub fn to_csv_row(&self, case: &str) -> String {
        format!(
            "{case},{},{},{:.6},{}",
            self.method.name(),
            self.verdict.name(),
            self.score,
            self.detail.replace(',', ";")
        )
    }
}

/// Compare two captures of the same stream taken at different taps.
///
/// Any aligned packet pair whose headers agree but whose payload bytes
/// differ is proof of in-flight payload rewriting.
pub fn compare_payloads(
    a: &RtpStream,
    b: &RtpStream,
) -> Result<DetectionVerdict, WardenError> {
    if a.packets.len() != b.packets.len() {
        return Err(WardenError::UnalignedStreams(format!(
            "{} vs {} packets",
            a.packets.len(),
            b.packets.len()
        )));
    }
    if a.packets.is_empty() {
        return Err(WardenError::UnalignedStreams("empty streams".into()));
    }
    let mut differing = 0usize;
    for (pa, pb) in a.packets.iter().zip(&b.packets) {
        let ha = &pa.header;
        let hb = &pb.header;
        if ha.sequence_number != hb.sequence_number
            || ha.timestamp != hb.timestamp
            || ha.payload_type != hb.payload_type
        {
            return Err(WardenError::UnalignedStreams(format!(
                "header mismatch at seq {}",
                ha.sequence_number
            )));
        }
        if pa.payload != pb.payload {
            differing += 1;
        }
    }
    let score = differing as f64 / a.packets.len() as f64;
    Ok(if differing > 0 {
        DetectionVerdict {
            method: DetectionMethod::PayloadCompare,
            verdict: Verdict::TranstegDetected,
            score,
            detail: format!("{differing} of {} aligned payloads differ", a.packets.len()),
        }
    } else {
        DetectionVerdict {
            method: DetectionMethod::PayloadCompare,
            verdict: Verdict::NoEvidence,
            score,
            detail: "all aligned payloads identical".into(),
        }
    })
}

/// Structural check of one packet against the codec its PT declares.
///
/// Detects a wrong payload length for any codec, and a broken sync pattern
/// for the structured vocoder. A clean pass proves nothing (covert data can
/// be structure-free), so the clean outcome is INCONCLUSIVE.
pub fn validity_test(
    packet: &RtpPacket,
    pt_map: &std::collections::BTreeMap<u8, CodecId>,
) -> Result<DetectionVerdict, WardenError> {
    let pt = packet.header.payload_type;
    let codec = *pt_map
        .get(&pt)
        .ok_or(WardenError::UnknownPayloadType(pt))?;
    let spec = codecs::codec_spec(codec);
    if packet.payload.len() != spec.payload_bytes_per_frame {
        return Ok(DetectionVerdict {
            method: DetectionMethod::ValidityTest,
            verdict: Verdict::TranstegDetected,
            score: 1.0,
            detail: format!(
                "payload {} bytes, {codec} requires {}",
                packet.payload.len(),
                spec.payload_bytes_per_frame
            ),
        });
    }
    if codec == CodecId::Lpcvoc {
        for (i, frame) in packet.payload.chunks(codecs::lpcvoc::FRAME_BYTES).enumerate() {
            if !codecs::lpcvoc::frame_sync_ok(frame) {
                return Ok(DetectionVerdict {
                    method: DetectionMethod::ValidityTest,
                    verdict: Verdict::TranstegDetected,
                    score: 1.0,
                    detail: format!("frame {i} fails the vocoder sync check"),
                });
            }
        }
    }
    Ok(DetectionVerdict {
        method: DetectionMethod::ValidityTest,
        verdict: Verdict::Inconclusive,
        score: 0.0,
        detail: format!("payload structurally consistent with {codec}"),
    })
}

/// [`validity_test`] over a whole stream; detected if any packet fails.
pub fn validity_test_stream(stream: &RtpStream) -> Result<DetectionVerdict, WardenError> {
    let mut violations = 0usize;
    let mut first_detail = String::new();
    for p in &stream.packets {
        let v = validity_test(p, &stream.codec_pt_map)?;
        if v.verdict == Verdict::TranstegDetected {
            if violations == 0 {
                first_detail = v.detail;
            }
            violations += 1;
        }
    }
    let n = stream.packets.len().max(1);
    Ok(if violations > 0 {
        DetectionVerdict {
            method: DetectionMethod::ValidityTest,
            verdict: Verdict::TranstegDetected,
            score: violations as f64 / n as f64,
            detail: format!("{violations} of {n} packets invalid; first: {first_detail}"),
        }
    } else {
        DetectionVerdict {
            method: DetectionMethod::ValidityTest,
            verdict: Verdict::Inconclusive,
            score: 0.0,
            detail: "no structural violations".into(),
        }
    })
}

/// Decode under the declared codec and test whether the result still looks
/// like speech. Steganogram-filled payloads decode to broadband noise.
pub fn vad_check(stream: &RtpStream) -> Result<DetectionVerdict, WardenError> {
    let codec = stream.declared_codec().map_err(|e| match e {
        RtpError::InconsistentStream(s) if s.contains("not in codec map") => {
            match stream.payload_type() {
                Ok(pt) => WardenError::UnknownPayloadType(pt),
                Err(e) => WardenError::Rtp(e),
            }
        }
        other => WardenError::Rtp(other),
    })?;
    let expected = codecs::codec_spec(codec).payload_bytes_per_frame;
    let mut state = codecs::CodecState::new(codec);
    let mut samples: Vec<i16> = Vec::with_capacity(stream.packets.len() * 160);
    for p in &stream.packets {
        if p.payload.len() == expected {
            if let Ok(frame) = codecs::decode(codec, &mut state, &p.payload) {
                samples.extend(frame);
                continue;
            }
        }
        // undecodable under the declared codec: counts as non-speech
        samples.extend(std::iter::repeat(0i16).take(160));
    }
    let ratio = vad::speech_ratio(&samples);
    Ok(if ratio >= vad::SPEECH_RATIO_MIN {
        DetectionVerdict {
            method: DetectionMethod::VadCheck,
            verdict: Verdict::NoEvidence,
            score: ratio,
            detail: format!("speech ratio {ratio:.2} under declared {codec}"),
        }
    } else {
        DetectionVerdict {
            method: DetectionMethod::VadCheck,
            verdict: Verdict::TranstegDetected,
            score: ratio,
            detail: format!("declared {codec} decodes to non-speech (ratio {ratio:.2})"),
        }
    })
}

/// Minimum analyzable duration for the statistical detector, in packets.
pub const STATISTICAL_MIN_PACKETS: usize = 13; // 260 ms of 20 ms packets

/// Score the decoded voice against the normal and abnormal models.
///
/// Positive score (normal wins or ties) reads as no evidence; the tie rule
/// is presumption of innocence.
pub fn statistical_detect(
    stream: &RtpStream,
    normal: &GmmModel,
    abnormal: &GmmModel,
    cfg: &MfccConfig,
) -> Result<DetectionVerdict, WardenError> {
    if stream.packets.len() < STATISTICAL_MIN_PACKETS {
        return Err(WardenError::TooShort {
            got_ms: stream.packets.len() as u64 * 20,
            needed_ms: STATISTICAL_MIN_PACKETS as u64 * 20,
        });
    }
    let pcm = depacketize(stream)?;
    let features = mfcc::extract_mfcc(&pcm, cfg)?;
    let normal_ll = gmm::avg_log_likelihood(normal, &features)?;
    let abnormal_ll = gmm::avg_log_likelihood(abnormal, &features)?;
    let score = normal_ll - abnormal_ll;
    Ok(DetectionVerdict {
        method: DetectionMethod::Statistical,
        verdict: if score >= 0.0 {
            Verdict::NoEvidence
        } else {
            Verdict::TranstegDetected
        },
        score,
        detail: format!("normal {normal_ll:.4} vs abnormal {abnormal_ll:.4} nats/frame"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WardenCaseId {
    Dwc1,
    Dwc2,
    Dwc3,
    Slwc1,
    Slwc2,
    Slwc3,
}

impl WardenCaseId {
    pub const ALL: [WardenCaseId; 6] = [
        WardenCaseId::Dwc1,
        WardenCaseId::Dwc2,
        WardenCaseId::Dwc3,
        WardenCaseId::Slwc1,
        WardenCaseId::Slwc2,
        WardenCaseId::Slwc3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WardenCaseId::Dwc1 => "DWC1",
            WardenCaseId::Dwc2 => "DWC2",
            WardenCaseId::Dwc3 => "DWC3",
            WardenCaseId::Slwc1 => "SLWC1",
            WardenCaseId::Slwc2 => "SLWC2",
            WardenCaseId::Slwc3 => "SLWC3",
        }
    }

    pub fn from_name(name: &str) -> Option<WardenCaseId> {
        WardenCaseId::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(name))
    }
}

/// One row of the detection-possibilities table: which scenario/tap
/// combinations produce the case and which methods apply, in order.
#[derive(Debug, Clone)]
pub struct WardenCase {
    pub id: WardenCaseId,
    pub taps_required: usize,
    pub methods: &'static [DetectionMethod],
    pub scenario_taps: &'static [(Scenario, &'static [&'static [TapLocation]])],
}

use DetectionMethod::*;
use Scenario::*;
use TapLocation::*;

/// The case table, row for row.
pub fn warden_cases() -> Vec<WardenCase> {
    vec![
        WardenCase {
            id: WardenCaseId::Dwc1,
            taps_required: 2,
            methods: &[PayloadCompare],
            scenario_taps: &[
                (S2, &[&[W2, W3]]),
                (S3, &[&[W1, W2]]),
                (S4, &[&[W1, W2]]),
            ],
        },
        WardenCase {
            id: WardenCaseId::Dwc2,
            taps_required: 1,
            methods: &[ValidityTest, VadCheck],
            scenario_taps: &[
                (S1, &[&[W1, W2], &[W2, W3], &[W1, W3]]),
                (S2, &[&[W1, W2]]),
                (S3, &[&[W2, W3]]),
            ],
        },
        WardenCase {
            id: WardenCaseId::Dwc3,
            taps_required: 2,
            methods: &[PayloadCompare],
            scenario_taps: &[(S4, &[&[W1, W3]])],
        },
        WardenCase {
            id: WardenCaseId::Slwc1,
            taps_required: 1,
            methods: &[],
            scenario_taps: &[(S3, &[&[W1]]), (S4, &[&[W1]])],
        },
        WardenCase {
            id: WardenCaseId::Slwc2,
            taps_required: 1,
            methods: &[ValidityTest, VadCheck],
            scenario_taps: &[
                (S1, &[&[W1], &[W2], &[W3]]),
                (S2, &[&[W1], &[W2]]),
                (S3, &[&[W2], &[W3]]),
                (S4, &[&[W2]]),
            ],
        },
        WardenCase {
            id: WardenCaseId::Slwc3,
            taps_required: 1,
            methods: &[Statistical],
            scenario_taps: &[(S2, &[&[W3]]), (S4, &[&[W3]])],
        },
    ]
}

/// Route a warden case to its method(s) over the captured tap streams.
///
/// DWC1/DWC3 compare two taps; DWC2/SLWC2 run the validity test and fall
/// back to VAD when it is inconclusive; SLWC1 can never produce evidence;
/// SLWC3 runs the statistical detector (models required).
pub fn dispatch(
    case: WardenCaseId,
    taps: &[&RtpStream],
    models: Option<(&GmmModel, &GmmModel)>,
    mfcc_cfg: &MfccConfig,
) -> Result<DetectionVerdict, WardenError> {
    let need = |n: usize| -> Result<(), WardenError> {
        if taps.len() < n {
            Err(WardenError::TapsMismatch {
                case: case.name(),
                detail: format!("needs {n} tap(s), got {}", taps.len()),
            })
        } else {
            Ok(())
        }
    };
    match case {
        WardenCaseId::Dwc1 | WardenCaseId::Dwc3 => {
            need(2)?;
            compare_payloads(taps[0], taps[1])
        }
        WardenCaseId::Dwc2 | WardenCaseId::Slwc2 => {
            need(1)?;
            let validity = validity_test_stream(taps[0])?;
            if validity.verdict != Verdict::Inconclusive {
                return Ok(validity);
            }
            vad_check(taps[0])
        }
        WardenCaseId::Slwc1 => {
            need(1)?;
            Ok(DetectionVerdict {
                method: DetectionMethod::PayloadCompare,
                verdict: Verdict::NoEvidence,
                score: 0.0,
                detail: "single tap before any transcoding; detection impossible".into(),
            })
        }
        WardenCaseId::Slwc3 => {
            need(1)?;
            let (normal, abnormal) = models.ok_or(WardenError::TapsMismatch {
                case: case.name(),
                detail: "statistical detection needs trained models".into(),
            })?;
            statistical_detect(taps[0], normal, abnormal, mfcc_cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_table_matches_method_column() {
        let cases = warden_cases();
        let by_id = |id: WardenCaseId| cases.iter().find(|c| c.id == id).unwrap();
        assert_eq!(by_id(WardenCaseId::Dwc1).methods, &[PayloadCompare]);
        assert_eq!(by_id(WardenCaseId::Dwc2).methods, &[ValidityTest, VadCheck]);
        assert_eq!(by_id(WardenCaseId::Dwc3).methods, &[PayloadCompare]);
        assert!(by_id(WardenCaseId::Slwc1).methods.is_empty());
        assert_eq!(by_id(WardenCaseId::Slwc2).methods, &[ValidityTest, VadCheck]);
        assert_eq!(by_id(WardenCaseId::Slwc3).methods, &[Statistical]);
    }

    #[test]
    fn case_names_round_trip() {
        for id in WardenCaseId::ALL {
            assert_eq!(WardenCaseId::from_name(id.name()), Some(id));
        }
        assert_eq!(WardenCaseId::from_name("dwc2"), Some(WardenCaseId::Dwc2));
        assert_eq!(WardenCaseId::from_name("nope"), None);
    }
}
