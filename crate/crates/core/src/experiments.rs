//! The evaluation protocol at desk scale: render normal/abnormal condition
//! audio per codec pair, train the two GMMs on pooled training features,
//! measure recognition accuracy on held-out speakers, and sweep test-signal
//! duration and MFCC count. All randomness flows from one top-level seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::{
    self, ingest_corpus, read_wav, synth_speech_for_speaker, AudioError, PcmSignal, Split,
    VoiceProfile,
};
use crate::codecs::{self, CodecId, FRAME_SAMPLES};
use crate::gmm::{self, EmSettings, GmmError, GmmModel};
use crate::mfcc::{self, FeatureError, FeatureMatrix, MfccConfig};
use crate::rtp;
use crate::stego::{self, StegoConfig, StegoError};
use crate::warden::{self, Verdict, WardenError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Stego(#[from] StegoError),
    #[error(transparent)]
    Rtp(#[from] rtp::RtpError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Warden(#[from] WardenError),
    #[error(transparent)]
    Codec(#[from] codecs::CodecError),
}

/// Transmission condition the warden must tell apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Plain overt-codec transmission.
    Normal,
    /// Full covert chain: overt, embed, extract, re-encode overt.
    Abnormal,
}

/// Synthetic corpus dimensions. Speakers get stable voice profiles derived
/// from the experiment seed; train and test speaker namespaces are disjoint
/// by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub train_speakers: usize,
    pub test_speakers: usize,
    pub train_utterances_per_speaker: usize,
    pub test_utterances_per_speaker: usize,
    /// Utterance length in whole seconds (keeps everything frame aligned).
    pub utterance_s: u32,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        SyntheticCorpus {
            train_speakers: 12,
            test_speakers: 10,
            train_utterances_per_speaker: 5,
            test_utterances_per_speaker: 6,
            utterance_s: 10,
        }
    }
}

/// Where the carrier voice comes from.
#[derive(Debug, Clone)]
pub enum CorpusSource {
    Synthetic(SyntheticCorpus),
    /// WAV directory split speaker-disjointly with the experiment seed.
    Directory { dir: PathBuf, train_fraction: f64 },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub pair: StegoConfig,
    pub corpus: CorpusSource,
    pub test_duration_s: f64,
    pub mfcc_count: usize,
    pub num_components: usize,
    pub em: EmSettings,
    pub seed: u64,
    pub label: String,
    /// Concatenate each test speaker's recordings into one signal before
    /// trimming, instead of testing each utterance separately.
    pub concat_per_speaker: bool,
    /// Peak-normalize utterances at ingestion (WAV corpora may not be level
    /// aligned; the synthetic corpus is).
    pub peak_normalize: bool,
}

impl ExperimentConfig {
    /// Default setup for a codec pair: 7 s tests, 16 Gaussians, and the
    /// per-pair MFCC count used in the study (12 for the small-footprint
    /// G.711/G.726 pairs, 19 otherwise).
    pub fn for_pair(pair: StegoConfig, seed: u64) -> Self {
        ExperimentConfig {
            pair,
            corpus: CorpusSource::Synthetic(SyntheticCorpus::default()),
            test_duration_s: 7.0,
            mfcc_count: Self::default_mfcc_count(&pair),
            num_components: gmm::DEFAULT_COMPONENTS,
            em: EmSettings {
                seed,
                ..Default::default()
            },
            seed,
            label: "synthetic".into(),
            concat_per_speaker: false,
            peak_normalize: false,
        }
    }

    pub fn default_mfcc_count(pair: &StegoConfig) -> usize {
        let g711 = matches!(pair.overt, CodecId::G711Ulaw | CodecId::G711Alaw);
        let g726 = matches!(
            pair.covert,
            CodecId::G726_40 | CodecId::G726_32 | CodecId::G726_24 | CodecId::G726_16
        );
        if g711 && g726 {
            12
        } else {
            19
        }
    }

    pub fn mfcc_config(&self) -> MfccConfig {
        MfccConfig::with_num_coeffs(self.mfcc_count)
    }
}

/// Per-condition confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub normal_no_evidence: usize,
    pub normal_detected: usize,
    pub abnormal_detected: usize,
    pub abnormal_no_evidence: usize,
}

#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub overt: CodecId,
    pub covert: CodecId,
    pub label: String,
    pub duration_s: f64,
    pub mfcc_count: usize,
    pub trials: usize,
    pub correct: usize,
    pub confusion: Confusion,
    /// Test utterances shorter than the requested duration, skipped.
    pub skipped: usize,
}

impl AccuracyReport {
    pub fn accuracy_percent(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.trials as f64
        }
    }
}

fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xC2B2AE3D27D4EB4F);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// One carrier utterance with its speaker label.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub speaker_id: String,
    pub signal: PcmSignal,
}

/// Materialized corpus: everything trimmed to whole frames.
#[derive(Debug)]
pub struct MaterializedCorpus {
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Expand the corpus source into in-memory utterances, deterministically
/// ordered by (speaker, utterance index).
pub fn materialize_corpus(cfg: &ExperimentConfig) -> Result<MaterializedCorpus, ExperimentError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    match &cfg.corpus {
        CorpusSource::Synthetic(s) => {
            if s.train_speakers == 0 || s.train_utterances_per_speaker == 0 {
                return Err(ExperimentError::EmptyTrainSplit);
            }
            if s.test_speakers == 0 || s.test_utterances_per_speaker == 0 {
                return Err(ExperimentError::EmptyTestSplit);
            }
            for (split, speakers, utts, out) in [
                (0u64, s.train_speakers, s.train_utterances_per_speaker, &mut train),
                (1u64, s.test_speakers, s.test_utterances_per_speaker, &mut test),
            ] {
                for spk in 0..speakers {
                    let speaker_seed = mix_seed(cfg.seed, split, spk as u64);
                    let profile = VoiceProfile::from_seed(speaker_seed);
                    let prefix = if split == 0 { "train" } else { "test" };
                    for utt in 0..utts {
                        let utt_seed = mix_seed(speaker_seed, 2, utt as u64);
                        let mut signal =
                            synth_speech_for_speaker(&profile, s.utterance_s as f64, utt_seed);
                        signal.source_id = format!("{prefix}-s{spk:03}-u{utt:02}");
                        out.push(Utterance {
                            speaker_id: format!("{prefix}-s{spk:03}"),
                            signal,
                        });
                    }
                }
            }
        }
        CorpusSource::Directory { dir, train_fraction } => {
            let manifest = ingest_corpus(dir, *train_fraction, cfg.seed)?;
            for entry in &manifest.entries {
                let mut signal = read_wav(&entry.path)?;
                if cfg.peak_normalize {
                    signal = audio::peak_normalize(&signal, -3.0);
                }
                let utt = Utterance {
                    speaker_id: entry.speaker_id.clone(),
                    signal,
                };
                match entry.split {
                    Split::Train => train.push(utt),
                    Split::Test => test.push(utt),
                }
            }
            if train.is_empty() {
                return Err(ExperimentError::EmptyTrainSplit);
            }
            if test.is_empty() {
                return Err(ExperimentError::EmptyTestSplit);
            }
        }
    }
    for u in train.iter_mut().chain(test.iter_mut()) {
        u.signal = u.signal.trimmed_to_frames(FRAME_SAMPLES);
    }
    train.sort_by(|a, b| a.signal.source_id.cmp(&b.signal.source_id));
    test.sort_by(|a, b| a.signal.source_id.cmp(&b.signal.source_id));
    Ok(MaterializedCorpus { train, test })
}

fn assert_speaker_disjoint(corpus: &MaterializedCorpus) -> Result<(), ExperimentError> {
    let train: std::collections::BTreeSet<&str> =
        corpus.train.iter().map(|u| u.speaker_id.as_str()).collect();
    for u in &corpus.test {
        if train.contains(u.speaker_id.as_str()) {
            return Err(ExperimentError::BadConfig(format!(
                "speaker {} appears in both splits",
                u.speaker_id
            )));
        }
    }
    Ok(())
}

/// Render what the receiving-side warden hears for one condition.
///
/// NORMAL is a single overt encode/decode pass. ABNORMAL runs the full
/// hidden-communication chain to the far tap: embed (with seeded random
/// steganogram bytes at full capacity), extract, re-encode overt, decode.
pub fn build_condition_audio(
    signal: &PcmSignal,
    pair: &StegoConfig,
    condition: Condition,
    seed: u64,
) -> Result<PcmSignal, ExperimentError> {
    assert_eq!(
        signal.samples.len() % FRAME_SAMPLES,
        0,
        "signal must be frame aligned"
    );
    match condition {
        Condition::Normal => Ok(codecs::transcode_signal(pair.overt, signal)?),
        Condition::Abnormal => {
            let stream = rtp::packetize(signal, pair.overt, 0, 0x7453_7467, seed)?;
            let capacity =
                stego::stego_capacity(pair)? * stream.packets.len();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 3, 0));
            let steganogram: Vec<u8> = (0..capacity).map(|_| rng.random()).collect();
            let embedded = stego::embed(&stream, pair, &steganogram)?;
            let (_, restored) = stego::extract(&embedded.stream, pair, capacity)?;
            let mut pcm = rtp::depacketize(&restored)?;
            pcm.source_id = signal.source_id.clone();
            Ok(pcm)
        }
    }
}

fn pooled_features(
    utterances: &[Utterance],
    pair: &StegoConfig,
    condition: Condition,
    cfg: &ExperimentConfig,
) -> Result<FeatureMatrix, ExperimentError> {
    let mfcc_cfg = cfg.mfcc_config();
    let mut rows = Vec::new();
    for (i, u) in utterances.iter().enumerate() {
        let seed = mix_seed(cfg.seed, 100 + condition as u64, i as u64);
        let rendered = build_condition_audio(&u.signal, pair, condition, seed)?;
        let f = mfcc::extract_mfcc(&rendered, &mfcc_cfg)?;
        rows.extend(f.rows);
    }
    Ok(FeatureMatrix {
        rows,
        num_coeffs: cfg.mfcc_count,
        source_id: format!("pooled-{condition:?}"),
    })
}

/// Train the normal and abnormal models on the train split with identical
/// settings and seed.
pub fn train_pair_models(
    cfg: &ExperimentConfig,
) -> Result<(GmmModel, GmmModel), ExperimentError> {
    let corpus = materialize_corpus(cfg)?;
    assert_speaker_disjoint(&corpus)?;
    if corpus.train.is_empty() {
        return Err(ExperimentError::EmptyTrainSplit);
    }
    train_pair_models_on(&corpus.train, cfg)
}

/// Same as [`train_pair_models`] but over an explicit utterance list.
pub fn train_pair_models_on(
    train: &[Utterance],
    cfg: &ExperimentConfig,
) -> Result<(GmmModel, GmmModel), ExperimentError> {
    if train.is_empty() {
        return Err(ExperimentError::EmptyTrainSplit);
    }
    let normal_features = pooled_features(train, &cfg.pair, Condition::Normal, cfg)?;
    let abnormal_features = pooled_features(train, &cfg.pair, Condition::Abnormal, cfg)?;
    let normal = gmm::train_em(&normal_features, &cfg.em, cfg.num_components)?;
    let abnormal = gmm::train_em(&abnormal_features, &cfg.em, cfg.num_components)?;
    Ok((normal, abnormal))
}

/// Test signals, one per trial: utterances (or per-speaker concatenations)
/// trimmed to the test duration; too-short material is skipped.
fn test_signals(cfg: &ExperimentConfig, corpus: &MaterializedCorpus) -> (Vec<PcmSignal>, usize) {
    let want = (cfg.test_duration_s * 8000.0).floor() as usize;
    let want = (want / FRAME_SAMPLES) * FRAME_SAMPLES;
    let mut signals = Vec::new();
    let mut skipped = 0usize;
    if cfg.concat_per_speaker {
        let mut by_speaker: BTreeMap<&str, Vec<&Utterance>> = BTreeMap::new();
        for u in &corpus.test {
            by_speaker.entry(u.speaker_id.as_str()).or_default().push(u);
        }
        for (spk, utts) in by_speaker {
            let mut samples = Vec::new();
            for u in utts {
                samples.extend_from_slice(&u.signal.samples);
            }
            if samples.len() < want || want == 0 {
                skipped += 1;
                continue;
            }
            samples.truncate(want);
            signals.push(PcmSignal::new(samples, format!("{spk}-concat")));
        }
    } else {
        for u in &corpus.test {
            if u.signal.samples.len() < want || want == 0 {
                skipped += 1;
                continue;
            }
            let mut s = u.signal.clone();
            s.samples.truncate(want);
            signals.push(s);
        }
    }
    (signals, skipped)
}

fn classify_rendered(
    rendered: &PcmSignal,
    cfg: &ExperimentConfig,
    models: &(GmmModel, GmmModel),
) -> Result<Verdict, ExperimentError> {
    let stream = rtp::packetize(rendered, cfg.pair.overt, 0, 0x5744_4E00, cfg.seed)?;
    let verdict = warden::statistical_detect(
        &stream,
        &models.0,
        &models.1,
        &cfg.mfcc_config(),
    )?;
    Ok(verdict.verdict)
}

/// Render every test trial under both conditions and classify with the
/// statistical detector.
pub fn evaluate_accuracy(
    cfg: &ExperimentConfig,
    models: &(GmmModel, GmmModel),
) -> Result<AccuracyReport, ExperimentError> {
    let corpus = materialize_corpus(cfg)?;
    assert_speaker_disjoint(&corpus)?;
    evaluate_accuracy_on(cfg, models, &corpus)
}

/// [`evaluate_accuracy`] over an already materialized corpus.
pub fn evaluate_accuracy_on(
    cfg: &ExperimentConfig,
    models: &(GmmModel, GmmModel),
    corpus: &MaterializedCorpus,
) -> Result<AccuracyReport, ExperimentError> {
    let (signals, skipped) = test_signals(cfg, corpus);
    if signals.is_empty() {
        return Err(ExperimentError::EmptyTestSplit);
    }
    let mut confusion = Confusion::default();
    for (i, signal) in signals.iter().enumerate() {
        for condition in [Condition::Normal, Condition::Abnormal] {
            let seed = mix_seed(cfg.seed, 200 + condition as u64, i as u64);
            let rendered = build_condition_audio(signal, &cfg.pair, condition, seed)?;
            let verdict = classify_rendered(&rendered, cfg, models)?;
            match (condition, verdict) {
                (Condition::Normal, Verdict::NoEvidence | Verdict::Inconclusive) => {
                    confusion.normal_no_evidence += 1;
                }
                (Condition::Normal, Verdict::TranstegDetected) => {
                    confusion.normal_detected += 1;
                }
                (Condition::Abnormal, Verdict::TranstegDetected) => {
                    confusion.abnormal_detected += 1;
                }
                (Condition::Abnormal, Verdict::NoEvidence | Verdict::Inconclusive) => {
                    confusion.abnormal_no_evidence += 1;
                }
            }
        }
    }
    let trials = signals.len() * 2;
    Ok(AccuracyReport {
        overt: cfg.pair.overt,
        covert: cfg.pair.covert,
        label: cfg.label.clone(),
        duration_s: cfg.test_duration_s,
        mfcc_count: cfg.mfcc_count,
        trials,
        correct: confusion.normal_no_evidence + confusion.abnormal_detected,
        confusion,
        skipped,
    })
}

/// Train once, then evaluate the same models at several test durations.
pub fn sweep_duration(
    cfg: &ExperimentConfig,
    durations_s: &[f64],
) -> Result<Vec<AccuracyReport>, ExperimentError> {
    for &d in durations_s {
        if !(0.26..=10.0).contains(&d) {
            return Err(ExperimentError::BadConfig(format!(
                "duration {d} s outside the supported 0.26..10 s range"
            )));
        }
    }
    let corpus = materialize_corpus(cfg)?;
    assert_speaker_disjoint(&corpus)?;
    let models = train_pair_models_on(&corpus.train, cfg)?;
    let mut reports = Vec::with_capacity(durations_s.len());
    for &d in durations_s {
        let mut c = cfg.clone();
        c.test_duration_s = d;
        reports.push(evaluate_accuracy_on(&c, &models, &corpus)?);
    }
    Ok(reports)
}

/// Retrain and evaluate per MFCC count.
pub fn sweep_mfcc(
    cfg: &ExperimentConfig,
    counts: &[usize],
) -> Result<Vec<AccuracyReport>, ExperimentError> {
    for &c in counts {
        if !(1..=19).contains(&c) {
            return Err(ExperimentError::BadConfig(format!(
                "MFCC count {c} outside 1..=19"
            )));
        }
    }
    let corpus = materialize_corpus(cfg)?;
    assert_speaker_disjoint(&corpus)?;
    let mut reports = Vec::with_capacity(counts.len());
    for &count in counts {
        let mut c = cfg.clone();
        c.mfcc_count = count;
        let models = train_pair_models_on(&corpus.train, &c)?;
        reports.push(evaluate_accuracy_on(&c, &models, &corpus)?);
    }
    Ok(reports)
}

/// Control experiment: both models trained on disjoint halves of
/// NORMAL-only audio, and every test trial rendered NORMAL. Any accuracy
/// far from chance level exposes a spurious detection signal.
pub fn chance_level_experiment(cfg: &ExperimentConfig) -> Result<AccuracyReport, ExperimentError> {
    let corpus = materialize_corpus(cfg)?;
    assert_speaker_disjoint(&corpus)?;
    let half = corpus.train.len() / 2;
    if half == 0 {
        return Err(ExperimentError::EmptyTrainSplit);
    }
    let (a, b) = corpus.train.split_at(half);
    let fa = pooled_features(a, &cfg.pair, Condition::Normal, cfg)?;
    let fb = pooled_features(b, &cfg.pair, Condition::Normal, cfg)?;
    let normal = gmm::train_em(&fa, &cfg.em, cfg.num_components)?;
    let abnormal = gmm::train_em(&fb, &cfg.em, cfg.num_components)?;

    let (signals, skipped) = test_signals(cfg, &corpus);
    if signals.is_empty() {
        return Err(ExperimentError::EmptyTestSplit);
    }
    let mut confusion = Confusion::default();
    for (i, signal) in signals.iter().enumerate() {
        for (label_abnormal, salt) in [(false, 300u64), (true, 301u64)] {
            let seed = mix_seed(cfg.seed, salt, i as u64);
            let rendered =
                build_condition_audio(signal, &cfg.pair, Condition::Normal, seed)?;
            let verdict = classify_rendered(&rendered, cfg, &(normal.clone(), abnormal.clone()))?;
            match (label_abnormal, verdict) {
                (false, Verdict::NoEvidence | Verdict::Inconclusive) => {
                    confusion.normal_no_evidence += 1
                }
                (false, Verdict::TranstegDetected) => confusion.normal_detected += 1,
                (true, Verdict::TranstegDetected) => confusion.abnormal_detected += 1,
                (true, Verdict::NoEvidence | Verdict::Inconclusive) => {
                    confusion.abnormal_no_evidence += 1
                }
            }
        }
    }
    let trials = signals.len() * 2;
    Ok(AccuracyReport {
        overt: cfg.pair.overt,
        covert: cfg.pair.covert,
        label: format!("{}-chance", cfg.label),
        duration_s: cfg.test_duration_s,
        mfcc_count: cfg.mfcc_count,
        trials,
        correct: confusion.normal_no_evidence + confusion.abnormal_detected,
        confusion,
        skipped,
    })
}

/// Accuracy table as CSV, stable column order, two decimal places.
pub fn emit_table(reports: &[AccuracyReport]) -> String {
    let mut out = String::from(
        "overt,covert,label,duration_s,mfcc_count,trials,accuracy_percent\n",
    );
    for r in reports {
        writeln!(
            out,
            "{},{},{},{:.2},{},{},{:.2}",
            r.overt,
            r.covert,
            r.label,
            r.duration_s,
            r.mfcc_count,
            r.trials,
            r.accuracy_percent()
        )
        .unwrap();
    }
    out
}

/// Parse a line-oriented `key=value` experiment config.
///
/// Recognized keys: overt, covert, label, seed, test_duration_s, mfcc_count,
/// k, max_iters, rel_tol, train_speakers, test_speakers, train_utterances,
/// test_utterances, utterance_s, corpus_dir, train_fraction,
/// concat_per_speaker, peak_normalize. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ExperimentError> {
    let bad = |msg: String| ExperimentError::BadConfig(msg);
    let mut kv = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key=value", lineno + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }

    let known = [
        "overt", "covert", "label", "seed", "test_duration_s", "mfcc_count", "k", "max_iters",
        "rel_tol", "train_speakers", "test_speakers", "train_utterances", "test_utterances",
        "utterance_s", "corpus_dir", "train_fraction", "concat_per_speaker", "peak_normalize",
    ];
    for k in kv.keys() {
        if !known.contains(&k.as_str()) {
            return Err(bad(format!("unknown config key: {k}")));
        }
    }

    let overt = CodecId::from_name(kv.get("overt").map(String::as_str).unwrap_or("g711u"))
        .map_err(|e| bad(e.to_string()))?;
    let covert = CodecId::from_name(kv.get("covert").map(String::as_str).unwrap_or("g726-32"))
        .map_err(|e| bad(e.to_string()))?;
    let pair = StegoConfig::new(overt, covert).map_err(|e| bad(e.to_string()))?;

    let parse_num = |key: &str, default: f64| -> Result<f64, ExperimentError> {
        match kv.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad(format!("bad number for {key}: {v}"))),
        }
    };
    let parse_bool = |key: &str| -> Result<bool, ExperimentError> {
        match kv.get(key).map(String::as_str) {
            None => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(v) => Err(bad(format!("bad boolean for {key}: {v}"))),
        }
    };

    let seed = parse_num("seed", 1.0)? as u64;
    let mut cfg = ExperimentConfig::for_pair(pair, seed);
    cfg.test_duration_s = parse_num("test_duration_s", cfg.test_duration_s)?;
    cfg.mfcc_count = parse_num("mfcc_count", cfg.mfcc_count as f64)? as usize;
    if !(1..=19).contains(&cfg.mfcc_count) {
        return Err(bad(format!("mfcc_count {} outside 1..=19", cfg.mfcc_count)));
    }
    cfg.num_components = parse_num("k", cfg.num_components as f64)? as usize;
    cfg.em.max_iters = parse_num("max_iters", cfg.em.max_iters as f64)? as usize;
    cfg.em.rel_tol = parse_num("rel_tol", cfg.em.rel_tol)?;
    cfg.label = kv.get("label").cloned().unwrap_or(cfg.label);
    cfg.concat_per_speaker = parse_bool("concat_per_speaker")?;
    cfg.peak_normalize = parse_bool("peak_normalize")?;

    if let Some(dir) = kv.get("corpus_dir") {
        cfg.corpus = CorpusSource::Directory {
            dir: PathBuf::from(dir),
            train_fraction: parse_num("train_fraction", 0.8)?,
        };
    } else {
        let d = SyntheticCorpus::default();
        cfg.corpus = CorpusSource::Synthetic(SyntheticCorpus {
            train_speakers: parse_num("train_speakers", d.train_speakers as f64)? as usize,
            test_speakers: parse_num("test_speakers", d.test_speakers as f64)? as usize,
            train_utterances_per_speaker: parse_num(
                "train_utterances",
                d.train_utterances_per_speaker as f64,
            )? as usize,
            test_utterances_per_speaker: parse_num(
                "test_utterances",
                d.test_utterances_per_speaker as f64,
            )? as usize,
            utterance_s: parse_num("utterance_s", d.utterance_s as f64)? as u32,
        });
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::synth_speech;

    fn small_cfg(covert: CodecId) -> ExperimentConfig {
        let pair = StegoConfig::new(CodecId::G711Ulaw, covert).unwrap();
        let mut cfg = ExperimentConfig::for_pair(pair, 11);
        cfg.corpus = CorpusSource::Synthetic(SyntheticCorpus {
            train_speakers: 3,
            test_speakers: 2,
            train_utterances_per_speaker: 2,
            test_utterances_per_speaker: 2,
            utterance_s: 4,
        });
        cfg.test_duration_s = 3.0;
        cfg
    }

    #[test]
    fn normal_condition_is_single_companding_pass() {
        let sig = synth_speech(1.0, 5);
        let pair = StegoConfig::new(CodecId::G711Ulaw, CodecId::G726_32).unwrap();
        let got = build_condition_audio(&sig, &pair, Condition::Normal, 1).unwrap();
        let want = codecs::transcode_signal(CodecId::G711Ulaw, &sig).unwrap();
        assert_eq!(got.samples, want.samples);
        assert_eq!(got.samples.len(), sig.samples.len());
    }

    #[test]
    fn abnormal_condition_differs_and_preserves_duration() {
        let sig = synth_speech(1.0, 5);
        let pair = StegoConfig::new(CodecId::G711Ulaw, CodecId::G726_32).unwrap();
        let normal = build_condition_audio(&sig, &pair, Condition::Normal, 1).unwrap();
        let abnormal = build_condition_audio(&sig, &pair, Condition::Abnormal, 1).unwrap();
        assert_eq!(abnormal.samples.len(), sig.samples.len());
        let diff_energy: f64 = normal
            .samples
            .iter()
            .zip(&abnormal.samples)
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum();
        assert!(diff_energy > 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_cfg(CodecId::G726_32);
        let a = train_pair_models(&cfg).unwrap();
        let b = train_pair_models(&cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        // lossy pair: the two condition models must differ
        assert_ne!(a.0.means, a.1.means);
    }

    #[test]
    fn speaker_disjointness_is_enforced() {
        let cfg = small_cfg(CodecId::G726_32);
        let corpus = materialize_corpus(&cfg).unwrap();
        assert!(assert_speaker_disjoint(&corpus).is_ok());
    }

    #[test]
    fn emit_table_formatting() {
        assert_eq!(
            emit_table(&[]),
            "overt,covert,label,duration_s,mfcc_count,trials,accuracy_percent\n"
        );
        let r = AccuracyReport {
            overt: CodecId::G711Ulaw,
            covert: CodecId::G726_32,
            label: "synthetic".into(),
            duration_s: 7.0,
            mfcc_count: 12,
            trials: 100,
            correct: 93,
            confusion: Confusion::default(),
            skipped: 0,
        };
        let table = emit_table(&[r]);
        assert_eq!(table.lines().count(), 2);
        assert!(table.ends_with("g711u,g726-32,synthetic,7.00,12,100,93.00\n"));
    }

    #[test]
    fn config_parsing_round_trip() {
        let text = "overt=g711u\ncovert=lpcvoc\nseed=9\nmfcc_count=19\nlabel=demo\n\
                    train_speakers=4\ntest_speakers=2\n# comment\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.pair.covert, CodecId::Lpcvoc);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mfcc_count, 19);
        assert_eq!(cfg.label, "demo");
        match cfg.corpus {
            CorpusSource::Synthetic(s) => {
                assert_eq!(s.train_speakers, 4);
                assert_eq!(s.test_speakers, 2);
            }
            _ => panic!("expected synthetic corpus"),
        }
        assert!(parse_config("bogus_key=1\n").is_err());
        assert!(parse_config("overt=g726-16\ncovert=g711u\n").is_err());
    }

    #[test]
    fn default_mfcc_counts_follow_pair_rule() {
        let g726 = StegoConfig::new(CodecId::G711Ulaw, CodecId::G726_32).unwrap();
        let lpc = StegoConfig::new(CodecId::G711Ulaw, CodecId::Lpcvoc).unwrap();
        assert_eq!(ExperimentConfig::default_mfcc_count(&g726), 12);
        assert_eq!(ExperimentConfig::default_mfcc_count(&lpc), 19);
    }

    #[test]
    fn degenerate_identical_models_score_exactly_chance() {
        let cfg = small_cfg(CodecId::G726_32);
        let corpus = materialize_corpus(&cfg).unwrap();
        let features = pooled_features(
            &corpus.train[..2],
            &cfg.pair,
            Condition::Normal,
            &cfg,
        )
        .unwrap();
        let m = gmm::train_em(&features, &cfg.em, 2).unwrap();
        let report = evaluate_accuracy_on(&cfg, &(m.clone(), m), &corpus).unwrap();
        // ties resolve to NO_EVIDENCE: every normal trial right, every
        // abnormal trial wrong
        assert_eq!(report.accuracy_percent(), 50.0);
        assert_eq!(report.confusion.normal_detected, 0);
        assert_eq!(report.confusion.abnormal_detected, 0);
    }
}
