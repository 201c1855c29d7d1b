//! Command-line front end wiring the toolkit into file-based workflows.
//!
//! Machine-readable results go to stdout, progress to stderr. Exit codes:
//! 0 success (for `classify`: hidden channel detected), 1 for `classify`
//! when no evidence was found, 2 on usage errors.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use transteg::audio::{self, synth_speech};
use transteg::codecs::CodecId;
use transteg::experiments::{self, ExperimentConfig};
use transteg::gmm;
use transteg::mfcc::MfccConfig;
use transteg::rtp;
use transteg::stego::{self, StegoConfig};
use transteg::warden::{self, Verdict, WardenCaseId};

#[derive(Parser)]
#[command(
    name = "transteg",
    about = "Transcoding-steganography lab: covert RTP channel, warden detectors, MFCC+GMM steganalysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic speech-like WAV file
    Synth(SynthArgs),
    /// Encode a WAV file into an RTP stream file (.rtps)
    Packetize(PacketizeArgs),
    /// Hide data in an overt stream by covert transcoding
    Embed(EmbedArgs),
    /// Recover hidden data and restore the overt stream
    Extract(ExtractArgs),
    /// Run a detection case over captured tap streams
    Warden(WardenArgs),
    /// Train normal/abnormal GMMs for a codec pair
    Train(TrainArgs),
    /// Classify one stream with trained models (exit 0 = detected, 1 = no evidence)
    Classify(ClassifyArgs),
    /// Accuracy vs test-signal duration, one CSV row per duration
    SweepDuration(SweepDurationArgs),
    /// Accuracy vs MFCC count, one CSV row per count (models retrained per count)
    SweepMfcc(SweepMfccArgs),
    /// Evaluate configured pairs and emit the accuracy table CSV
    Table(TableArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Duration in seconds
    #[arg(long)]
    duration: f64,
    /// Generator seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output WAV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PacketizeArgs {
    /// Input WAV path (PCM 16-bit mono 8 kHz)
    #[arg(long = "in")]
    input: PathBuf,
    /// Codec: g711u, g711a, g726-40, g726-32, g726-24, g726-16, lpcvoc
    #[arg(long)]
    codec: String,
    /// RTP payload type code (0-127)
    #[arg(long, default_value_t = 0)]
    pt: u8,
    /// RTP SSRC
    #[arg(long, default_value_t = 0x74727374)]
    ssrc: u32,
    /// Seed for the initial sequence number and timestamp
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output stream path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    /// Input overt stream (.rtps)
    #[arg(long = "in")]
    input: PathBuf,
    /// Overt codec the stream is coded with
    #[arg(long)]
    overt: String,
    /// Covert codec to transcode to
    #[arg(long)]
    covert: String,
    /// File with the steganogram bytes
    #[arg(long)]
    stego: PathBuf,
    /// Output carrier stream
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Input carrier stream (.rtps)
    #[arg(long = "in")]
    input: PathBuf,
    /// Overt codec (declared in the PT field)
    #[arg(long)]
    overt: String,
    /// Covert codec the carrier actually uses
    #[arg(long)]
    covert: String,
    /// Steganogram length in bytes (carried out of band)
    #[arg(long)]
    len: usize,
    /// Where to write the recovered steganogram
    #[arg(long)]
    stego_out: PathBuf,
    /// Where to write the restored overt stream
    #[arg(long)]
    restored_out: PathBuf,
}

#[derive(Args)]
struct WardenArgs {
    /// Detection case: dwc1, dwc2, dwc3, slwc1, slwc2, slwc3
    #[arg(long)]
    case: String,
    /// Captured tap stream(s), in tap order (dwc1/dwc3 need two)
    #[arg(long = "tap", required = true)]
    taps: Vec<PathBuf>,
    /// Codec the PT field is declared to mean
    #[arg(long, default_value = "g711u")]
    declared: String,
    /// Normal-transmission model (slwc3)
    #[arg(long)]
    normal: Option<PathBuf>,
    /// Abnormal-transmission model (slwc3)
    #[arg(long)]
    abnormal: Option<PathBuf>,
    /// MFCC coefficients for the statistical detector
    #[arg(long, default_value_t = 12)]
    mfcc_count: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config file (key=value lines)
    #[arg(long)]
    config: PathBuf,
    /// Seed override (precedence: flag, TRANSTEG_SEED, config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the normal model
    #[arg(long)]
    normal_out: PathBuf,
    /// Output path for the abnormal model
    #[arg(long)]
    abnormal_out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Stream to classify (.rtps)
    #[arg(long = "in")]
    input: PathBuf,
    /// Normal-transmission model
    #[arg(long)]
    normal: PathBuf,
    /// Abnormal-transmission model
    #[arg(long)]
    abnormal: PathBuf,
    /// Codec the PT field is declared to mean
    #[arg(long, default_value = "g711u")]
    declared: String,
    /// MFCC coefficients; must match what the models were trained with
    #[arg(long, default_value_t = 12)]
    mfcc_count: usize,
}

#[derive(Args)]
struct SweepDurationArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    /// Seed override (precedence: flag, TRANSTEG_SEED, config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated test durations in seconds (0.26..10)
    #[arg(long, value_delimiter = ',')]
    durations: Vec<f64>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepMfccArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    /// Seed override (precedence: flag, TRANSTEG_SEED, config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated MFCC counts (1..=19)
    #[arg(long, value_delimiter = ',')]
    counts: Vec<usize>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    /// Experiment config file(s); one accuracy row each
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Seed override applied to every config (precedence: flag, TRANSTEG_SEED, file)
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

fn parse_codec(name: &str) -> Result<CodecId> {
    CodecId::from_name(name).with_context(|| {
        format!(
            "unknown codec {name:?}; expected one of {}",
            CodecId::ALL.map(|c| c.name()).join(", ")
        )
    })
}

fn load_stream(path: &PathBuf, declared: CodecId) -> Result<rtp::RtpStream> {
    let stream = rtp::read_rtps(path, BTreeMap::new())
        .with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for p in &stream.packets {
        map.insert(p.header.payload_type, declared);
    }
    Ok(rtp::RtpStream::new(stream.packets, map))
}

/// Seed precedence: command-line flag, then TRANSTEG_SEED, then config file.
fn load_config(path: &PathBuf, flag_seed: Option<u64>) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = experiments::parse_config(&text)?;
    let env_seed = match std::env::var("TRANSTEG_SEED") {
        Ok(v) => Some(
            v.parse::<u64>()
                .with_context(|| format!("TRANSTEG_SEED={v} is not a number"))?,
        ),
        Err(_) => None,
    };
    if let Some(seed) = flag_seed.or(env_seed) {
        cfg.seed = seed;
        cfg.em.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth(a) => {
            if a.duration <= 0.0 {
                bail!("duration must be positive");
            }
            let sig = synth_speech(a.duration, a.seed);
            audio::write_wav(&sig, &a.out)?;
            eprintln!("wrote {} ({} samples)", a.out.display(), sig.samples.len());
        }
        Command::Packetize(a) => {
            if a.pt > 127 {
                bail!("payload type must be 0..=127");
            }
            let codec = parse_codec(&a.codec)?;
            let sig = audio::read_wav(&a.input)?.trimmed_to_frames(160);
            let stream = rtp::packetize(&sig, codec, a.pt, a.ssrc, a.seed)?;
            rtp::write_rtps(&stream, &a.out)?;
            eprintln!(
                "wrote {} ({} packets, {codec})",
                a.out.display(),
                stream.packets.len()
            );
        }
        Command::Embed(a) => {
            let cfg = StegoConfig::new(parse_codec(&a.overt)?, parse_codec(&a.covert)?)?;
            let stream = load_stream(&a.input, cfg.overt)?;
            let message = std::fs::read(&a.stego)
                .with_context(|| format!("reading {}", a.stego.display()))?;
            let result = stego::embed(&stream, &cfg, &message)?;
            rtp::write_rtps(&result.stream, &a.out)?;
            eprintln!(
                "embedded {} bytes into {} packets ({} bps hidden bandwidth)",
                result.bytes_embedded,
                result.stream.packets.len(),
                result.bandwidth_bps
            );
            println!("{},{},{}", result.bytes_embedded, result.stream.packets.len(), result.bandwidth_bps);
        }
        Command::Extract(a) => {
            let cfg = StegoConfig::new(parse_codec(&a.overt)?, parse_codec(&a.covert)?)?;
            let stream = load_stream(&a.input, cfg.overt)?;
            let (message, restored) = stego::extract(&stream, &cfg, a.len)?;
            std::fs::write(&a.stego_out, &message)?;
            rtp::write_rtps(&restored, &a.restored_out)?;
            eprintln!(
                "recovered {} bytes; restored stream at {}",
                message.len(),
                a.restored_out.display()
            );
        }
        Command::Warden(a) => {
            let case = WardenCaseId::from_name(&a.case)
                .with_context(|| format!("unknown warden case {:?}", a.case))?;
            let declared = parse_codec(&a.declared)?;
            let mut streams = Vec::new();
            for tap in &a.taps {
                streams.push(load_stream(tap, declared)?);
            }
            let refs: Vec<&rtp::RtpStream> = streams.iter().collect();
            let models = match (&a.normal, &a.abnormal) {
                (Some(n), Some(ab)) => Some((gmm::load_model(n)?, gmm::load_model(ab)?)),
                (None, None) => None,
                _ => bail!("--normal and --abnormal must be given together"),
            };
            let verdict = warden::dispatch(
                case,
                &refs,
                models.as_ref().map(|(n, a)| (n, a)),
                &MfccConfig::with_num_coeffs(a.mfcc_count),
            )?;
            println!("{}", verdict.to_csv_row(case.name()));
        }
        Command::Train(a) => {
            let cfg = load_config(&a.config, a.seed)?;
            eprintln!(
                "training {}/{} models (seed {}) ...",
                cfg.pair.overt, cfg.pair.covert, cfg.seed
            );
            let (normal, abnormal) = experiments::train_pair_models(&cfg)?;
            gmm::save_model(&normal, &a.normal_out)?;
            gmm::save_model(&abnormal, &a.abnormal_out)?;
            eprintln!(
                "wrote {} and {}",
                a.normal_out.display(),
                a.abnormal_out.display()
            );
        }
        Command::Classify(a) => {
            let declared = parse_codec(&a.declared)?;
            let stream = load_stream(&a.input, declared)?;
            let normal = gmm::load_model(&a.normal)?;
            let abnormal = gmm::load_model(&a.abnormal)?;
            let verdict = warden::statistical_detect(
                &stream,
                &normal,
                &abnormal,
                &MfccConfig::with_num_coeffs(a.mfcc_count),
            )?;
            println!("{}", verdict.to_csv_row("SLWC3"));
            return Ok(if verdict.verdict == Verdict::TranstegDetected {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            });
        }
        Command::SweepDuration(a) => {
            let cfg = load_config(&a.config, a.seed)?;
            if a.durations.is_empty() {
                bail!("--durations must list at least one value");
            }
            eprintln!("sweeping {} durations ...", a.durations.len());
            let reports = experiments::sweep_duration(&cfg, &a.durations)?;
            std::fs::write(&a.out, experiments::emit_table(&reports))?;
            eprintln!("wrote {}", a.out.display());
        }
        Command::SweepMfcc(a) => {
            let cfg = load_config(&a.config, a.seed)?;
            if a.counts.is_empty() {
                bail!("--counts must list at least one value");
            }
            eprintln!("sweeping {} MFCC counts (retraining per count) ...", a.counts.len());
            let reports = experiments::sweep_mfcc(&cfg, &a.counts)?;
            std::fs::write(&a.out, experiments::emit_table(&reports))?;
            eprintln!("wrote {}", a.out.display());
        }
        Command::Table(a) => {
            let mut reports = Vec::new();
            for path in &a.configs {
                let cfg = load_config(path, a.seed)?;
                eprintln!("evaluating {}/{} ...", cfg.pair.overt, cfg.pair.covert);
                let models = experiments::train_pair_models(&cfg)?;
                reports.push(experiments::evaluate_accuracy(&cfg, &models)?);
            }
            std::fs::write(&a.out, experiments::emit_table(&reports))?;
            eprintln!("wrote {}", a.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
