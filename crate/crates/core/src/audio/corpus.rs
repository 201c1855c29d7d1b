//! WAV corpus ingestion with a speaker-disjoint train/test split.
//!
//! Speakers come either from subdirectory names (`corpus/spk1/a.wav`) or
//! from a filename prefix before the first `_` or `-` (`spk1_a.wav`). The
//! split is by speaker, never by file, so no voice appears on both sides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{wav_duration_seconds, AudioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub speaker_id: String,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub entries: Vec<CorpusEntry>,
    pub train_duration_s: f64,
    pub test_duration_s: f64,
}

impl CorpusManifest {
    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn speakers_in(&self, split: Split) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .entries_in(split)
            .map(|e| e.speaker_id.as_str())
            .collect();
        v.sort();
        v.dedup();
        v
    }

    /// True when no speaker appears in both splits.
    pub fn splits_are_speaker_disjoint(&self) -> bool {
        let train = self.speakers_in(Split::Train);
        self.speakers_in(Split::Test)
            .iter()
            .all(|s| !train.contains(s))
    }
}

fn speaker_of(path: &Path, root: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let mut comps = rel.components();
    let first = comps.next()?.as_os_str().to_string_lossy().into_owned();
    if comps.next().is_some() {
        // file sits inside a speaker subdirectory
        return Some(first);
    }
    // flat layout: speaker prefix up to the first '_' or '-'
    let stem = path.file_stem()?.to_string_lossy().into_owned();
    let cut = stem.find(['_', '-']).unwrap_or(stem.len());
    Some(stem[..cut].to_string())
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), AudioError> {
    let mut items: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    items.sort();
    for p in items {
        if p.is_dir() {
            collect_wavs(&p, out)?;
        } else if p.extension().map(|e| e.eq_ignore_ascii_case("wav")).unwrap_or(false) {
            out.push(p);
        }
    }
    Ok(())
}

/// Scan a directory of WAV files and derive a deterministic, speaker-disjoint
/// train/test split. `train_fraction` of the speakers (rounded, but at least
/// one on each side) go to the train split.
pub fn ingest_corpus(
    dir: impl AsRef<Path>,
    train_fraction: f64,
    seed: u64,
) -> Result<CorpusManifest, AudioError> {
    assert!(
        (0.0..=1.0).contains(&train_fraction),
        "train_fraction must be in [0, 1]"
    );
    let root = dir.as_ref();
    let mut files = Vec::new();
    collect_wavs(root, &mut files)?;
    if files.is_empty() {
        return Err(AudioError::EmptyCorpus);
    }

    let mut by_speaker: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for f in files {
        let spk = speaker_of(&f, root).unwrap_or_else(|| "unknown".into());
        by_speaker.entry(spk).or_default().push(f);
    }
    if by_speaker.len() < 2 {
        return Err(AudioError::SingleSpeaker);
    }

    let mut speakers: Vec<String> = by_speaker.keys().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    speakers.shuffle(&mut rng);
    let n_train = ((speakers.len() as f64 * train_fraction).round() as usize)
        .clamp(1, speakers.len() - 1);

    let mut entries = Vec::new();
    let mut train_duration_s = 0.0;
    let mut test_duration_s = 0.0;
    for (i, spk) in speakers.iter().enumerate() {
        let split = if i < n_train { Split::Train } else { Split::Test };
        for path in &by_speaker[spk] {
            let d = wav_duration_seconds(path)?;
            match split {
                Split::Train => train_duration_s += d,
                Split::Test => test_duration_s += d,
            }
            entries.push(CorpusEntry {
                path: path.clone(),
                speaker_id: spk.clone(),
                split,
            });
        }
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(CorpusManifest {
        entries,
        train_duration_s,
        test_duration_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{write_wav, PcmSignal};

    fn make_corpus(dir: &Path, speakers: usize, files_each: usize) {
        for s in 0..speakers {
            let spk_dir = dir.join(format!("spk{s:02}"));
            std::fs::create_dir_all(&spk_dir).unwrap();
            for f in 0..files_each {
                let sig = PcmSignal::new(vec![(s * 100 + f) as i16; 800], "x");
                write_wav(&sig, spk_dir.join(format!("utt{f}.wav"))).unwrap();
            }
        }
    }

    fn tmpdir(name: &str) -> PathBuf {
        let p = std::env::temp_dir().join(format!("transteg-corpus-{}-{name}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p).unwrap();
        p
    }

    #[test]
    fn ten_speakers_fraction_080_gives_8_2() {
        let dir = tmpdir("split");
        make_corpus(&dir, 10, 2);
        let m = ingest_corpus(&dir, 0.8, 1).unwrap();
        assert_eq!(m.speakers_in(Split::Train).len(), 8);
        assert_eq!(m.speakers_in(Split::Test).len(), 2);
        assert!(m.splits_are_speaker_disjoint());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn same_seed_same_split() {
        let dir = tmpdir("det");
        make_corpus(&dir, 6, 1);
        let a = ingest_corpus(&dir, 0.5, 9).unwrap();
        let b = ingest_corpus(&dir, 0.5, 9).unwrap();
        let key = |m: &CorpusManifest| {
            m.entries
                .iter()
                .map(|e| (e.path.clone(), e.split == Split::Train))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn single_speaker_rejected() {
        let dir = tmpdir("single");
        make_corpus(&dir, 1, 3);
        assert!(matches!(
            ingest_corpus(&dir, 0.8, 1),
            Err(AudioError::SingleSpeaker)
        ));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_dir_rejected() {
        let dir = tmpdir("empty");
        assert!(matches!(
            ingest_corpus(&dir, 0.8, 1),
            Err(AudioError::EmptyCorpus)
        ));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn flat_layout_uses_filename_prefix() {
        let dir = tmpdir("flat");
        for s in 0..3 {
            for f in 0..2 {
                let sig = PcmSignal::new(vec![1i16; 160], "x");
                write_wav(&sig, dir.join(format!("spk{s}_utt{f}.wav"))).unwrap();
            }
        }
        let m = ingest_corpus(&dir, 0.67, 4).unwrap();
        let mut all = m.speakers_in(Split::Train);
        all.extend(m.speakers_in(Split::Test));
        all.sort();
        assert_eq!(all, vec!["spk0", "spk1", "spk2"]);
        assert!(m.splits_are_speaker_disjoint());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
