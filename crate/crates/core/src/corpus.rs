//! Labelled synthetic corpora with known speaker latents, and the corpus
//! file format.
//!
//! Every frame of sound `s` spoken by speaker `k` is
//! `prototype(s) + effect(s) · latent(k) + noise`, with prototypes and
//! per-sound effect matrices drawn once from the seed and latents drawn
//! from the unit cube.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::alignment::SoundId;
use crate::error::{Error, Result};
use crate::model_io::{read_text, write_atomic};
use crate::net::epoch_order;

pub const CORPUS_HEADER: &str = "#svcnet-corpus v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    pub n_words: usize,
    /// Size of the phone inventory words draw from.
    pub n_phones: usize,
    pub phones_per_word: usize,
    pub states_per_phone: usize,
    pub frames_per_state: usize,
    pub noise_std: f64,
    /// Standard deviation of the entries of the per-sound speaker-effect matrices.
    pub speaker_scale: f64,
    /// Fraction of the vocabulary each speaker utters.
    pub word_fraction: f64,
    pub seed: u64,
    pub feature_dim: usize,
    pub latent_dim: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            n_words: 10,
            n_phones: 8,
            phones_per_word: 3,
            states_per_phone: 3,
            frames_per_state: 4,
            noise_std: 0.05,
            speaker_scale: 1.0,
            word_fraction: 1.0,
            seed: 1,
            feature_dim: 8,
            latent_dim: 2,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_speakers", self.n_speakers),
            ("n_words", self.n_words),
            ("n_phones", self.n_phones),
            ("phones_per_word", self.phones_per_word),
            ("states_per_phone", self.states_per_phone),
            ("frames_per_state", self.frames_per_state),
            ("feature_dim", self.feature_dim),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::data(format!("{name} must be at least 1")));
        }
        if self.phones_per_word > self.n_phones {
            return Err(Error::data(format!(
                "phones_per_word {} exceeds the phone inventory {}",
                self.phones_per_word, self.n_phones
            )));
        }
        let sets = (0..self.phones_per_word).fold(1u128, |c, k| {
            c.saturating_mul((self.n_phones - k) as u128) / (k as u128 + 1)
        });
        if (self.n_words as u128) > sets {
            return Err(Error::data(format!(
                "{} words need distinct phone sets but only {sets} exist",
                self.n_words
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::data(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(self.speaker_scale >= 0.0 && self.speaker_scale.is_finite()) {
            return Err(Error::data("speaker_scale must be >= 0"));
        }
        if !(self.word_fraction > 0.0 && self.word_fraction <= 1.0) {
            return Err(Error::data(format!(
                "word_fraction must be in (0, 1], got {}",
                self.word_fraction
            )));
        }
        Ok(())
    }

    /// Words each speaker utters.
    pub fn words_per_speaker(&self) -> usize {
        ((self.word_fraction * self.n_words as f64).round() as usize).clamp(1, self.n_words)
    }

    pub fn frames_per_word(&self) -> usize {
        self.phones_per_word * self.states_per_phone * self.frames_per_state
    }

    pub fn expected_frames(&self) -> usize {
        self.n_speakers * self.words_per_speaker() * self.frames_per_word()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub speaker: u32,
    pub utterance: u32,
    pub word: u32,
    pub phone: u32,
    pub state: u32,
    /// Position within the utterance.
    pub frame: u32,
    pub features: Vec<f64>,
}

impl Frame {
    pub fn sound(&self) -> SoundId {
        SoundId::new(self.phone, self.state)
    }
}

/// A contiguous run of frames belonging to one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: u32,
    pub speaker: u32,
    pub word: u32,
    pub frames: std::ops::Range<usize>,
}

/// Frames in temporal order: speakers, then their utterances, then frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub feature_dim: usize,
    pub n_speakers: usize,
    pub n_words: usize,
    pub n_phones: usize,
    pub states_per_phone: usize,
    pub frames: Vec<Frame>,
}

impl Corpus {
    pub fn speakers(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.frames.iter().map(|f| f.speaker).collect();
        set.into_iter().collect()
    }

    pub fn frames_of(&self, speaker: u32) -> impl Iterator<Item = &Frame> + '_ {
        self.frames.iter().filter(move |f| f.speaker == speaker)
    }

    /// Utterances in file order, each a maximal run of frames sharing an id.
    pub fn utterances(&self) -> Vec<Utterance> {
        let mut out: Vec<Utterance> = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            match out.last_mut() {
                Some(u) if u.id == f.utterance && u.frames.end == i => u.frames.end = i + 1,
                _ => out.push(Utterance {
                    id: f.utterance,
                    speaker: f.speaker,
                    word: f.word,
                    frames: i..i + 1,
                }),
            }
        }
        out
    }

    pub fn utterances_of(&self, speaker: u32) -> Vec<Utterance> {
        self.utterances().into_iter().filter(|u| u.speaker == speaker).collect()
    }

    /// Sounds that occur in the corpus, with their frame counts.
    pub fn sound_counts(&self) -> BTreeMap<SoundId, usize> {
        let mut counts = BTreeMap::new();
        for f in &self.frames {
            *counts.entry(f.sound()).or_insert(0) += 1;
        }
        counts
    }

    /// Keeps only the frames of the given speakers, in original order.
    pub fn restrict_to(&self, speakers: &BTreeSet<u32>) -> Corpus {
        Corpus {
            frames: self
                .frames
                .iter()
                .filter(|f| speakers.contains(&f.speaker))
                .cloned()
                .collect(),
            ..self.header_only()
        }
    }

    fn header_only(&self) -> Corpus {
        Corpus {
            feature_dim: self.feature_dim,
            n_speakers: self.n_speakers,
            n_words: self.n_words,
            n_phones: self.n_phones,
            states_per_phone: self.states_per_phone,
            frames: Vec::new(),
        }
    }
}

/// A generated corpus with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub corpus: Corpus,
    /// Indexed by speaker id.
    pub latents: Vec<Vec<f64>>,
    /// Phone sequence of each word.
    pub lexicon: Vec<Vec<u32>>,
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (f_dim, l_dim) = (spec.feature_dim, spec.latent_dim);

    // distinct phone sets, so no two words are anagrams of each other
    let mut lexicon: Vec<Vec<u32>> = Vec::with_capacity(spec.n_words);
    let mut used = BTreeSet::new();
    while lexicon.len() < spec.n_words {
        let word: Vec<u32> = epoch_order(spec.n_phones, &mut rng)
            .into_iter()
            .take(spec.phones_per_word)
            .map(|p| p as u32)
            .collect();
        let mut set = word.clone();
        set.sort_unstable();
        if used.insert(set) {
            lexicon.push(word);
        }
    }

    let n_sounds = spec.n_phones * spec.states_per_phone;
    let prototypes: Vec<Vec<f64>> = (0..n_sounds)
        .map(|_| (0..f_dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let effect = Normal::new(0.0, spec.speaker_scale).map_err(|e| Error::data(e.to_string()))?;
    // row-major f_dim x l_dim per sound
    let effects: Vec<Vec<f64>> = (0..n_sounds)
        .map(|_| (0..f_dim * l_dim).map(|_| effect.sample(&mut rng)).collect())
        .collect();
    let latents: Vec<Vec<f64>> = (0..spec.n_speakers)
        .map(|_| (0..l_dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::data(e.to_string()))?;

    let words_per_speaker = spec.words_per_speaker();
    let mut frames = Vec::with_capacity(spec.expected_frames());
    let mut utterance = 0u32;
    for (speaker, latent) in latents.iter().enumerate() {
        let words = epoch_order(spec.n_words, &mut rng);
        for &word in words.iter().take(words_per_speaker) {
            let mut index = 0u32;
            for &phone in &lexicon[word] {
                for state in 0..spec.states_per_phone {
                    let sound = phone as usize * spec.states_per_phone + state;
                    let center: Vec<f64> = (0..f_dim)
                        .map(|i| {
                            let row = &effects[sound][i * l_dim..(i + 1) * l_dim];
                            prototypes[sound][i]
                                + row.iter().zip(latent).map(|(m, z)| m * z).sum::<f64>()
                        })
                        .collect();
                    for _ in 0..spec.frames_per_state {
                        let features = center
                            .iter()
                            .map(|c| c + if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 })
                            .collect();
                        frames.push(Frame {
                            speaker: speaker as u32,
                            utterance,
                            word: word as u32,
                            phone,
                            state: state as u32,
                            frame: index,
                            features,
                        });
                        index += 1;
                    }
                }
            }
            utterance += 1;
        }
    }

    Ok(Generated {
        corpus: Corpus {
            feature_dim: f_dim,
            n_speakers: spec.n_speakers,
            n_words: spec.n_words,
            n_phones: spec.n_phones,
            states_per_phone: spec.states_per_phone,
            frames,
        },
        latents,
        lexicon,
    })
}

fn column_list(feature_dim: usize) -> String {
    let mut cols = String::from("speaker,utterance,word,phone,state,frame");
    for i in 0..feature_dim {
        write!(cols, ",f_{i}").expect("infallible");
    }
    cols
}

pub fn corpus_to_text(corpus: &Corpus) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{CORPUS_HEADER} features={} speakers={} words={} phones={} states={} columns={}",
        corpus.feature_dim,
        corpus.n_speakers,
        corpus.n_words,
        corpus.n_phones,
        corpus.states_per_phone,
        column_list(corpus.feature_dim)
    )
    .expect("infallible");
    for f in &corpus.frames {
        write!(
            out,
            "{},{},{},{},{},{}",
            f.speaker, f.utterance, f.word, f.phone, f.state, f.frame
        )
        .expect("infallible");
        for v in &f.features {
            write!(out, ",{v:?}").expect("infallible");
        }
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_atomic(path, corpus_to_text(corpus).as_bytes())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    corpus_from_text(&read_text(path)?, path)
}

pub fn corpus_from_text(text: &str, origin: &Path) -> Result<Corpus> {
    let ingest = |line: usize, msg: String| Error::Ingest {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::data(format!("{}: corpus file is empty", origin.display())));
    };
    let rest = header
        .strip_prefix(CORPUS_HEADER)
        .ok_or_else(|| ingest(1, format!("expected header starting with `{CORPUS_HEADER}`")))?;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for kv in rest.split_ascii_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ingest(1, format!("malformed header field `{kv}`")))?;
        fields.insert(k, v);
    }
    let count = |key: &str| -> Result<usize> {
        let v = fields
            .get(key)
            .ok_or_else(|| ingest(1, format!("header is missing `{key}`")))?;
        v.parse::<usize>()
            .map_err(|_| ingest(1, format!("header field `{key}` is not a count")))
    };
    let feature_dim = count("features")?;
    let mut corpus = Corpus {
        feature_dim,
        n_speakers: count("speakers")?,
        n_words: count("words")?,
        n_phones: count("phones")?,
        states_per_phone: count("states")?,
        frames: Vec::new(),
    };
    if fields.get("columns").copied() != Some(column_list(feature_dim).as_str()) {
        return Err(ingest(1, "column list does not match the feature count".into()));
    }

    for (i, line) in lines {
        let n = i + 1;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 + feature_dim {
            return Err(ingest(
                n,
                format!("expected {} fields, found {}", 6 + feature_dim, parts.len()),
            ));
        }
        let label = |k: usize| -> Result<u32> {
            parts[k]
                .trim()
                .parse::<u32>()
                .map_err(|_| ingest(n, format!("field {} `{}` is not a label", k + 1, parts[k])))
        };
        let features = parts[6..]
            .iter()
            .enumerate()
            .map(|(k, p)| match p.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(ingest(n, format!("feature f_{k} `{p}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let frame = Frame {
            speaker: label(0)?,
            utterance: label(1)?,
            word: label(2)?,
            phone: label(3)?,
            state: label(4)?,
            frame: label(5)?,
            features,
        };
        if frame.speaker as usize >= corpus.n_speakers
            || frame.word as usize >= corpus.n_words
            || frame.phone as usize >= corpus.n_phones
            || frame.state as usize >= corpus.states_per_phone
        {
            return Err(ingest(n, "label outside the declared inventory".into()));
        }
        corpus.frames.push(frame);
    }
    if corpus.frames.is_empty() {
        return Err(Error::data(format!("{}: corpus has no frames", origin.display())));
    }
    Ok(corpus)
}

pub fn latents_to_text(latents: &[Vec<f64>]) -> String {
    let dim = latents.first().map_or(0, Vec::len);
    let mut out = String::from("speaker");
    for i in 0..dim {
        write!(out, ",z_{i}").expect("infallible");
    }
    out.push('\n');
    for (k, z) in latents.iter().enumerate() {
        write!(out, "{k}").expect("infallible");
        for v in z {
            write!(out, ",{v:?}").expect("infallible");
        }
        out.push('\n');
    }
    out
}

pub fn load_latents(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Ingest {
            path: path.to_path_buf(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let mut parts = line.split(',');
        let speaker: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad speaker id"))?;
        if speaker != out.len() {
            return Err(bad("speakers must be listed in order"));
        }
        let z = parts
            .map(|p| p.parse::<f64>().map_err(|_| bad("bad latent value")))
            .collect::<Result<Vec<_>>>()?;
        out.push(z);
    }
    Ok(out)
}

/// Partitions speakers into train and test sets.
///
/// The train side gets `round(train_fraction · n)` speakers, clamped so both
/// sides are non-empty.
pub fn split_corpus(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    let (train, test) = split_speakers(&corpus.speakers(), train_fraction, seed)?;
    Ok((corpus.restrict_to(&train), corpus.restrict_to(&test)))
}

pub fn split_speakers(
    speakers: &[u32],
    train_fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<u32>, BTreeSet<u32>)> {
    let n = speakers.len();
    if n < 2 {
        return Err(Error::data(format!("need at least 2 speakers to split, have {n}")));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::data(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = epoch_order(n, &mut rng);
    let train = order[..n_train].iter().map(|&i| speakers[i]).collect();
    let test = order[n_train..].iter().map(|&i| speakers[i]).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusSpec {
        CorpusSpec {
            n_speakers: 4,
            n_words: 3,
            n_phones: 4,
            phones_per_word: 2,
            word_fraction: 1.0,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_corpus(&small()).unwrap(), generate_corpus(&small()).unwrap());
    }

    #[test]
    fn full_coverage_frame_count() {
        let spec = small();
        let g = generate_corpus(&spec).unwrap();
        assert_eq!(g.corpus.frames.len(), 4 * 3 * 2 * 3 * 4);
        assert_eq!(g.corpus.utterances().len(), 12);
    }

    #[test]
    fn noiseless_frames_repeat_per_speaker_sound() {
        let spec = CorpusSpec {
            noise_std: 0.0,
            ..small()
        };
        let g = generate_corpus(&spec).unwrap();
        let mut seen: BTreeMap<(u32, SoundId), &Vec<f64>> = BTreeMap::new();
        for f in &g.corpus.frames {
            let prev = seen.entry((f.speaker, f.sound())).or_insert(&f.features);
            assert_eq!(*prev, &f.features);
        }
        // distinct latents give distinct frames for the same sound
        for s in g.corpus.sound_counts().keys() {
            let codes: Vec<_> = seen.iter().filter(|((_, t), _)| t == s).map(|(_, v)| *v).collect();
            for i in 0..codes.len() {
                for j in i + 1..codes.len() {
                    assert_ne!(codes[i], codes[j]);
                }
            }
        }
    }

    #[test]
    fn latents_in_unit_cube_and_features_finite() {
        let g = generate_corpus(&CorpusSpec::default()).unwrap();
        assert!(g.latents.iter().flatten().all(|z| (0.0..1.0).contains(z)));
        assert!(g.corpus.frames.iter().flat_map(|f| &f.features).all(|v| v.is_finite()));
        assert_eq!(g.corpus.frames.len(), CorpusSpec::default().expected_frames());
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(generate_corpus(&CorpusSpec { n_speakers: 0, ..small() }).is_err());
        assert!(generate_corpus(&CorpusSpec { noise_std: -1.0, ..small() }).is_err());
        assert!(generate_corpus(&CorpusSpec { phones_per_word: 9, ..small() }).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = generate_corpus(&small()).unwrap();
        let text = corpus_to_text(&g.corpus);
        assert_eq!(corpus_from_text(&text, Path::new("c")).unwrap(), g.corpus);
    }

    #[test]
    fn non_numeric_feature_names_line() {
        let g = generate_corpus(&small()).unwrap();
        let text = corpus_to_text(&g.corpus);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[5] = lines[5].replacen(",0.", ",zz", 1);
        let err = corpus_from_text(&lines.join("\n"), Path::new("c")).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 6, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_data_error() {
        assert!(matches!(corpus_from_text("", Path::new("c")), Err(Error::Data(_))));
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let spec = CorpusSpec {
            n_words: 2,
            ..CorpusSpec::default()
        };
        let g = generate_corpus(&spec).unwrap();
        let (train, test) = split_corpus(&g.corpus, 0.5, 7).unwrap();
        let (a, b): (BTreeSet<u32>, BTreeSet<u32>) =
            (train.speakers().into_iter().collect(), test.speakers().into_iter().collect());
        assert_eq!((a.len(), b.len()), (10, 10));
        assert!(a.is_disjoint(&b));
        let mut ids: Vec<u32> = train
            .utterances()
            .iter()
            .chain(test.utterances().iter())
            .map(|u| u.id)
            .collect();
        ids.sort_unstable();
        let mut all: Vec<u32> = g.corpus.utterances().iter().map(|u| u.id).collect();
        all.sort_unstable();
        assert_eq!(ids, all);
        assert_eq!(split_corpus(&g.corpus, 0.5, 7).unwrap().0, train);
    }

    #[test]
    fn split_needs_two_speakers() {
        let g = generate_corpus(&CorpusSpec { n_speakers: 1, ..small() }).unwrap();
        assert!(split_corpus(&g.corpus, 0.5, 0).is_err());
    }
}
