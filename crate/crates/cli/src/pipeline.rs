//! The pipeline stages behind each CLI verb.
//!
//! Every stage reads its inputs from, and writes its outputs to, the
//! output directory, so stages can run in separate processes. All files are
//! written atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use svcnet::alignment::{refine_states, segment_uniform};
use svcnet::analysis::{principal_axis_rotation, r_squared, AffineFit};
use svcnet::corpus::{generate_corpus, latents_to_text, load_corpus, load_latents, save_corpus, Corpus};
use svcnet::model_io::write_atomic;
use svcnet::ppc::{encode_frame, encoder_file_name, load_encoders, save_encoders, train_encoders, EncoderSet};
use svcnet::recognizer::{
    ablation_eval, compute_average_svc, error_rate, evaluate, AblationTable, AverageSvc, AvailabilityFlags,
    PredictionRecord, RecognizerNet,
};
use svcnet::svc::{
    extract_svc, final_svc, speaker_streams, svc_stability, train_svcnet_on_streams, SoundLayout, SpeakerStream,
    SvcNet, SvcVector, SVC_MODEL_FILE,
};
use svcnet::SoundId;

use crate::config::RunConfig;
use crate::report::{metrics_csv, prediction_log, write_report, Provenance};
use crate::{PipelineError, Result};

pub const LATENTS_FILE: &str = "latents.csv";
pub const SVC_CODES_FILE: &str = "svc_codes.csv";
pub const RECOGNIZER_FILE: &str = "recognizer.model";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ppc,
    Svc,
    Rec,
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppc" => Ok(Stage::Ppc),
            "svc" => Ok(Stage::Svc),
            "rec" => Ok(Stage::Rec),
            other => Err(PipelineError::Usage(format!(
                "unknown stage `{other}` (valid: ppc, svc, rec)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    PpcScatter,
    SvcTrajectory,
    SvcHalves,
}

impl PlotKind {
    pub const NAMES: [&'static str; 3] = ["ppc_scatter", "svc_trajectory", "svc_halves"];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::PpcScatter => "ppc_scatter",
            PlotKind::SvcTrajectory => "svc_trajectory",
            PlotKind::SvcHalves => "svc_halves",
        }
    }
}

impl FromStr for PlotKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppc_scatter" => Ok(PlotKind::PpcScatter),
            "svc_trajectory" => Ok(PlotKind::SvcTrajectory),
            "svc_halves" => Ok(PlotKind::SvcHalves),
            other => Err(PipelineError::Usage(format!(
                "unknown plot kind `{other}` (valid: {})",
                PlotKind::NAMES.join(", ")
            ))),
        }
    }
}

/// Row of the word-subset protocol report.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRow {
    /// `none`, `disjoint` or `same`.
    pub source: &'static str,
    pub errors: usize,
    pub utterances: usize,
    pub records: Vec<PredictionRecord>,
}

impl SubsetRow {
    pub fn error_rate(&self) -> f64 {
        error_rate(&self.records)
    }
}

/// A test speaker's code trajectory over their whole stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub speaker: u32,
    pub codes: Vec<SvcVector>,
    pub word_of: Vec<usize>,
    pub word_ends: Vec<usize>,
}

impl Trajectory {
    pub fn displacements(&self) -> svcnet::Result<Vec<f64>> {
        svc_stability(&self.codes, &self.word_ends)
    }
}

/// Codes from the first and second half of a speaker's words.
#[derive(Debug, Clone, PartialEq)]
pub struct Halves {
    pub speaker: u32,
    pub first: SvcVector,
    pub second: SvcVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub ablation: AblationTable,
    pub subsets: Vec<SubsetRow>,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSummary {
    pub frames: usize,
    pub utterances: usize,
    pub speakers: usize,
}

/// Number of leading words used for the code in the word-subset protocol;
/// the remaining `ceil(n/2)` words are recognized.
pub fn disjoint_word_count(words: usize) -> usize {
    words - words.div_ceil(2)
}

pub struct Pipeline {
    pub config: RunConfig,
    pub out: PathBuf,
}

fn missing(what: impl Into<String>) -> PipelineError {
    PipelineError::Missing(what.into())
}

fn csv_codes(codes: &BTreeMap<u32, SvcVector>) -> String {
    let dim = codes.values().next().map_or(0, SvcVector::dim);
    let mut out = String::from("speaker");
    for i in 0..dim {
        write!(out, ",svc_{i}").expect("infallible");
    }
    out.push('\n');
    for (s, c) in codes {
        write!(out, "{s}").expect("infallible");
        for v in &c.0 {
            write!(out, ",{v:?}").expect("infallible");
        }
        out.push('\n');
    }
    out
}

fn parse_codes(text: &str, path: &Path) -> Result<BTreeMap<u32, SvcVector>> {
    let mut out = BTreeMap::new();
    for (i, line) in crate::report::strip_header(text).enumerate().skip(1) {
        let bad = || {
            PipelineError::Model(svcnet::Error::Ingest {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("malformed code row `{line}`"),
            })
        };
        let mut parts = line.split(',');
        let speaker: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let values = parts.map(|p| p.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        out.insert(speaker, SvcVector(values));
    }
    if out.is_empty() {
        return Err(missing(format!("{} holds no voice codes", path.display())));
    }
    Ok(out)
}

impl Pipeline {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            config,
            out: out.into(),
        }
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.out.join(&self.config.paths.corpus)
    }

    pub fn latents_path(&self) -> PathBuf {
        self.out.join(LATENTS_FILE)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out.join(&self.config.paths.models)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out.join(&self.config.paths.reports)
    }

    fn provenance(&self) -> Provenance {
        Provenance::of(&self.config)
    }

    fn ensure_dir(dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| svcnet::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(())
    }

    pub fn gen(&self) -> Result<GenSummary> {
        let spec = self.config.corpus_spec();
        let generated = generate_corpus(&spec)?;
        let corpus_path = self.corpus_path();
        if let Some(parent) = corpus_path.parent() {
            Self::ensure_dir(parent)?;
        }
        save_corpus(&generated.corpus, &corpus_path)?;
        write_atomic(&self.latents_path(), latents_to_text(&generated.latents).as_bytes())?;
        Ok(GenSummary {
            frames: generated.corpus.frames.len(),
            utterances: generated.corpus.utterances().len(),
            speakers: generated.corpus.speakers().len(),
        })
    }

    /// The corpus with state labels reassigned by the configured alignment.
    pub fn load_corpus(&self) -> Result<Corpus> {
        let path = self.corpus_path();
        if !path.exists() {
            return Err(missing(format!("corpus file {} (run `gen` first)", path.display())));
        }
        let mut corpus = load_corpus(&path)?;
        align_states(&mut corpus, &self.config.alignment)?;
        Ok(corpus)
    }

    pub fn split(&self, corpus: &Corpus) -> Result<(Corpus, Corpus)> {
        Ok(svcnet::corpus::split_corpus(
            corpus,
            self.config.train_fraction,
            self.config.seeds().split,
        )?)
    }

    pub fn train(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        match stage {
            Stage::Ppc => self.train_ppc(),
            Stage::Svc => self.train_svc(),
            Stage::Rec => self.train_rec(),
        }
    }

    fn train_ppc(&self) -> Result<Vec<PathBuf>> {
        let corpus = self.load_corpus()?;
        let (train, _) = self.split(&corpus)?;
        let fits = train_encoders(
            &train.frames,
            self.config.ppc.code_dim,
            &self.config.ppc_train(),
            self.config.ppc.min_frames,
        )?;
        let models = self.models_dir();
        Self::ensure_dir(&models)?;
        for entry in fs::read_dir(&models).map_err(|e| svcnet::Error::Io {
            path: models.clone(),
            source: e,
        })? {
            let entry = entry.map_err(|e| svcnet::Error::Io {
                path: models.clone(),
                source: e,
            })?;
            if entry.file_name().to_string_lossy().starts_with("ppc_") {
                let _ = fs::remove_file(entry.path());
            }
        }
        let encoders: EncoderSet = fits.iter().map(|(&s, f)| (s, f.encoder.clone())).collect();
        let written = save_encoders(&encoders, &models)?;

        let reports = self.reports_dir();
        Self::ensure_dir(&reports)?;
        let epochs = self.config.ppc.epochs;
        let mean_losses: Vec<f64> = (0..epochs)
            .map(|e| fits.values().map(|f| f.log.epoch_losses[e]).sum::<f64>() / fits.len() as f64)
            .collect();
        let prov = self.provenance();
        write_report(&reports.join("metrics_ppc.csv"), &prov, "ppc metrics", &metrics_csv(&mean_losses))?;
        let mut fit_csv = String::from("sound,initial_mse,final_mse\n");
        for (s, f) in &fits {
            writeln!(fit_csv, "{s},{:?},{:?}", f.initial_mse, f.final_mse).expect("infallible");
        }
        write_report(&reports.join("ppc_fit.csv"), &prov, "ppc reconstruction", &fit_csv)?;
        Ok(written)
    }

    pub fn load_encoders(&self) -> Result<EncoderSet> {
        let dir = self.models_dir();
        load_encoders(&dir).map_err(|_| {
            missing(format!(
                "PPC encoder files {}/ppc_* (run `train --stage ppc` first)",
                dir.display()
            ))
        })
    }

    /// Layout over the encoded sounds.
    pub fn layout(&self, encoders: &EncoderSet) -> Result<SoundLayout> {
        let dims: BTreeSet<usize> = encoders.values().map(|e| e.code_dim()).collect();
        if dims.len() != 1 {
            return Err(PipelineError::Model(svcnet::Error::Structural(
                "encoders disagree on code dimension".into(),
            )));
        }
        Ok(SoundLayout::new(
            encoders.keys().copied(),
            *dims.first().expect("one dimension"),
        )?)
    }

    /// Streams of the given corpus, skipping frames of sounds without an encoder.
    pub fn streams(&self, corpus: &Corpus, encoders: &EncoderSet) -> Result<Vec<SpeakerStream>> {
        let mut known = corpus.clone();
        let before = known.frames.len();
        known.frames.retain(|f| encoders.contains_key(&f.sound()));
        if known.frames.len() != before {
            log::warn!(
                "skipping {} frame(s) of sounds without an encoder",
                before - known.frames.len()
            );
        }
        Ok(speaker_streams(&known, encoders)?)
    }

    fn train_svc(&self) -> Result<Vec<PathBuf>> {
        let encoders = self.load_encoders()?;
        let corpus = self.load_corpus()?;
        let (train, _) = self.split(&corpus)?;
        let layout = self.layout(&encoders)?;
        let streams = self.streams(&train, &encoders)?;
        let config = self.config.svc_config()?;
        let (net, log) = train_svcnet_on_streams(&streams, &layout, &config)?;
        let models = self.models_dir();
        net.save(&models)?;

        let mut codes = BTreeMap::new();
        for s in &streams {
            let traj = extract_svc(&net, &s.presentations, config.mode)?;
            codes.insert(s.speaker, final_svc(&traj)?);
        }
        let prov = self.provenance();
        let codes_path = models.join(SVC_CODES_FILE);
        write_report(&codes_path, &prov, "training speaker voice codes", &csv_codes(&codes))?;
        let reports = self.reports_dir();
        Self::ensure_dir(&reports)?;
        write_report(&reports.join("metrics_svc.csv"), &prov, "svc metrics", &metrics_csv(&log.epoch_losses))?;
        Ok(vec![models.join(SVC_MODEL_FILE), codes_path])
    }

    pub fn load_svc(&self) -> Result<SvcNet> {
        let dir = self.models_dir();
        if !dir.join(SVC_MODEL_FILE).exists() {
            return Err(missing(format!(
                "SVC network {}/{SVC_MODEL_FILE} (run `train --stage svc` first)",
                dir.display()
            )));
        }
        Ok(SvcNet::load(&dir)?)
    }

    pub fn load_training_codes(&self) -> Result<BTreeMap<u32, SvcVector>> {
        let path = self.models_dir().join(SVC_CODES_FILE);
        let text = fs::read_to_string(&path).map_err(|_| {
            missing(format!(
                "training voice codes {} (run `train --stage svc` first)",
                path.display()
            ))
        })?;
        parse_codes(&text, &path)
    }

    fn train_rec(&self) -> Result<Vec<PathBuf>> {
        let codes = self.load_training_codes()?;
        let corpus = self.load_corpus()?;
        let (train, _) = self.split(&corpus)?;
        let (net, log) = svcnet::recognizer::train_recognizer(&train, &codes, &self.config.rec_config())?;
        let path = self.models_dir().join(RECOGNIZER_FILE);
        net.save(&path)?;
        let reports = self.reports_dir();
        Self::ensure_dir(&reports)?;
        write_report(
            &reports.join("metrics_rec.csv"),
            &self.provenance(),
            "recognizer metrics",
            &metrics_csv(&log.epoch_losses),
        )?;
        Ok(vec![path])
    }

    pub fn load_recognizer(&self) -> Result<RecognizerNet> {
        let path = self.models_dir().join(RECOGNIZER_FILE);
        if !path.exists() {
            return Err(missing(format!(
                "recognizer {} (run `train --stage rec` first)",
                path.display()
            )));
        }
        Ok(RecognizerNet::load(&path)?)
    }

    pub fn average_svc(&self) -> Result<AverageSvc> {
        let codes: Vec<SvcVector> = self.load_training_codes()?.into_values().collect();
        Ok(compute_average_svc(&codes)?)
    }

    /// Whole-stream trajectories of the test speakers.
    pub fn test_trajectories(&self) -> Result<Vec<Trajectory>> {
        let encoders = self.load_encoders()?;
        let net = self.load_svc()?;
        let corpus = self.load_corpus()?;
        let (_, test) = self.split(&corpus)?;
        let mode = self.config.mode()?;
        self.streams(&test, &encoders)?
            .into_iter()
            .map(|s| {
                Ok(Trajectory {
                    speaker: s.speaker,
                    codes: extract_svc(&net, &s.presentations, mode)?,
                    word_ends: s.word_ends(),
                    word_of: s.word_of,
                })
            })
            .collect()
    }

    /// Codes of every speaker of `corpus` from the words at positions `words(n)`,
    /// where `n` is that speaker's word count.
    fn codes_from_words(
        &self,
        streams: &[SpeakerStream],
        net: &SvcNet,
        words: impl Fn(usize) -> std::ops::Range<usize>,
    ) -> Result<BTreeMap<u32, SvcVector>> {
        let mode = self.config.mode()?;
        streams
            .iter()
            .map(|s| {
                let sub = s.words(words(s.word_count()));
                let traj = extract_svc(net, &sub.presentations, mode)?;
                Ok((s.speaker, final_svc(&traj)?))
            })
            .collect()
    }

    /// Codes from the first `⌊n/2⌋` words and from the rest.
    pub fn halves(&self) -> Result<Vec<Halves>> {
        let encoders = self.load_encoders()?;
        let net = self.load_svc()?;
        let corpus = self.load_corpus()?;
        let (_, test) = self.split(&corpus)?;
        let streams = self.streams(&test, &encoders)?;
        let first = self.codes_from_words(&streams, &net, |n| 0..n / 2)?;
        let second = self.codes_from_words(&streams, &net, |n| n / 2..n)?;
        Ok(first
            .into_iter()
            .map(|(speaker, f)| Halves {
                speaker,
                first: f,
                second: second[&speaker].clone(),
            })
            .collect())
    }

    /// Affine fit from whole-stream codes to the true latents: fitted on the
    /// training speakers, scored on the test speakers.
    pub fn latent_r2(&self) -> Result<f64> {
        let latents = load_latents(&self.latents_path())
            .map_err(|_| missing(format!("latent sidecar {}", self.latents_path().display())))?;
        let train_codes = self.load_training_codes()?;
        let test: Vec<(u32, SvcVector)> = self
            .test_trajectories()?
            .into_iter()
            .map(|t| Ok((t.speaker, final_svc(&t.codes)?)))
            .collect::<Result<_>>()?;
        let latent = |s: u32| latents[s as usize].clone();
        let x_train: Vec<Vec<f64>> = train_codes.values().map(|c| c.0.clone()).collect();
        let y_train: Vec<Vec<f64>> = train_codes.keys().map(|&s| latent(s)).collect();
        let fit = AffineFit::fit(&x_train, &y_train)?;
        let x_test: Vec<Vec<f64>> = test.iter().map(|(_, c)| c.0.clone()).collect();
        let y_test: Vec<Vec<f64>> = test.iter().map(|(s, _)| latent(*s)).collect();
        Ok(r_squared(&fit.predict(&x_test), &y_test))
    }

    pub fn eval(&self) -> Result<EvalOutcome> {
        let recognizer = self.load_recognizer()?;
        let encoders = self.load_encoders()?;
        let net = self.load_svc()?;
        let avg = self.average_svc()?;
        let corpus = self.load_corpus()?;
        let (_, test) = self.split(&corpus)?;
        let streams = self.streams(&test, &encoders)?;
        let mode = self.config.mode()?;

        let mut trajectories = Vec::new();
        let mut full_codes = BTreeMap::new();
        for s in &streams {
            let codes = extract_svc(&net, &s.presentations, mode)?;
            full_codes.insert(s.speaker, final_svc(&codes)?);
            trajectories.push(Trajectory {
                speaker: s.speaker,
                codes,
                word_ends: s.word_ends(),
                word_of: s.word_of.clone(),
            });
        }
        let ablation = ablation_eval(&recognizer, &test, &full_codes, &avg)?;

        // recognize the last ceil(n/2) words of each speaker
        let mut tail = test.clone();
        let mut keep = BTreeSet::new();
        for s in test.speakers() {
            let utts = test.utterances_of(s);
            let skip = disjoint_word_count(utts.len());
            keep.extend(utts[skip..].iter().map(|u| u.id));
        }
        tail.frames.retain(|f| keep.contains(&f.utterance));
        let disjoint = self.codes_from_words(&streams, &net, |n| 0..disjoint_word_count(n))?;
        let same = self.codes_from_words(&streams, &net, |n| disjoint_word_count(n)..n)?;
        let flags = self.config.eval_flags().map_err(PipelineError::Usage)?;
        let mut subsets = Vec::new();
        for (source, codes, flags) in [
            ("none", &same, AvailabilityFlags::NONE),
            ("disjoint", &disjoint, flags),
            ("same", &same, flags),
        ] {
            let records = evaluate(&recognizer, &tail, codes, &avg, flags)?;
            subsets.push(SubsetRow {
                source,
                errors: records.iter().filter(|r| r.truth != r.predicted).count(),
                utterances: records.len(),
                records,
            });
        }

        let reports = self.reports_dir();
        Self::ensure_dir(&reports)?;
        let prov = self.provenance();
        write_report(&reports.join("ablation.csv"), &prov, "svc availability ablation", &ablation.to_csv())?;
        write_report(
            &reports.join("predictions_ablation.log"),
            &prov,
            "ablation predictions",
            &prediction_log(&ablation.predictions, None),
        )?;
        let mut subset_csv = String::from("source,error_rate,errors,utterances\n");
        let mut subset_log = String::new();
        for row in &subsets {
            writeln!(
                subset_csv,
                "{},{:?},{},{}",
                row.source,
                row.error_rate(),
                row.errors,
                row.utterances
            )
            .expect("infallible");
            subset_log.push_str(&prediction_log(&row.records, Some(row.source)));
        }
        write_report(&reports.join("word_subsets.csv"), &prov, "svc word-subset protocol", &subset_csv)?;
        write_report(
            &reports.join("predictions_word_subsets.log"),
            &prov,
            "word-subset predictions",
            &subset_log,
        )?;
        let mut stability = String::from("speaker,boundary,displacement\n");
        for t in &trajectories {
            for (k, d) in t.displacements()?.iter().enumerate() {
                writeln!(stability, "{},{},{d:?}", t.speaker, k + 1).expect("infallible");
            }
        }
        write_report(&reports.join("stability.csv"), &prov, "svc stability", &stability)?;

        Ok(EvalOutcome {
            ablation,
            subsets,
            trajectories,
        })
    }

    pub fn plot(&self, kind: PlotKind) -> Result<PathBuf> {
        let body = match kind {
            PlotKind::PpcScatter => self.ppc_scatter()?,
            PlotKind::SvcTrajectory => {
                let mut out = String::new();
                for (i, t) in self.test_trajectories()?.iter().enumerate() {
                    let csv = svcnet::svc::trajectory_csv(&t.codes, &t.word_of)?;
                    for (j, line) in csv.lines().enumerate() {
                        if j == 0 {
                            if i == 0 {
                                writeln!(out, "speaker,{line}").expect("infallible");
                            }
                        } else {
                            writeln!(out, "{},{line}", t.speaker).expect("infallible");
                        }
                    }
                }
                out
            }
            PlotKind::SvcHalves => {
                let halves = self.halves()?;
                let dim = halves.first().map_or(0, |h| h.first.dim());
                let mut out = String::from("speaker");
                for part in ["first", "second"] {
                    for i in 0..dim {
                        write!(out, ",{part}_{i}").expect("infallible");
                    }
                }
                out.push('\n');
                for h in &halves {
                    write!(out, "{}", h.speaker).expect("infallible");
                    for v in h.first.0.iter().chain(&h.second.0) {
                        write!(out, ",{v:?}").expect("infallible");
                    }
                    out.push('\n');
                }
                out
            }
        };
        let reports = self.reports_dir();
        Self::ensure_dir(&reports)?;
        let path = reports.join(format!("plot_{}.csv", kind.name()));
        write_report(&path, &self.provenance(), &format!("plot {}", kind.name()), &body)?;
        Ok(path)
    }

    pub fn plot_sound(&self, encoders: &EncoderSet) -> Result<SoundId> {
        let s = &self.config.plot.sound;
        if s.is_empty() {
            return Ok(*encoders.keys().next().expect("load_encoders never returns empty"));
        }
        let parsed = s
            .split_once('_')
            .and_then(|(p, st)| Some(SoundId::new(p.parse().ok()?, st.parse().ok()?)))
            .ok_or_else(|| PipelineError::Usage(format!("plot.sound must look like `3_1`, got `{s}`")))?;
        if !encoders.contains_key(&parsed) {
            return Err(missing(format!("encoder {}", encoder_file_name(parsed))));
        }
        Ok(parsed)
    }

    /// Per-frame codes of one sound for every speaker, rotated onto their
    /// principal axes.
    fn ppc_scatter(&self) -> Result<String> {
        let encoders = self.load_encoders()?;
        let sound = self.plot_sound(&encoders)?;
        let corpus = self.load_corpus()?;
        let encoder = &encoders[&sound];
        let mut rows = Vec::new();
        let mut codes = Vec::new();
        for (i, f) in corpus.frames.iter().enumerate() {
            if f.sound() == sound {
                rows.push((f.speaker, i));
                codes.push(encode_frame(encoder, &f.features)?.0);
            }
        }
        let rotated = principal_axis_rotation(&codes)?;
        let mut out = String::from("speaker,frame");
        for i in 0..encoder.code_dim() {
            write!(out, ",code_{i}").expect("infallible");
        }
        out.push('\n');
        for ((speaker, frame), code) in rows.iter().zip(&rotated) {
            write!(out, "{speaker},{frame}").expect("infallible");
            for v in code {
                write!(out, ",{v:?}").expect("infallible");
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Relabels states within each phone occurrence (a maximal run of frames of
/// one phone inside an utterance).
pub fn align_states(corpus: &mut Corpus, mode: &str) -> Result<()> {
    let n_states = corpus.states_per_phone;
    for u in corpus.utterances() {
        let mut start = u.frames.start;
        while start < u.frames.end {
            let phone = corpus.frames[start].phone;
            let mut end = start + 1;
            while end < u.frames.end && corpus.frames[end].phone == phone {
                end += 1;
            }
            let labels = match mode {
                "dtw" => {
                    let feats: Vec<&[f64]> = corpus.frames[start..end].iter().map(|f| f.features.as_slice()).collect();
                    refine_states(&feats, n_states)?
                }
                _ => segment_uniform(end - start, n_states)?,
            };
            for (f, s) in corpus.frames[start..end].iter_mut().zip(labels) {
                f.state = s as u32;
            }
            start = end;
        }
    }
    Ok(())
}
