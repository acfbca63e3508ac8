//! Run configuration: one TOML file, with command-line overrides on top.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use svcnet::corpus::CorpusSpec;
use svcnet::net::TrainConfig;
use svcnet::recognizer::{AvailabilityFlags, RecognizerConfig};
use svcnet::svc::{AccumulateMode, SvcConfig};

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; a stage without its own seed uses `seed + offset`.
    pub seed: u64,
    pub train_fraction: f64,
    /// `uniform` or `dtw`.
    pub alignment: String,
    pub paths: Paths,
    pub corpus: CorpusSection,
    pub ppc: PpcSection,
    pub svc: SvcSection,
    pub rec: RecSection,
    pub eval: EvalSection,
    pub plot: PlotSection,
}

/// Locations relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: String,
    pub models: String,
    pub reports: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub n_speakers: usize,
    pub n_words: usize,
    pub n_phones: usize,
    pub phones_per_word: usize,
    pub states_per_phone: usize,
    pub frames_per_state: usize,
    pub noise_std: f64,
    pub speaker_scale: f64,
    pub word_fraction: f64,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcSection {
    pub code_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_frames: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvcSection {
    pub code_dim: usize,
    pub flank: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// `feedback` or `zero_fill`.
    pub mode: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecSection {
    pub acoustic: usize,
    pub state: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Flags used for the code-bearing rows of the word-subset protocol,
    /// as three 0/1 digits: acoustic, state, word.
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSection {
    /// Sound for the code scatter as `<phone>_<state>`; empty picks the first.
    pub sound: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            train_fraction: 0.5,
            alignment: "uniform".into(),
            paths: Paths::default(),
            corpus: CorpusSection::default(),
            ppc: PpcSection::default(),
            svc: SvcSection::default(),
            rec: RecSection::default(),
            eval: EvalSection::default(),
            plot: PlotSection::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus.csv".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

impl Default for CorpusSection {
    fn default() -> Self {
        let d = CorpusSpec::default();
        Self {
            n_speakers: d.n_speakers,
            n_words: d.n_words,
            n_phones: d.n_phones,
            phones_per_word: d.phones_per_word,
            states_per_phone: d.states_per_phone,
            frames_per_state: d.frames_per_state,
            noise_std: d.noise_std,
            speaker_scale: d.speaker_scale,
            word_fraction: d.word_fraction,
            feature_dim: d.feature_dim,
            latent_dim: d.latent_dim,
            seed: None,
        }
    }
}

impl Default for PpcSection {
    fn default() -> Self {
        Self {
            code_dim: 2,
            learning_rate: 0.1,
            epochs: 300,
            min_frames: 2,
            seed: None,
        }
    }
}

impl Default for SvcSection {
    fn default() -> Self {
        let d = SvcConfig::default();
        Self {
            code_dim: d.code_dim,
            flank: d.flank,
            learning_rate: d.train.learning_rate,
            epochs: d.train.epochs,
            mode: d.mode.name().into(),
            seed: None,
        }
    }
}

impl Default for RecSection {
    fn default() -> Self {
        let d = RecognizerConfig::default();
        Self {
            acoustic: d.acoustic,
            state: d.state,
            window: d.window,
            learning_rate: d.train.learning_rate,
            epochs: d.train.epochs,
            seed: None,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { flags: "111".into() }
    }
}

impl Default for PlotSection {
    fn default() -> Self {
        Self { sound: String::new() }
    }
}

/// Seeds of every randomized stage, after defaults are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub corpus: u64,
    pub split: u64,
    pub ppc: u64,
    pub svc: u64,
    pub rec: u64,
}

impl std::fmt::Display for StageSeeds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "corpus={} split={} ppc={} svc={} rec={}",
            self.corpus, self.split, self.ppc, self.svc, self.rec
        )
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| PipelineError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(format!("train_fraction {} outside [0, 1]", self.train_fraction));
        }
        if !matches!(self.alignment.as_str(), "uniform" | "dtw") {
            return Err(format!("alignment must be uniform or dtw, got `{}`", self.alignment));
        }
        self.corpus_spec().validate().map_err(|e| e.to_string())?;
        self.mode().map_err(|e| e.to_string())?;
        self.eval_flags()?;
        for (name, lr) in [
            ("ppc", self.ppc.learning_rate),
            ("svc", self.svc.learning_rate),
            ("rec", self.rec.learning_rate),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(format!("{name}.learning_rate must be positive"));
            }
        }
        if self.ppc.code_dim == 0 || self.ppc.code_dim >= self.corpus.feature_dim {
            return Err("ppc.code_dim must be in [1, feature_dim)".into());
        }
        if self.svc.code_dim == 0 {
            return Err("svc.code_dim must be at least 1".into());
        }
        if self.rec.acoustic == 0 || self.rec.state == 0 {
            return Err("recognizer layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds {
            corpus: self.corpus.seed.unwrap_or(self.seed),
            split: self.seed.wrapping_add(1),
            ppc: self.ppc.seed.unwrap_or(self.seed.wrapping_add(2)),
            svc: self.svc.seed.unwrap_or(self.seed.wrapping_add(3)),
            rec: self.rec.seed.unwrap_or(self.seed.wrapping_add(4)),
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        let c = &self.corpus;
        CorpusSpec {
            n_speakers: c.n_speakers,
            n_words: c.n_words,
            n_phones: c.n_phones,
            phones_per_word: c.phones_per_word,
            states_per_phone: c.states_per_phone,
            frames_per_state: c.frames_per_state,
            noise_std: c.noise_std,
            speaker_scale: c.speaker_scale,
            word_fraction: c.word_fraction,
            seed: self.seeds().corpus,
            feature_dim: c.feature_dim,
            latent_dim: c.latent_dim,
        }
    }

    pub fn ppc_train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.ppc.learning_rate,
            epochs: self.ppc.epochs,
            seed: self.seeds().ppc,
        }
    }

    pub fn mode(&self) -> svcnet::Result<AccumulateMode> {
        self.svc.mode.parse()
    }

    pub fn svc_config(&self) -> svcnet::Result<SvcConfig> {
        Ok(SvcConfig {
            code_dim: self.svc.code_dim,
            flank: self.svc.flank,
            train: TrainConfig {
                learning_rate: self.svc.learning_rate,
                epochs: self.svc.epochs,
                seed: self.seeds().svc,
            },
            mode: self.mode()?,
            unheard_fill: 0.0,
        })
    }

    pub fn rec_config(&self) -> RecognizerConfig {
        RecognizerConfig {
            acoustic: self.rec.acoustic,
            state: self.rec.state,
            window: self.rec.window,
            train: TrainConfig {
                learning_rate: self.rec.learning_rate,
                epochs: self.rec.epochs,
                seed: self.seeds().rec,
            },
        }
    }

    pub fn eval_flags(&self) -> Result<AvailabilityFlags, String> {
        parse_flags(&self.eval.flags)
    }
}

pub fn parse_flags(s: &str) -> Result<AvailabilityFlags, String> {
    let b: Vec<bool> = s
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(format!("flags must be three 0/1 digits, got `{s}`")),
        })
        .collect::<Result<_, _>>()?;
    match b.as_slice() {
        &[acoustic, state, word] => Ok(AvailabilityFlags {
            acoustic,
            state,
            word,
        }),
        _ => Err(format!("flags must be three 0/1 digits, got `{s}`")),
    }
}
