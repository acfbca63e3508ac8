//! The pattern-completion network and speaker voice codes.
//!
//! The network maps the per-sound codes heard so far (slots for unheard
//! sounds are zero, or the network's own previous guess in feedback mode)
//! to the speaker's complete averaged profile. Its bottleneck activations
//! are the speaker voice code.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::alignment::SoundId;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model_io::{load_model, read_text, save_model, write_atomic};
use crate::net::{
    backward_from_activations, forward, init_network, sgd_step, Activation, LayerSpec,
    NetworkParams, OutputMask, TrainConfig, TrainLog,
};
use crate::ppc::{encode_stream, profile_from_stream, EncoderSet, PpcVector, SpeakerProfile};

pub const LAYOUT_HEADER: &str = "svcnet-layout v1";
pub const SVC_MODEL_FILE: &str = "svc.model";
pub const SVC_LAYOUT_FILE: &str = "svc_layout.txt";

/// Canonical slot order shared by the network's input and output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoundLayout {
    sounds: Vec<SoundId>,
    code_dim: usize,
    index: BTreeMap<SoundId, usize>,
}

impl SoundLayout {
    /// Sorts and deduplicates `sounds`.
    pub fn new(sounds: impl IntoIterator<Item = SoundId>, code_dim: usize) -> Result<Self> {
        if code_dim == 0 {
            return Err(Error::structural("code dimension must be at least 1"));
        }
        let mut sounds: Vec<SoundId> = sounds.into_iter().collect();
        sounds.sort_unstable();
        sounds.dedup();
        if sounds.is_empty() {
            return Err(Error::structural("layout needs at least one sound"));
        }
        let index = sounds.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self {
            sounds,
            code_dim,
            index,
        })
    }

    pub fn sounds(&self) -> &[SoundId] {
        &self.sounds
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    pub fn width(&self) -> usize {
        self.sounds.len() * self.code_dim
    }

    pub fn contains(&self, sound: SoundId) -> bool {
        self.index.contains_key(&sound)
    }

    /// Offset of `sound` in the concatenated vector.
    pub fn slot(&self, sound: SoundId) -> Result<usize> {
        self.index
            .get(&sound)
            .map(|i| i * self.code_dim)
            .ok_or_else(|| Error::structural(format!("sound {sound} is not in the layout")))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{LAYOUT_HEADER} code_dim={}\n", self.code_dim);
        for s in &self.sounds {
            writeln!(out, "{} {}", s.phone, s.state).expect("infallible");
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Ingest {
            path: origin.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty layout file"))?;
        let code_dim = header
            .strip_prefix(LAYOUT_HEADER)
            .and_then(|r| r.trim().strip_prefix("code_dim="))
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| bad(1, "expected `svcnet-layout v1 code_dim=<n>`"))?;
        let mut sounds = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_ascii_whitespace().map(u32::from_str);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(p)), Some(Ok(s)), None) => sounds.push(SoundId::new(p, s)),
                _ => return Err(bad(i + 1, "expected `<phone> <state>`")),
            }
        }
        let layout = Self::new(sounds.iter().copied(), code_dim)?;
        if layout.sounds != sounds {
            return Err(bad(2, "sounds are not in canonical order"));
        }
        Ok(layout)
    }
}

/// Bottleneck activations of the pattern-completion network.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcVector(pub Vec<f64>);

impl SvcVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &SvcVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// How slots of not-yet-heard sounds are filled on the input side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccumulateMode {
    ZeroFill,
    /// Use the network's output from the previous presentation.
    Feedback,
}

impl FromStr for AccumulateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_fill" => Ok(Self::ZeroFill),
            "feedback" => Ok(Self::Feedback),
            other => Err(Error::structural(format!(
                "unknown accumulation mode `{other}` (expected zero_fill or feedback)"
            ))),
        }
    }
}

impl AccumulateMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::ZeroFill => "zero_fill",
            Self::Feedback => "feedback",
        }
    }
}

/// Running per-sound means of the codes observed so far in one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorState {
    mode: AccumulateMode,
    means: Vec<f64>,
    counts: Vec<u64>,
    last_output: Option<Vec<f64>>,
}

impl AccumulatorState {
    pub fn new(layout: &SoundLayout, mode: AccumulateMode) -> Self {
        Self {
            mode,
            means: vec![0.0; layout.width()],
            counts: vec![0; layout.sounds().len()],
            last_output: None,
        }
    }

    pub fn mode(&self) -> AccumulateMode {
        self.mode
    }

    pub fn count(&self, layout: &SoundLayout, sound: SoundId) -> Result<u64> {
        Ok(self.counts[layout.slot(sound)? / layout.code_dim()])
    }

    pub fn mean(&self, layout: &SoundLayout, sound: SoundId) -> Result<&[f64]> {
        let slot = layout.slot(sound)?;
        Ok(&self.means[slot..slot + layout.code_dim()])
    }

    pub fn heard(&self, layout: &SoundLayout) -> Vec<SoundId> {
        layout
            .sounds()
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&s, _)| s)
            .collect()
    }

    pub fn last_output(&self) -> Option<&[f64]> {
        self.last_output.as_deref()
    }

    /// Folds one observation into the running mean of `sound` and returns the
    /// network input for this presentation.
    pub fn accumulate(&mut self, layout: &SoundLayout, sound: SoundId, ppc: &PpcVector) -> Result<Vec<f64>> {
        let slot = layout.slot(sound)?;
        let dim = layout.code_dim();
        if ppc.dim() != dim {
            return Err(Error::structural(format!(
                "code for {sound} has dimension {}, layout expects {dim}",
                ppc.dim()
            )));
        }
        let idx = slot / dim;
        self.counts[idx] += 1;
        let n = self.counts[idx] as f64;
        for (m, x) in self.means[slot..slot + dim].iter_mut().zip(&ppc.0) {
            *m += (x - *m) / n;
        }
        Ok(self.input_vector(layout))
    }

    /// Current network input without adding an observation.
    pub fn input_vector(&self, layout: &SoundLayout) -> Vec<f64> {
        let dim = layout.code_dim();
        let mut input = vec![0.0; layout.width()];
        for (idx, &count) in self.counts.iter().enumerate() {
            let range = idx * dim..(idx + 1) * dim;
            if count > 0 {
                input[range.clone()].copy_from_slice(&self.means[range]);
            } else if let (AccumulateMode::Feedback, Some(out)) = (self.mode, &self.last_output) {
                input[range.clone()].copy_from_slice(&out[range]);
            }
        }
        input
    }

    /// Records the output of the forward pass that consumed the last input.
    pub fn commit(&mut self, output: &[f64]) -> Result<()> {
        if output.len() != self.means.len() {
            return Err(Error::structural("output width does not match the layout"));
        }
        self.last_output = Some(output.to_vec());
        Ok(())
    }
}

/// Pattern-completion network with its slot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcNet {
    net: NetworkParams,
    layout: SoundLayout,
}

impl SvcNet {
    pub fn new(net: NetworkParams, layout: SoundLayout) -> Result<Self> {
        let sizes = net.spec().sizes();
        let w = layout.width();
        if sizes[0] != w || *sizes.last().expect("non-empty") != w {
            return Err(Error::structural(format!(
                "network widths {sizes:?} do not match layout width {w}"
            )));
        }
        if sizes.len() % 2 == 0 {
            return Err(Error::structural("network has no middle bottleneck layer"));
        }
        let code = sizes[sizes.len() / 2];
        if code >= w {
            return Err(Error::structural(format!(
                "bottleneck {code} is not narrower than the layout width {w}"
            )));
        }
        Ok(Self { net, layout })
    }

    pub fn net(&self) -> &NetworkParams {
        &self.net
    }

    pub fn layout(&self) -> &SoundLayout {
        &self.layout
    }

    /// Index of the bottleneck layer in the activation list.
    pub fn svc_layer(&self) -> usize {
        self.net.spec().sizes().len() / 2
    }

    pub fn svc_dim(&self) -> usize {
        self.net.spec().sizes()[self.svc_layer()]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_model(&self.net, &dir.join(SVC_MODEL_FILE))?;
        write_atomic(&dir.join(SVC_LAYOUT_FILE), self.layout.to_text().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let layout_path = dir.join(SVC_LAYOUT_FILE);
        let layout = SoundLayout::from_text(&read_text(&layout_path)?, &layout_path)?;
        Self::new(load_model(&dir.join(SVC_MODEL_FILE))?, layout)
    }
}

/// `[W, flank, D_s, flank, W]`, or `[W, D_s, W]` when `flank` is 0; all sigmoid.
pub fn svc_spec(width: usize, code_dim: usize, flank: usize) -> Result<LayerSpec> {
    let sizes = if flank == 0 {
        vec![width, code_dim, width]
    } else {
        vec![width, flank, code_dim, flank, width]
    };
    LayerSpec::uniform(sizes, Activation::Sigmoid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcConfig {
    pub code_dim: usize,
    /// Width of the hidden layers either side of the bottleneck; 0 for none.
    pub flank: usize,
    pub train: TrainConfig,
    pub mode: AccumulateMode,
    /// Target value placed in slots of sounds the speaker never uttered.
    /// Those slots are masked, so the value never reaches a gradient.
    pub unheard_fill: f64,
}

impl Default for SvcConfig {
    fn default() -> Self {
        Self {
            code_dim: 2,
            flank: 0,
            train: TrainConfig {
                learning_rate: 0.05,
                epochs: 1000,
                seed: 3,
            },
            mode: AccumulateMode::Feedback,
            unheard_fill: 0.0,
        }
    }
}

/// Training target: the speaker's averaged code at heard slots, masked
/// placeholders elsewhere.
pub fn make_target(profile: &SpeakerProfile, layout: &SoundLayout) -> Result<(Vec<f64>, OutputMask)> {
    make_target_with_fill(profile, layout, 0.0)
}

pub fn make_target_with_fill(
    profile: &SpeakerProfile,
    layout: &SoundLayout,
    fill: f64,
) -> Result<(Vec<f64>, OutputMask)> {
    let mut target = vec![fill; layout.width()];
    let mut mask = vec![false; layout.width()];
    let dim = layout.code_dim();
    for (&sound, code) in &profile.codes {
        let slot = layout.slot(sound)?;
        if code.dim() != dim {
            return Err(Error::structural(format!(
                "profile code for {sound} has dimension {}, layout expects {dim}",
                code.dim()
            )));
        }
        target[slot..slot + dim].copy_from_slice(&code.0);
        mask[slot..slot + dim].fill(true);
    }
    Ok((target, OutputMask::new(mask)))
}

/// One speaker's encoded frames in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerStream {
    pub speaker: u32,
    pub presentations: Vec<(SoundId, PpcVector)>,
    /// Position of the word each presentation belongs to, 0-based.
    pub word_of: Vec<usize>,
}

impl SpeakerStream {
    pub fn len(&self) -> usize {
        self.presentations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presentations.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.word_of.last().map_or(0, |w| w + 1)
    }

    /// Index of the last presentation of each word.
    pub fn word_ends(&self) -> Vec<usize> {
        let mut ends = Vec::new();
        for (i, w) in self.word_of.iter().enumerate() {
            if self.word_of.get(i + 1) != Some(w) {
                ends.push(i);
            }
        }
        ends
    }

    /// The sub-stream covering word positions in `words`, renumbered from 0.
    pub fn words(&self, words: std::ops::Range<usize>) -> SpeakerStream {
        let mut out = SpeakerStream {
            speaker: self.speaker,
            presentations: Vec::new(),
            word_of: Vec::new(),
        };
        for (p, &w) in self.presentations.iter().zip(&self.word_of) {
            if words.contains(&w) {
                out.presentations.push(p.clone());
                out.word_of.push(w - words.start);
            }
        }
        out
    }
}

/// Encodes each speaker's frames, speakers in order of first appearance.
pub fn speaker_streams(corpus: &Corpus, encoders: &EncoderSet) -> Result<Vec<SpeakerStream>> {
    let mut order: Vec<u32> = Vec::new();
    for u in corpus.utterances() {
        if !order.contains(&u.speaker) {
            order.push(u.speaker);
        }
    }
    order
        .into_iter()
        .map(|speaker| {
            let mut stream = SpeakerStream {
                speaker,
                presentations: Vec::new(),
                word_of: Vec::new(),
            };
            for (pos, u) in corpus.utterances_of(speaker).iter().enumerate() {
                let frames = &corpus.frames[u.frames.clone()];
                stream.presentations.extend(encode_stream(frames, encoders)?);
                stream.word_of.extend(std::iter::repeat_n(pos, frames.len()));
            }
            Ok(stream)
        })
        .collect()
}

/// Trains on the corpus: encodes frames, then see [`train_svcnet_on_streams`].
pub fn train_svcnet(
    corpus: &Corpus,
    encoders: &EncoderSet,
    layout: &SoundLayout,
    config: &SvcConfig,
) -> Result<(SvcNet, TrainLog)> {
    let streams = speaker_streams(corpus, encoders)?;
    train_svcnet_on_streams(&streams, layout, config)
}

/// For each sweep and each speaker: fix the target from the speaker's whole
/// stream, then replay the stream from the start, accumulating codes on the
/// input and taking one gradient step per presentation.
pub fn train_svcnet_on_streams(
    streams: &[SpeakerStream],
    layout: &SoundLayout,
    config: &SvcConfig,
) -> Result<(SvcNet, TrainLog)> {
    if streams.is_empty() || streams.iter().all(SpeakerStream::is_empty) {
        return Err(Error::data("no speakers to train the pattern-completion network on"));
    }
    config.train.validate()?;
    let spec = svc_spec(layout.width(), config.code_dim, config.flank)?;
    let mut net = SvcNet::new(init_network(&spec, config.train.seed), layout.clone())?;

    let targets = streams
        .iter()
        .map(|s| {
            let profile = profile_from_stream(s.speaker, &s.presentations)?;
            make_target_with_fill(&profile, layout, config.unheard_fill)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut log = TrainLog::default();
    for _ in 0..config.train.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        for (stream, (target, mask)) in streams.iter().zip(&targets) {
            let mut acc = AccumulatorState::new(layout, config.mode);
            for (sound, ppc) in &stream.presentations {
                let input = acc.accumulate(layout, *sound, ppc)?;
                let acts = forward(&net.net, &input)?;
                acc.commit(acts.last().expect("non-empty"))?;
                let (grads, loss) = backward_from_activations(&net.net, &acts, target, mask);
                sgd_step(&mut net.net, &grads, config.train.learning_rate)?;
                log.updates += 1;
                if mask.active_count() > 0 {
                    total += loss / mask.active_count() as f64;
                }
                count += 1;
            }
        }
        log.epoch_losses.push(total / count.max(1) as f64);
    }
    Ok((net, log))
}

/// Bottleneck code after each presentation of `stream`; no weights change.
pub fn extract_svc(
    net: &SvcNet,
    stream: &[(SoundId, PpcVector)],
    mode: AccumulateMode,
) -> Result<Vec<SvcVector>> {
    if stream.is_empty() {
        return Err(Error::data("cannot extract a voice code from an empty stream"));
    }
    let layer = net.svc_layer();
    let mut acc = AccumulatorState::new(&net.layout, mode);
    let mut trajectory = Vec::with_capacity(stream.len());
    for (sound, ppc) in stream {
        let input = acc.accumulate(&net.layout, *sound, ppc)?;
        let mut acts = forward(&net.net, &input)?;
        acc.commit(acts.last().expect("non-empty"))?;
        trajectory.push(SvcVector(acts.swap_remove(layer)));
    }
    Ok(trajectory)
}

/// Distance the code moves between consecutive word ends.
pub fn svc_stability(trajectory: &[SvcVector], word_ends: &[usize]) -> Result<Vec<f64>> {
    if let Some(&b) = word_ends.iter().find(|&&b| b >= trajectory.len()) {
        return Err(Error::data(format!(
            "word boundary {b} outside a trajectory of length {}",
            trajectory.len()
        )));
    }
    Ok(word_ends
        .windows(2)
        .map(|w| trajectory[w[1]].distance(&trajectory[w[0]]))
        .collect())
}

/// Componentwise mean over the whole trajectory.
pub fn final_svc(trajectory: &[SvcVector]) -> Result<SvcVector> {
    mean_code(trajectory).ok_or_else(|| Error::data("empty trajectory"))
}

pub(crate) fn mean_code(codes: &[SvcVector]) -> Option<SvcVector> {
    let first = codes.first()?;
    let mut sum = vec![0.0; first.dim()];
    for c in codes {
        for (s, v) in sum.iter_mut().zip(&c.0) {
            *s += v;
        }
    }
    let n = codes.len() as f64;
    Some(SvcVector(sum.into_iter().map(|s| s / n).collect()))
}

/// `step,word_index,svc_0,...` rows.
pub fn trajectory_csv(trajectory: &[SvcVector], word_of: &[usize]) -> Result<String> {
    if trajectory.len() != word_of.len() {
        return Err(Error::structural("one word index per trajectory step required"));
    }
    let dim = trajectory.first().map_or(0, SvcVector::dim);
    let mut out = String::from("step,word_index");
    for i in 0..dim {
        write!(out, ",svc_{i}").expect("infallible");
    }
    out.push('\n');
    for (step, (code, w)) in trajectory.iter().zip(word_of).enumerate() {
        write!(out, "{step},{w}").expect("infallible");
        for v in &code.0 {
            write!(out, ",{v:?}").expect("infallible");
        }
        out.push('\n');
    }
    Ok(out)
}
