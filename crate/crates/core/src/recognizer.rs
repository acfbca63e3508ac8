//! Three-level frame classifier with a speaker-code side input.
//!
//! Main path: frame window → acoustic layer → state layer → word layer
//! (log-softmax, so per-frame scores add like log-likelihoods). Side path: the `D_s` code inputs feed two sigmoid hidden
//! units, and each of those connects to every unit of all three main
//! layers. At test time each layer can be fed the side activations computed
//! from the cross-speaker average code instead of the speaker's own.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Frame};
use crate::error::{Error, Result};
use crate::model_io::{push_values, read_text, write_atomic, Lines};
use crate::net::{epoch_order, Matrix, TrainConfig, TrainLog};
use crate::svc::{mean_code, SvcVector};

pub const RECOGNIZER_HEADER: &str = "svcnet-recognizer v1";
/// Width of the side-path hidden layer.
pub const SVC_HIDDEN: usize = 2;

/// Which main-path layers see the speaker's own code (true) rather than the
/// cross-speaker average (false).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AvailabilityFlags {
    pub acoustic: bool,
    pub state: bool,
    pub word: bool,
}

impl AvailabilityFlags {
    pub const ALL: Self = Self {
        acoustic: true,
        state: true,
        word: true,
    };
    pub const NONE: Self = Self {
        acoustic: false,
        state: false,
        word: false,
    };

    /// The eight combinations, ××× first and ✓✓✓ last, acoustic varying slowest.
    pub fn canonical() -> [Self; 8] {
        std::array::from_fn(|i| Self {
            acoustic: i & 4 != 0,
            state: i & 2 != 0,
            word: i & 1 != 0,
        })
    }
}

impl fmt::Display for AvailabilityFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |b: bool| if b { '1' } else { '0' };
        write!(f, "{}{}{}", c(self.acoustic), c(self.state), c(self.word))
    }
}

/// Componentwise mean of the training speakers' codes.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageSvc(pub SvcVector);

pub fn compute_average_svc(svcs: &[SvcVector]) -> Result<AverageSvc> {
    if let Some(first) = svcs.first() {
        if svcs.iter().any(|s| s.dim() != first.dim()) {
            return Err(Error::data("voice codes differ in dimension"));
        }
    }
    mean_code(svcs)
        .map(AverageSvc)
        .ok_or_else(|| Error::data("cannot average an empty list of voice codes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecognizerDims {
    pub feature_dim: usize,
    /// Frames of context either side of the centre frame.
    pub window: usize,
    pub acoustic: usize,
    pub state: usize,
    pub words: usize,
    pub svc_dim: usize,
}

impl RecognizerDims {
    pub fn input_width(&self) -> usize {
        self.feature_dim * (2 * self.window + 1)
    }

    /// Main path plus side path.
    pub fn param_count(&self) -> usize {
        let (i, a, s, n) = (self.input_width(), self.acoustic, self.state, self.words);
        let main = i * a + a + a * s + s + s * n + n;
        let side = self.svc_dim * SVC_HIDDEN + SVC_HIDDEN + SVC_HIDDEN * (a + s + n);
        main + side
    }

    fn validate(&self) -> Result<()> {
        if [self.feature_dim, self.acoustic, self.state, self.words, self.svc_dim].contains(&0) {
            return Err(Error::structural(format!("recognizer widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerNet {
    dims: RecognizerDims,
    w_acoustic: Matrix,
    b_acoustic: Vec<f64>,
    w_state: Matrix,
    b_state: Vec<f64>,
    w_word: Matrix,
    b_word: Vec<f64>,
    /// Code inputs → side hidden units.
    w_side: Matrix,
    b_side: Vec<f64>,
    /// Side hidden units → each main layer.
    u_acoustic: Matrix,
    u_state: Matrix,
    u_word: Matrix,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_rows(rows, cols, data).expect("sized to fit")
}

/// Activations of one presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerActivations {
    pub side_true: Vec<f64>,
    pub side_avg: Vec<f64>,
    pub acoustic: Vec<f64>,
    pub state: Vec<f64>,
    /// Log-probabilities over words.
    pub word: Vec<f64>,
}

fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; w.rows()];
    w.mul_vec(x, &mut z);
    for (zi, bi) in z.iter_mut().zip(b) {
        *zi += bi;
    }
    z
}

fn add_side(z: &mut [f64], u: &Matrix, h: &[f64]) {
    for (r, zi) in z.iter_mut().enumerate() {
        *zi += u.row(r).iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// In-place log-softmax.
fn log_softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in z.iter_mut() {
        *v -= log_sum;
    }
}

/// Gradient accumulator with the same layout as [`RecognizerNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerGradients {
    pub values: Vec<f64>,
}

impl RecognizerNet {
    pub fn new(dims: RecognizerDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (i, a, s, n) = (dims.input_width(), dims.acoustic, dims.state, dims.words);
        Ok(Self {
            dims,
            w_acoustic: uniform_matrix(a, i, &mut rng),
            b_acoustic: vec![0.0; a],
            w_state: uniform_matrix(s, a, &mut rng),
            b_state: vec![0.0; s],
            w_word: uniform_matrix(n, s, &mut rng),
            b_word: vec![0.0; n],
            w_side: uniform_matrix(SVC_HIDDEN, dims.svc_dim, &mut rng),
            b_side: vec![0.0; SVC_HIDDEN],
            u_acoustic: uniform_matrix(a, SVC_HIDDEN, &mut rng),
            u_state: uniform_matrix(s, SVC_HIDDEN, &mut rng),
            u_word: uniform_matrix(n, SVC_HIDDEN, &mut rng),
        })
    }

    pub fn dims(&self) -> RecognizerDims {
        self.dims
    }

    fn blocks(&self) -> [&[f64]; 11] {
        [
            self.w_acoustic.as_slice(),
            &self.b_acoustic,
            self.w_state.as_slice(),
            &self.b_state,
            self.w_word.as_slice(),
            &self.b_word,
            self.w_side.as_slice(),
            &self.b_side,
            self.u_acoustic.as_slice(),
            self.u_state.as_slice(),
            self.u_word.as_slice(),
        ]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 11] {
        [
            self.w_acoustic.as_mut_slice(),
            &mut self.b_acoustic,
            self.w_state.as_mut_slice(),
            &mut self.b_state,
            self.w_word.as_mut_slice(),
            &mut self.b_word,
            self.w_side.as_mut_slice(),
            &mut self.b_side,
            self.u_acoustic.as_mut_slice(),
            self.u_state.as_mut_slice(),
            self.u_word.as_mut_slice(),
        ]
    }

    /// Every parameter in a fixed order.
    pub fn values(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Overwrites every parameter, in the order of [`RecognizerNet::values`].
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::structural("value count does not match the recognizer"));
        }
        let mut it = values.iter();
        for block in self.blocks_mut() {
            for v in block.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn side(&self, code: &[f64]) -> Vec<f64> {
        affine(&self.w_side, &self.b_side, code).into_iter().map(sigmoid).collect()
    }

    fn check_code(&self, code: &[f64]) -> Result<()> {
        if code.len() != self.dims.svc_dim {
            return Err(Error::structural(format!(
                "voice code has dimension {}, recognizer expects {}",
                code.len(),
                self.dims.svc_dim
            )));
        }
        Ok(())
    }

    /// Forward pass for one input window.
    pub fn forward(
        &self,
        input: &[f64],
        svc: &[f64],
        avg: &[f64],
        flags: AvailabilityFlags,
    ) -> Result<RecognizerActivations> {
        if input.len() != self.dims.input_width() {
            return Err(Error::structural(format!(
                "input window has {} values, recognizer expects {}",
                input.len(),
                self.dims.input_width()
            )));
        }
        self.check_code(svc)?;
        self.check_code(avg)?;
        let side_true = self.side(svc);
        let side_avg = self.side(avg);
        let pick = |on: bool| if on { &side_true } else { &side_avg };

        let mut acoustic = affine(&self.w_acoustic, &self.b_acoustic, input);
        add_side(&mut acoustic, &self.u_acoustic, pick(flags.acoustic));
        acoustic.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut state = affine(&self.w_state, &self.b_state, &acoustic);
        add_side(&mut state, &self.u_state, pick(flags.state));
        state.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut word = affine(&self.w_word, &self.b_word, &state);
        add_side(&mut word, &self.u_word, pick(flags.word));
        log_softmax(&mut word);

        Ok(RecognizerActivations {
            side_true,
            side_avg,
            acoustic,
            state,
            word,
        })
    }

    /// Cross-entropy loss `−log p(target)` with the true code on every layer.
    pub fn loss(&self, input: &[f64], svc: &[f64], target: usize) -> Result<f64> {
        let acts = self.forward(input, svc, svc, AvailabilityFlags::ALL)?;
        Ok(-acts.word[target])
    }

    /// Gradient of [`RecognizerNet::loss`], in the order of [`RecognizerNet::values`].
    pub fn gradients(&self, input: &[f64], svc: &[f64], target: usize) -> Result<(RecognizerGradients, f64)> {
        if target >= self.dims.words {
            return Err(Error::data(format!("word label {target} out of range")));
        }
        let acts = self.forward(input, svc, svc, AvailabilityFlags::ALL)?;
        let h = &acts.side_true;
        let loss = -acts.word[target];

        let mut dz_word: Vec<f64> = acts.word.iter().map(|v| v.exp()).collect();
        dz_word[target] -= 1.0;

        let back = |w: &Matrix, dz: &[f64], y: &[f64]| -> Vec<f64> {
            let mut d = vec![0.0; w.cols()];
            for (r, &g) in dz.iter().enumerate() {
                for (di, wv) in d.iter_mut().zip(w.row(r)) {
                    *di += g * wv;
                }
            }
            d.iter_mut().zip(y).for_each(|(di, &yv)| *di *= yv * (1.0 - yv));
            d
        };
        let dz_state = back(&self.w_word, &dz_word, &acts.state);
        let dz_acoustic = back(&self.w_state, &dz_state, &acts.acoustic);

        let mut dh = vec![0.0; SVC_HIDDEN];
        for (u, dz) in [
            (&self.u_acoustic, &dz_acoustic),
            (&self.u_state, &dz_state),
            (&self.u_word, &dz_word),
        ] {
            for (r, &g) in dz.iter().enumerate() {
                for (d, uv) in dh.iter_mut().zip(u.row(r)) {
                    *d += g * uv;
                }
            }
        }
        let dz_side: Vec<f64> = dh.iter().zip(h).map(|(d, hv)| d * hv * (1.0 - hv)).collect();

        let outer = |dz: &[f64], x: &[f64], out: &mut Vec<f64>| {
            for &g in dz {
                out.extend(x.iter().map(|v| g * v));
            }
        };
        let mut values = Vec::with_capacity(self.param_count());
        outer(&dz_acoustic, input, &mut values);
        values.extend_from_slice(&dz_acoustic);
        outer(&dz_state, &acts.acoustic, &mut values);
        values.extend_from_slice(&dz_state);
        outer(&dz_word, &acts.state, &mut values);
        values.extend_from_slice(&dz_word);
        outer(&dz_side, svc, &mut values);
        values.extend_from_slice(&dz_side);
        outer(&dz_acoustic, h, &mut values);
        outer(&dz_state, h, &mut values);
        outer(&dz_word, h, &mut values);
        Ok((RecognizerGradients { values }, loss))
    }

    pub fn sgd_step(&mut self, grads: &RecognizerGradients, learning_rate: f64) -> Result<()> {
        if grads.values.len() != self.param_count() {
            return Err(Error::structural("gradient length does not match the recognizer"));
        }
        let mut it = grads.values.iter();
        for block in self.blocks_mut() {
            for v in block.iter_mut() {
                *v -= learning_rate * it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let d = self.dims;
        let mut out = format!("{RECOGNIZER_HEADER}\n");
        writeln!(
            out,
            "dims features={} window={} acoustic={} state={} words={} svc={}",
            d.feature_dim, d.window, d.acoustic, d.state, d.words, d.svc_dim
        )
        .expect("infallible");
        for (tag, m) in self.matrices() {
            for r in 0..m.rows() {
                push_values(&mut out, tag, m.row(r));
            }
        }
        for (tag, b) in self.bias_vectors() {
            push_values(&mut out, tag, b);
        }
        out
    }

    fn matrices(&self) -> [(&'static str, &Matrix); 7] {
        [
            ("w_acoustic", &self.w_acoustic),
            ("w_state", &self.w_state),
            ("w_word", &self.w_word),
            ("w_side", &self.w_side),
            ("u_acoustic", &self.u_acoustic),
            ("u_state", &self.u_state),
            ("u_word", &self.u_word),
        ]
    }

    fn bias_vectors(&self) -> [(&'static str, &Vec<f64>); 4] {
        [
            ("b_acoustic", &self.b_acoustic),
            ("b_state", &self.b_state),
            ("b_word", &self.b_word),
            ("b_side", &self.b_side),
        ]
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = Lines::new(text, origin);
        let (n, header) = lines.next_line()?;
        if header.trim() != RECOGNIZER_HEADER {
            return Err(lines.err(n, format!("expected header `{RECOGNIZER_HEADER}`")));
        }
        let (n, dims_line) = lines.next_line()?;
        let mut fields = BTreeMap::new();
        let mut parts = dims_line.split_ascii_whitespace();
        if parts.next() != Some("dims") {
            return Err(lines.err(n, "expected `dims ...`"));
        }
        for kv in parts {
            let (k, v) = kv.split_once('=').ok_or_else(|| lines.err(n, format!("bad field `{kv}`")))?;
            let v: usize = v.parse().map_err(|_| lines.err(n, format!("bad count `{v}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| lines.err(n, format!("missing `{k}`")));
        let dims = RecognizerDims {
            feature_dim: get("features")?,
            window: get("window")?,
            acoustic: get("acoustic")?,
            state: get("state")?,
            words: get("words")?,
            svc_dim: get("svc")?,
        };
        let mut net = Self::new(dims, 0).map_err(|e| lines.err(n, e.to_string()))?;
        let shapes: Vec<(&str, usize, usize)> = net
            .matrices()
            .iter()
            .map(|(t, m)| (*t, m.rows(), m.cols()))
            .collect();
        let mut loaded = Vec::new();
        for (tag, rows, cols) in shapes {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                data.extend(lines.values(tag, cols)?);
            }
            loaded.push(Matrix::from_rows(rows, cols, data)?);
        }
        let bias_shapes: Vec<(&str, usize)> = net.bias_vectors().iter().map(|(t, b)| (*t, b.len())).collect();
        let mut biases = Vec::new();
        for (tag, len) in bias_shapes {
            biases.push(lines.values(tag, len)?);
        }
        lines.finish()?;
        let mut m = loaded.into_iter();
        net.w_acoustic = m.next().expect("seven matrices");
        net.w_state = m.next().expect("seven matrices");
        net.w_word = m.next().expect("seven matrices");
        net.w_side = m.next().expect("seven matrices");
        net.u_acoustic = m.next().expect("seven matrices");
        net.u_state = m.next().expect("seven matrices");
        net.u_word = m.next().expect("seven matrices");
        let mut b = biases.into_iter();
        net.b_acoustic = b.next().expect("four biases");
        net.b_state = b.next().expect("four biases");
        net.b_word = b.next().expect("four biases");
        net.b_side = b.next().expect("four biases");
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_text(path)?, path)
    }
}

/// Stacks frames `t-window ..= t+window`, clamping at the utterance edges.
pub fn input_window(frames: &[&[f64]], t: usize, window: usize) -> Vec<f64> {
    let last = frames.len() - 1;
    let mut out = Vec::with_capacity(frames[0].len() * (2 * window + 1));
    for off in 0..=2 * window {
        let idx = (t + off).saturating_sub(window).min(last);
        out.extend_from_slice(frames[idx]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerConfig {
    pub acoustic: usize,
    pub state: usize,
    pub window: usize,
    pub train: TrainConfig,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            acoustic: 16,
            state: 12,
            window: 0,
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: 100,
                seed: 5,
            },
        }
    }
}

/// Supervised training with each speaker's own code on the side input at
/// every layer, one gradient step per frame, frames shuffled per epoch.
pub fn train_recognizer(
    corpus: &Corpus,
    svc_per_speaker: &BTreeMap<u32, SvcVector>,
    config: &RecognizerConfig,
) -> Result<(RecognizerNet, TrainLog)> {
    config.train.validate()?;
    let svc_dim = svc_per_speaker
        .values()
        .next()
        .map(SvcVector::dim)
        .ok_or_else(|| Error::data("no voice codes supplied"))?;
    for s in corpus.speakers() {
        if !svc_per_speaker.contains_key(&s) {
            return Err(Error::data(format!("training speaker {s} has no voice code")));
        }
    }
    let dims = RecognizerDims {
        feature_dim: corpus.feature_dim,
        window: config.window,
        acoustic: config.acoustic,
        state: config.state,
        words: corpus.n_words,
        svc_dim,
    };
    let mut net = RecognizerNet::new(dims, config.train.seed)?;

    let mut samples: Vec<(Vec<f64>, u32, usize)> = Vec::new();
    for u in corpus.utterances() {
        let frames: Vec<&[f64]> = corpus.frames[u.frames.clone()].iter().map(|f| f.features.as_slice()).collect();
        for t in 0..frames.len() {
            samples.push((input_window(&frames, t, config.window), u.speaker, u.word as usize));
        }
    }
    if samples.is_empty() {
        return Err(Error::data("no frames to train the recognizer on"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut log = TrainLog::default();
    for _ in 0..config.train.epochs {
        let mut total = 0.0;
        for i in epoch_order(samples.len(), &mut rng) {
            let (input, speaker, word) = &samples[i];
            let svc = &svc_per_speaker[speaker];
            let (grads, loss) = net.gradients(input, &svc.0, *word)?;
            net.sgd_step(&grads, config.train.learning_rate)?;
            total += loss;
            log.updates += 1;
        }
        log.epoch_losses.push(total / samples.len() as f64);
    }
    Ok((net, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recognition {
    pub label: usize,
    /// Mean over frames of the word-layer outputs.
    pub scores: Vec<f64>,
}

pub fn recognize(
    net: &RecognizerNet,
    utterance: &[&[f64]],
    svc: &SvcVector,
    flags: AvailabilityFlags,
    avg: &AverageSvc,
) -> Result<Recognition> {
    if utterance.is_empty() {
        return Err(Error::data("cannot recognize an empty utterance"));
    }
    let mut scores = vec![0.0; net.dims.words];
    for t in 0..utterance.len() {
        let input = input_window(utterance, t, net.dims.window);
        let acts = net.forward(&input, &svc.0, &avg.0 .0, flags)?;
        for (s, w) in scores.iter_mut().zip(&acts.word) {
            *s += w;
        }
    }
    let n = utterance.len() as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    let mut label = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[label] {
            label = i;
        }
    }
    Ok(Recognition { label, scores })
}

/// One line of the per-utterance prediction log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub utterance: u32,
    pub speaker: u32,
    pub truth: u32,
    pub predicted: u32,
    pub flags: AvailabilityFlags,
}

impl fmt::Display for PredictionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "utterance={} speaker={} true={} predicted={} acoustic={} state={} word={}",
            self.utterance,
            self.speaker,
            self.truth,
            self.predicted,
            u8::from(self.flags.acoustic),
            u8::from(self.flags.state),
            u8::from(self.flags.word)
        )
    }
}

/// Recognizes every utterance of `corpus` with the given flags, using each
/// speaker's code from `svcs`.
pub fn evaluate(
    net: &RecognizerNet,
    corpus: &Corpus,
    svcs: &BTreeMap<u32, SvcVector>,
    avg: &AverageSvc,
    flags: AvailabilityFlags,
) -> Result<Vec<PredictionRecord>> {
    corpus
        .utterances()
        .iter()
        .map(|u| {
            let svc = svcs
                .get(&u.speaker)
                .ok_or_else(|| Error::data(format!("test speaker {} has no voice code", u.speaker)))?;
            let frames: Vec<&[f64]> = utterance_features(&corpus.frames[u.frames.clone()]);
            let r = recognize(net, &frames, svc, flags, avg)?;
            Ok(PredictionRecord {
                utterance: u.id,
                speaker: u.speaker,
                truth: u.word,
                predicted: r.label as u32,
                flags,
            })
        })
        .collect()
}

pub fn utterance_features(frames: &[Frame]) -> Vec<&[f64]> {
    frames.iter().map(|f| f.features.as_slice()).collect()
}

pub fn error_rate(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.truth != r.predicted).count() as f64 / records.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    /// Canonical flag order, ××× first.
    pub rows: Vec<(AvailabilityFlags, f64)>,
    pub predictions: Vec<PredictionRecord>,
}

impl AblationTable {
    pub fn rate(&self, flags: AvailabilityFlags) -> Option<f64> {
        self.rows.iter().find(|(f, _)| *f == flags).map(|(_, r)| *r)
    }

    /// `acoustic,state,word,error_rate`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("acoustic,state,word,error_rate\n");
        for (f, rate) in &self.rows {
            writeln!(
                out,
                "{},{},{},{rate:?}",
                u8::from(f.acoustic),
                u8::from(f.state),
                u8::from(f.word)
            )
            .expect("infallible");
        }
        out
    }
}

pub fn ablation_eval(
    net: &RecognizerNet,
    test_corpus: &Corpus,
    svcs: &BTreeMap<u32, SvcVector>,
    avg: &AverageSvc,
) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(8);
    let mut predictions = Vec::new();
    for flags in AvailabilityFlags::canonical() {
        let records = evaluate(net, test_corpus, svcs, avg, flags)?;
        rows.push((flags, error_rate(&records)));
        predictions.extend(records);
    }
    Ok(AblationTable { rows, predictions })
}
