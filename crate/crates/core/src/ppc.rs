//! Per-sound bottleneck encoders and pronunciation codes.
//!
//! Each sound gets its own `[F, D_p, F]` autoencoder trained to reconstruct
//! that sound's frames across all training speakers. The bottleneck
//! activations of a frame are its pronunciation code; a speaker's profile
//! averages those codes per sound.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::SoundId;
use crate::corpus::Frame;
use crate::error::{Error, Result};
use crate::model_io::{load_model, save_model};
use crate::net::{
    backward_from_activations, epoch_order, forward, init_network, sgd_step, Activation,
    LayerSpec, NetworkParams, OutputMask, TrainConfig, TrainLog,
};

/// Bottleneck activations of one frame (or an average of several).
#[derive(Debug, Clone, PartialEq)]
pub struct PpcVector(pub Vec<f64>);

impl PpcVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpcEncoder {
    sound: SoundId,
    net: NetworkParams,
}

impl PpcEncoder {
    /// Wraps a network of shape `[F, D_p, F]` with `D_p < F`.
    pub fn new(sound: SoundId, net: NetworkParams) -> Result<Self> {
        let sizes = net.spec().sizes();
        if sizes.len() != 3 || sizes[0] != sizes[2] {
            return Err(Error::structural(format!(
                "encoder for {sound} must have shape [F, D_p, F], got {sizes:?}"
            )));
        }
        if sizes[1] >= sizes[0] {
            return Err(Error::structural(format!(
                "encoder for {sound}: bottleneck {} is not narrower than input {}",
                sizes[1], sizes[0]
            )));
        }
        Ok(Self { sound, net })
    }

    pub fn sound(&self) -> SoundId {
        self.sound
    }

    pub fn net(&self) -> &NetworkParams {
        &self.net
    }

    pub fn feature_dim(&self) -> usize {
        self.net.spec().input_width()
    }

    pub fn code_dim(&self) -> usize {
        self.net.spec().sizes()[1]
    }

    /// Mean squared reconstruction error per feature, averaged over frames.
    pub fn reconstruction_mse<F: AsRef<[f64]>>(&self, frames: &[F]) -> Result<f64> {
        reconstruction_mse(&self.net, frames)
    }
}

fn reconstruction_mse<F: AsRef<[f64]>>(net: &NetworkParams, frames: &[F]) -> Result<f64> {
    let mut total = 0.0;
    for f in frames {
        let f = f.as_ref();
        let acts = forward(net, f)?;
        let out = acts.last().expect("non-empty");
        total += out.iter().zip(f).map(|(o, x)| (o - x) * (o - x)).sum::<f64>() / f.len() as f64;
    }
    Ok(total / frames.len() as f64)
}

/// Encoder layer layout: sigmoid bottleneck, linear reconstruction.
pub fn encoder_spec(feature_dim: usize, code_dim: usize) -> Result<LayerSpec> {
    LayerSpec::new(
        vec![feature_dim, code_dim, feature_dim],
        vec![Activation::Sigmoid, Activation::Linear],
    )
}

/// Result of training one encoder.
#[derive(Debug, Clone)]
pub struct EncoderFit {
    pub encoder: PpcEncoder,
    pub log: TrainLog,
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Trains a reconstruction autoencoder on one sound's frames with
/// per-presentation updates, shuffling the frames every epoch.
pub fn train_ppc_encoder<F: AsRef<[f64]> + Sync>(
    sound: SoundId,
    frames: &[F],
    code_dim: usize,
    config: &TrainConfig,
) -> Result<EncoderFit> {
    if frames.is_empty() {
        return Err(Error::data(format!("no frames to train the encoder for {sound}")));
    }
    config.validate()?;
    let feature_dim = frames[0].as_ref().len();
    if frames.iter().any(|f| f.as_ref().len() != feature_dim) {
        return Err(Error::data(format!("frames for {sound} differ in dimension")));
    }
    if code_dim >= feature_dim {
        return Err(Error::structural(format!(
            "bottleneck {code_dim} must be narrower than the {feature_dim}-dim frames"
        )));
    }
    let spec = encoder_spec(feature_dim, code_dim)?;
    let mut net = init_network(&spec, config.seed);
    let initial_mse = reconstruction_mse(&net, frames)?;
    let mask = OutputMask::all(feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log = TrainLog::default();
    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for i in epoch_order(frames.len(), &mut rng) {
            let x = frames[i].as_ref();
            let acts = forward(&net, x)?;
            let (grads, loss) = backward_from_activations(&net, &acts, x, &mask);
            sgd_step(&mut net, &grads, config.learning_rate)?;
            epoch_loss += loss;
            log.updates += 1;
        }
        log.epoch_losses.push(epoch_loss / frames.len() as f64);
    }
    let final_mse = reconstruction_mse(&net, frames)?;
    Ok(EncoderFit {
        encoder: PpcEncoder::new(sound, net)?,
        log,
        initial_mse,
        final_mse,
    })
}

/// Per-sound seed so that each encoder's initialization is independent of
/// which other sounds exist.
pub fn encoder_seed(base: u64, sound: SoundId) -> u64 {
    base.wrapping_mul(0x1000_0000_01b3)
        .wrapping_add((u64::from(sound.phone) << 32) | u64::from(sound.state))
}

/// Trains one encoder per sound, in parallel. Sounds with fewer than
/// `min_frames` frames are dropped with a warning.
pub fn train_encoders(
    frames: &[Frame],
    code_dim: usize,
    config: &TrainConfig,
    min_frames: usize,
) -> Result<BTreeMap<SoundId, EncoderFit>> {
    let mut by_sound: BTreeMap<SoundId, Vec<&[f64]>> = BTreeMap::new();
    for f in frames {
        by_sound.entry(f.sound()).or_default().push(&f.features);
    }
    by_sound.retain(|sound, fs| {
        let keep = fs.len() >= min_frames.max(1);
        if !keep {
            log::warn!(
                "dropping sound {sound}: {} frame(s), need at least {min_frames}",
                fs.len()
            );
        }
        keep
    });
    let fits: Vec<(SoundId, Result<EncoderFit>)> = by_sound
        .par_iter()
        .map(|(&sound, fs)| {
            let cfg = TrainConfig {
                seed: encoder_seed(config.seed, sound),
                ..*config
            };
            (sound, train_ppc_encoder(sound, fs, code_dim, &cfg))
        })
        .collect();
    fits.into_iter().map(|(s, r)| r.map(|fit| (s, fit))).collect()
}

pub fn encode_frame(encoder: &PpcEncoder, frame: &[f64]) -> Result<PpcVector> {
    if frame.len() != encoder.feature_dim() {
        return Err(Error::structural(format!(
            "frame has {} features, encoder for {} expects {}",
            frame.len(),
            encoder.sound,
            encoder.feature_dim()
        )));
    }
    let mut acts = forward(&encoder.net, frame)?;
    Ok(PpcVector(acts.swap_remove(1)))
}

/// Componentwise mean.
pub fn average_ppcs(codes: &[PpcVector]) -> Result<PpcVector> {
    let first = codes
        .first()
        .ok_or_else(|| Error::data("cannot average an empty list of codes"))?;
    let dim = first.dim();
    if codes.iter().any(|c| c.dim() != dim) {
        return Err(Error::data("codes differ in dimension"));
    }
    let mut sum = vec![0.0; dim];
    for c in codes {
        for (s, v) in sum.iter_mut().zip(&c.0) {
            *s += v;
        }
    }
    let n = codes.len() as f64;
    Ok(PpcVector(sum.into_iter().map(|s| s / n).collect()))
}

pub type EncoderSet = BTreeMap<SoundId, PpcEncoder>;

/// Averaged code per sound heard from one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker: u32,
    /// Exactly one entry per heard sound.
    pub codes: BTreeMap<SoundId, PpcVector>,
}

impl SpeakerProfile {
    pub fn heard(&self) -> impl Iterator<Item = SoundId> + '_ {
        self.codes.keys().copied()
    }

    pub fn has_heard(&self, sound: SoundId) -> bool {
        self.codes.contains_key(&sound)
    }
}

/// Encodes every frame with its sound's encoder, in input order.
pub fn encode_stream<'a, I>(frames: I, encoders: &EncoderSet) -> Result<Vec<(SoundId, PpcVector)>>
where
    I: IntoIterator<Item = &'a Frame>,
{
    frames
        .into_iter()
        .map(|f| {
            let sound = f.sound();
            let enc = encoders
                .get(&sound)
                .ok_or_else(|| Error::structural(format!("no encoder for sound {sound}")))?;
            Ok((sound, encode_frame(enc, &f.features)?))
        })
        .collect()
}

pub fn build_speaker_profile<'a, I>(speaker: u32, frames: I, encoders: &EncoderSet) -> Result<SpeakerProfile>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let stream = encode_stream(frames, encoders)?;
    profile_from_stream(speaker, &stream)
}

/// Profile from already encoded frames.
pub fn profile_from_stream(speaker: u32, stream: &[(SoundId, PpcVector)]) -> Result<SpeakerProfile> {
    if stream.is_empty() {
        return Err(Error::data(format!("speaker {speaker} has no frames")));
    }
    let mut grouped: BTreeMap<SoundId, Vec<PpcVector>> = BTreeMap::new();
    for (sound, code) in stream {
        grouped.entry(*sound).or_default().push(code.clone());
    }
    let codes = grouped
        .into_iter()
        .map(|(s, cs)| average_ppcs(&cs).map(|avg| (s, avg)))
        .collect::<Result<_>>()?;
    Ok(SpeakerProfile { speaker, codes })
}

pub fn encoder_file_name(sound: SoundId) -> String {
    format!("ppc_{}_{}", sound.phone, sound.state)
}

fn parse_encoder_file_name(name: &str) -> Option<SoundId> {
    let rest = name.strip_prefix("ppc_")?;
    let (p, s) = rest.split_once('_')?;
    Some(SoundId::new(p.parse().ok()?, s.parse().ok()?))
}

pub fn save_encoders(encoders: &EncoderSet, dir: &Path) -> Result<Vec<PathBuf>> {
    encoders
        .iter()
        .map(|(&sound, enc)| {
            let path = dir.join(encoder_file_name(sound));
            save_model(&enc.net, &path)?;
            Ok(path)
        })
        .collect()
}

/// Loads every `ppc_<phone>_<state>` file in `dir`.
pub fn load_encoders(dir: &Path) -> Result<EncoderSet> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = EncoderSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(sound) = name.to_str().and_then(parse_encoder_file_name) else {
            continue;
        };
        let net = load_model(&entry.path())?;
        out.insert(sound, PpcEncoder::new(sound, net)?);
    }
    if out.is_empty() {
        return Err(Error::data(format!(
            "no ppc_* encoder files in {}",
            dir.display()
        )));
    }
    Ok(out)
}
