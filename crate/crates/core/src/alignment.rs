//! Frame-to-state assignment within a phone occurrence.
//!
//! Uniform segmentation is the default; a DTW pass against per-state mean
//! templates can refine it.

use std::fmt;

use crate::error::{Error, Result};

/// The modelling unit: one state of one phone.
///
/// Ordering is by phone, then state, which is the canonical slot order used
/// throughout the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SoundId {
    pub phone: u32,
    pub state: u32,
}

impl SoundId {
    pub fn new(phone: u32, state: u32) -> Self {
        Self { phone, state }
    }
}

impl fmt::Display for SoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.phone, self.state)
    }
}

/// Splits `frame_count` frames into `n_states` contiguous runs whose lengths
/// differ by at most one, longer runs first.
pub fn segment_uniform(frame_count: usize, n_states: usize) -> Result<Vec<usize>> {
    if n_states == 0 {
        return Err(Error::Alignment("need at least one state".into()));
    }
    if frame_count < n_states {
        return Err(Error::Alignment(format!(
            "{frame_count} frames cannot cover {n_states} states"
        )));
    }
    let base = frame_count / n_states;
    let extra = frame_count % n_states;
    let mut labels = Vec::with_capacity(frame_count);
    for state in 0..n_states {
        let run = base + usize::from(state < extra);
        labels.extend(std::iter::repeat_n(state, run));
    }
    Ok(labels)
}

/// A monotone warping path and its accumulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    /// `(frame, template)` pairs from `(0, 0)` to `(last, last)`.
    pub steps: Vec<(usize, usize)>,
    pub cost: f64,
}

impl WarpPath {
    /// Template index for each frame; a frame matched to several templates
    /// takes the first.
    pub fn frame_assignment(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &(i, j) in &self.steps {
            if i == out.len() {
                out.push(j);
            }
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimum-cost monotone alignment of `frames` onto `templates` with steps
/// (1,1), (0,1) and (1,0) and squared Euclidean local cost.
///
/// Among equal-cost predecessors the diagonal is preferred, then the step
/// that advances the template only.
pub fn dtw_align<F, T>(frames: &[F], templates: &[T]) -> Result<WarpPath>
where
    F: AsRef<[f64]>,
    T: AsRef<[f64]>,
{
    let (n, m) = (frames.len(), templates.len());
    if n == 0 || m == 0 {
        return Err(Error::Alignment("dtw needs non-empty frames and templates".into()));
    }
    let dim = frames[0].as_ref().len();
    if frames.iter().any(|f| f.as_ref().len() != dim) || templates.iter().any(|t| t.as_ref().len() != dim) {
        return Err(Error::Alignment("frames and templates differ in dimension".into()));
    }

    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let local = sq_dist(frames[i].as_ref(), templates[j].as_ref());
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
                let tmpl = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                let frame = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                diag.min(tmpl).min(frame)
            };
            acc[at(i, j)] = local + best;
        }
    }

    let mut steps = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
        let tmpl = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
        let frame = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
        if diag <= tmpl && diag <= frame {
            i -= 1;
            j -= 1;
        } else if tmpl <= frame {
            j -= 1;
        } else {
            i -= 1;
        }
        steps.push((i, j));
    }
    steps.reverse();
    Ok(WarpPath {
        steps,
        cost: acc[at(n - 1, m - 1)],
    })
}

/// Per-state mean vectors from labelled frames.
pub fn state_templates<F: AsRef<[f64]>>(
    frames: &[F],
    states: &[usize],
    n_states: usize,
) -> Result<Vec<Vec<f64>>> {
    if frames.len() != states.len() {
        return Err(Error::Alignment("one state label per frame required".into()));
    }
    let dim = frames.first().map_or(0, |f| f.as_ref().len());
    let mut sums = vec![vec![0.0; dim]; n_states];
    let mut counts = vec![0usize; n_states];
    for (f, &s) in frames.iter().zip(states) {
        if s >= n_states {
            return Err(Error::Alignment(format!("state {s} out of range")));
        }
        counts[s] += 1;
        for (acc, v) in sums[s].iter_mut().zip(f.as_ref()) {
            *acc += v;
        }
    }
    if let Some(s) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Alignment(format!("state {s} has no frames")));
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect())
}

/// Uniform first pass, then DTW against the resulting state means.
pub fn refine_states<F: AsRef<[f64]>>(frames: &[F], n_states: usize) -> Result<Vec<usize>> {
    let uniform = segment_uniform(frames.len(), n_states)?;
    let templates = state_templates(frames, &uniform, n_states)?;
    Ok(dtw_align(frames, &templates)?.frame_assignment())
}
