//! Versioned plain-text persistence for networks.
//!
//! ```text
//! svcnet-model v1
//! spec 8,2,8 sigmoid,linear
//! w0 <fan_in values>        one line per row of layer 0
//! b0 <fan_out values>
//! w1 ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so `load(save(m)) == m`
//! bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, LayerSpec, Matrix, NetworkParams};

pub const MODEL_HEADER: &str = "svcnet-model v1";

pub(crate) fn push_values(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        write!(out, " {v:?}").expect("writing to a String cannot fail");
    }
    out.push('\n');
}

pub fn model_to_text(params: &NetworkParams) -> String {
    let spec = params.spec();
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    let widths: Vec<String> = spec.sizes().iter().map(ToString::to_string).collect();
    let acts: Vec<&str> = spec.activations().iter().map(|a| a.name()).collect();
    writeln!(out, "spec {} {}", widths.join(","), acts.join(",")).expect("infallible");
    for (l, (w, b)) in params.weights().iter().zip(params.biases()).enumerate() {
        let tag = format!("w{l}");
        for r in 0..w.rows() {
            push_values(&mut out, &tag, w.row(r));
        }
        push_values(&mut out, &format!("b{l}"), b);
    }
    out
}

/// Line cursor shared by the text loaders.
pub(crate) struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a Path,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str, origin: &'a Path) -> Self {
        Self {
            iter: text.lines().enumerate(),
            origin,
        }
    }

    pub(crate) fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Ingest {
            path: self.origin.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Next line as (1-based line number, text).
    pub(crate) fn next_line(&mut self) -> Result<(usize, &'a str)> {
        match self.iter.next() {
            Some((i, l)) => Ok((i + 1, l)),
            None => Err(Error::Ingest {
                path: self.origin.to_path_buf(),
                line: 0,
                msg: "unexpected end of file".into(),
            }),
        }
    }

    pub(crate) fn finish(&mut self) -> Result<()> {
        for (i, l) in self.iter.by_ref() {
            if !l.trim().is_empty() {
                return Err(Error::Ingest {
                    path: self.origin.to_path_buf(),
                    line: i + 1,
                    msg: "trailing content".into(),
                });
            }
        }
        Ok(())
    }

    /// Reads a `tag v v v` line and checks the tag and value count.
    pub(crate) fn values(&mut self, tag: &str, count: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next_line()?;
        let mut fields = line.split_ascii_whitespace();
        match fields.next() {
            Some(t) if t == tag => {}
            other => {
                return Err(self.err(n, format!("expected `{tag}`, found `{}`", other.unwrap_or(""))))
            }
        }
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| self.err(n, format!("`{f}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != count {
            return Err(self.err(n, format!("expected {count} values, found {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(self.err(n, format!("non-finite value {v}")));
        }
        Ok(values)
    }
}

pub(crate) fn parse_model(lines: &mut Lines<'_>) -> Result<NetworkParams> {
    let (n, header) = lines.next_line()?;
    if header.trim() != MODEL_HEADER {
        return Err(lines.err(n, format!("expected header `{MODEL_HEADER}`")));
    }
    let (n, spec_line) = lines.next_line()?;
    let parts: Vec<&str> = spec_line.split_ascii_whitespace().collect();
    if parts.len() != 3 || parts[0] != "spec" {
        return Err(lines.err(n, "expected `spec <widths> <activations>`"));
    }
    let sizes = parts[1]
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|_| lines.err(n, format!("bad width `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let acts = parts[2]
        .split(',')
        .map(|s| s.parse::<Activation>().map_err(|e| lines.err(n, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let spec = LayerSpec::new(sizes, acts).map_err(|e| lines.err(n, e.to_string()))?;

    let mut weights = Vec::with_capacity(spec.depth());
    let mut biases = Vec::with_capacity(spec.depth());
    for (l, w) in spec.sizes().windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let tag = format!("w{l}");
        let mut data = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_out {
            data.extend(lines.values(&tag, fan_in)?);
        }
        weights.push(Matrix::from_rows(fan_out, fan_in, data)?);
        biases.push(lines.values(&format!("b{l}"), fan_out)?);
    }
    NetworkParams::from_parts(spec, weights, biases)
}

pub fn model_from_text(text: &str, origin: &Path) -> Result<NetworkParams> {
    let mut lines = Lines::new(text, origin);
    let params = parse_model(&mut lines)?;
    lines.finish()?;
    Ok(params)
}

pub fn save_model(params: &NetworkParams, path: &Path) -> Result<()> {
    write_atomic(path, model_to_text(params).as_bytes())
}

pub fn load_model(path: &Path) -> Result<NetworkParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_text(&text, path)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so a failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
