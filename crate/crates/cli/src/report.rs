//! CSV and log reports with a `#`-prefixed provenance header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use svcnet::model_io::write_atomic;
use svcnet::recognizer::{AvailabilityFlags, PredictionRecord};

use crate::config::RunConfig;
use crate::Result;

/// Header lines identifying the run that produced a report.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: String,
    pub corpus: String,
}

impl Provenance {
    pub fn of(config: &RunConfig) -> Self {
        Self {
            config_hash: config.hash(),
            seeds: config.seeds().to_string(),
            corpus: config.paths.corpus.clone(),
        }
    }

    pub fn header(&self, kind: &str) -> String {
        format!(
            "# svcnet {kind}\n# config_hash={}\n# seeds {}\n# corpus={}\n",
            self.config_hash, self.seeds, self.corpus
        )
    }
}

pub fn write_report(path: &Path, provenance: &Provenance, kind: &str, body: &str) -> Result<()> {
    let mut text = provenance.header(kind);
    text.push_str(body);
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Body lines with the provenance header stripped.
pub fn strip_header(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty())
}

/// `epoch,loss`
pub fn metrics_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{l:?}", i + 1).expect("infallible");
    }
    out
}

pub fn prediction_log(records: &[PredictionRecord], source: Option<&str>) -> String {
    let mut out = String::new();
    for r in records {
        if let Some(s) = source {
            write!(out, "source={s} ").expect("infallible");
        }
        writeln!(out, "{r}").expect("infallible");
    }
    out
}

/// One parsed prediction-log line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedPrediction {
    pub source: Option<String>,
    pub utterance: u32,
    pub truth: u32,
    pub predicted: u32,
    pub flags: AvailabilityFlags,
}

pub fn parse_prediction_log(text: &str) -> std::result::Result<Vec<LoggedPrediction>, String> {
    strip_header(text)
        .map(|line| {
            let fields: BTreeMap<&str, &str> = line
                .split_ascii_whitespace()
                .map(|kv| kv.split_once('=').ok_or_else(|| format!("bad field `{kv}`")))
                .collect::<std::result::Result<_, _>>()?;
            let num = |k: &str| -> std::result::Result<u32, String> {
                fields
                    .get(k)
                    .ok_or_else(|| format!("missing `{k}` in `{line}`"))?
                    .parse()
                    .map_err(|_| format!("bad `{k}` in `{line}`"))
            };
            Ok(LoggedPrediction {
                source: fields.get("source").map(|s| s.to_string()),
                utterance: num("utterance")?,
                truth: num("true")?,
                predicted: num("predicted")?,
                flags: AvailabilityFlags {
                    acoustic: num("acoustic")? == 1,
                    state: num("state")? == 1,
                    word: num("word")? == 1,
                },
            })
        })
        .collect()
}
