//! JSON-lines dataset manifests shared by the synthesizer, the augmenter,
//! and the trainer. One object per line:
//! `{id, audio_path, transcript OR binary_label, variant, provenance?}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Clean,
    Reverb,
    ReverbEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Positive,
    Negative,
}

/// Where an augmented variant came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rir_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residual_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_db: Option<f32>,
}

/// One utterance. `audio_path` references either a WAV file or a binary
/// feature file; exactly one of `transcript` (phone indices) and
/// `binary_label` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub audio_path: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transcript: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub binary_label: Option<BinaryLabel>,
    pub variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provenance: Option<Provenance>,
}

impl ManifestEntry {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Data("manifest entry with empty id".into()));
        }
        if self.audio_path.is_empty() {
            return Err(Error::Data(format!("{}: empty audio_path", self.id)));
        }
        match (self.transcript.is_some(), self.binary_label.is_some()) {
            (true, true) => Err(Error::Data(format!(
                "{}: both transcript and binary_label present",
                self.id
            ))),
            (false, false) => Err(Error::Data(format!(
                "{}: neither transcript nor binary_label present",
                self.id
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.binary_label == Some(BinaryLabel::Positive)
    }
}

/// Read and validate a JSON-lines manifest. Blank lines are skipped,
/// duplicate ids rejected.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path)?;
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        entry.validate()?;
        if !seen.insert(entry.id.clone()) {
            return Err(Error::Data(format!(
                "{}: duplicate id {:?}",
                path.display(),
                entry.id
            )));
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput(format!("{}: no entries", path.display())));
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for entry in entries {
        entry.validate()?;
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
