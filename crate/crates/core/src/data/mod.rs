//! Dataset plumbing: manifests, the synthetic corpus generator, batching,
//! and in-memory loading of feature-file datasets for training and scoring.

pub mod batch;
pub mod manifest;
pub mod synth;

use std::path::Path;

use ndarray::Array2;

use crate::ctc::LabelSequence;
use crate::error::{Error, Result};
use crate::frontend::io::read_features;
use crate::nnet::TRIGGER;

pub use batch::epoch_batches;
pub use manifest::{read_manifest, write_manifest, BinaryLabel, ManifestEntry, Variant};
pub use synth::{generate_synthetic_corpus, SynthCorpus, SynthSpec};

/// One utterance loaded into memory with its supervision target.
#[derive(Debug, Clone)]
pub struct LoadedUtterance {
    pub id: String,
    /// `(T, D)` model-input features.
    pub input: Array2<f32>,
    pub frames_per_second: f32,
    pub target: Target,
}

#[derive(Debug, Clone)]
pub enum Target {
    /// Phone transcript for the phonetic head.
    Phones(LabelSequence),
    /// Keyword presence for the discriminative head.
    Keyword(BinaryLabel),
}

impl LoadedUtterance {
    pub fn num_frames(&self) -> usize {
        self.input.nrows()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.num_frames() as f64 / self.frames_per_second as f64
    }

    /// CTC target for this utterance: the transcript, or for keyword
    /// utterances the single trigger symbol (positives) / the empty
    /// sequence (negatives, blank-only supervision).
    pub fn label_sequence(&self) -> LabelSequence {
        match &self.target {
            Target::Phones(seq) => seq.clone(),
            Target::Keyword(BinaryLabel::Positive) => LabelSequence::new(vec![TRIGGER]),
            Target::Keyword(BinaryLabel::Negative) => LabelSequence::empty(),
        }
    }
}

/// Load every entry of a feature-file manifest into memory. Entries must
/// reference binary feature files (`featurize` converts WAV manifests).
pub fn load_dataset(entries: &[ManifestEntry]) -> Result<Vec<LoadedUtterance>> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("manifest has no entries".into()));
    }
    entries
        .iter()
        .map(|e| {
            e.validate()?;
            if e.audio_path.ends_with(".wav") {
                return Err(Error::Data(format!(
                    "{}: references WAV audio; run featurize first",
                    e.id
                )));
            }
            let (input, frames_per_second) = read_features(Path::new(&e.audio_path))?;
            if input.nrows() == 0 {
                return Err(Error::EmptyInput(format!("{}: zero frames", e.id)));
            }
            let target = match (&e.transcript, e.binary_label) {
                (Some(t), None) => Target::Phones(LabelSequence::new(t.clone())),
                (None, Some(l)) => Target::Keyword(l),
                _ => unreachable!("validate enforces the label xor"),
            };
            Ok(LoadedUtterance {
                id: e.id.clone(),
                input,
                frames_per_second,
                target,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::io::write_features;

    #[test]
    fn loads_features_and_maps_targets() {
        let dir = tempfile::tempdir().unwrap();
        let fa = dir.path().join("a.wsft");
        let fb = dir.path().join("b.wsft");
        write_features(&fa, Array2::<f32>::ones((7, 3)).view(), 25.0).unwrap();
        write_features(&fb, Array2::<f32>::ones((4, 3)).view(), 25.0).unwrap();

        let entries = vec![
            ManifestEntry {
                id: "a".into(),
                audio_path: fa.to_string_lossy().into_owned(),
                transcript: Some(vec![1, 2]),
                binary_label: None,
                variant: Variant::Clean,
                provenance: None,
            },
            ManifestEntry {
                id: "b".into(),
                audio_path: fb.to_string_lossy().into_owned(),
                transcript: None,
                binary_label: Some(BinaryLabel::Negative),
                variant: Variant::Clean,
                provenance: None,
            },
        ];
        let loaded = load_dataset(&entries).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].num_frames(), 7);
        assert!((loaded[0].duration_seconds() - 7.0 / 25.0).abs() < 1e-9);
        assert_eq!(loaded[0].label_sequence().symbols(), &[1, 2]);
        assert!(loaded[1].label_sequence().is_empty());
    }

    #[test]
    fn keyword_positive_maps_to_the_trigger_symbol() {
        let utt = LoadedUtterance {
            id: "p".into(),
            input: Array2::zeros((3, 2)),
            frames_per_second: 10.0,
            target: Target::Keyword(BinaryLabel::Positive),
        };
        assert_eq!(utt.label_sequence().symbols(), &[TRIGGER]);
    }

    #[test]
    fn wav_references_are_rejected_with_guidance() {
        let entries = vec![ManifestEntry {
            id: "w".into(),
            audio_path: "clip.wav".into(),
            transcript: Some(vec![1]),
            binary_label: None,
            variant: Variant::Clean,
            provenance: None,
        }];
        match load_dataset(&entries) {
            Err(Error::Data(msg)) => assert!(msg.contains("featurize")),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
