//! Synthetic corpus generator: phone strings rendered as noisy template
//! feature sequences, split into a large phonetic set, a small keyword
//! (discriminative) set, and a held-out test set with confusable negatives.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::manifest::{
    write_manifest, BinaryLabel, ManifestEntry, Variant,
};
use crate::error::{Error, Result};
use crate::frontend::io::write_features;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Real phones (alphabet indices 1..=num_phones; 0 stays the blank).
    pub num_phones: usize,
    pub feature_dim: usize,
    /// Keyword as phone indices.
    pub keyword: Vec<usize>,
    /// Explicit confusable strings; empty means derive edit-distance-1/2
    /// variants of the keyword.
    pub confusables: Vec<Vec<usize>>,
    pub phonetic_count: usize,
    pub disc_count: usize,
    pub test_positives: usize,
    pub test_negatives: usize,
    /// Inclusive frame-duration range per phone.
    pub frames_per_phone: (usize, usize),
    /// Inclusive length range of random phone strings.
    pub phones_per_utt: (usize, usize),
    /// Standard deviation of the white noise added to templates.
    pub noise_level: f32,
    /// Nominal rate stamped into feature files (drives durations).
    pub frames_per_second: f32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_phones: 10,
            feature_dim: 24,
            keyword: vec![2, 7, 4, 9],
            confusables: Vec::new(),
            phonetic_count: 1200,
            disc_count: 60,
            test_positives: 250,
            test_negatives: 2400,
            frames_per_phone: (3, 8),
            phones_per_utt: (6, 12),
            noise_level: 0.12,
            frames_per_second: 100.0 / 3.0,
            seed: 17,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_phones < 2 {
            return Err(Error::Config("need at least 2 phones".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.keyword.is_empty() {
            return Err(Error::Config("keyword must be nonempty".into()));
        }
        if self.keyword.iter().any(|&p| p == 0 || p > self.num_phones) {
            return Err(Error::Config(format!(
                "keyword {:?} not expressible with {} phones",
                self.keyword, self.num_phones
            )));
        }
        for c in &self.confusables {
            if c == &self.keyword {
                return Err(Error::Config("confusable equals the keyword".into()));
            }
            if c.is_empty() || c.iter().any(|&p| p == 0 || p > self.num_phones) {
                return Err(Error::Config(format!("confusable {c:?} out of alphabet")));
            }
        }
        if self.phonetic_count == 0
            || self.disc_count < 2
            || self.test_positives == 0
            || self.test_negatives == 0
        {
            return Err(Error::Config("all corpus counts must be positive".into()));
        }
        if self.phonetic_count < 20 * self.disc_count {
            return Err(Error::Config(format!(
                "phonetic set ({}) must be at least 20x the discriminative set ({})",
                self.phonetic_count, self.disc_count
            )));
        }
        let (flo, fhi) = self.frames_per_phone;
        let (plo, phi) = self.phones_per_utt;
        if flo == 0 || flo > fhi || plo == 0 || plo > phi {
            return Err(Error::Config("invalid duration/length ranges".into()));
        }
        if self.noise_level < 0.0 || self.frames_per_second <= 0.0 {
            return Err(Error::Config("invalid noise level or frame rate".into()));
        }
        Ok(())
    }
}

/// Generated corpus: the three manifests plus, for inspection, the phone
/// string behind every utterance id and the confusable pool used.
pub struct SynthCorpus {
    pub phonetic: Vec<ManifestEntry>,
    pub disc: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    pub strings: BTreeMap<String, Vec<usize>>,
    pub confusables: Vec<Vec<usize>>,
}

fn derive_confusables(spec: &SynthSpec, rng: &mut StdRng) -> Vec<Vec<usize>> {
    let mut pool = Vec::new();
    // Distance 1: one substitution per position.
    for i in 0..spec.keyword.len() {
        let mut alt = spec.keyword.clone();
        let mut sub = rng.random_range(1..=spec.num_phones);
        while sub == spec.keyword[i] {
            sub = rng.random_range(1..=spec.num_phones);
        }
        alt[i] = sub;
        if !pool.contains(&alt) {
            pool.push(alt);
        }
    }
    // Distance 2: two substitutions at distinct positions.
    if spec.keyword.len() >= 2 {
        for _ in 0..spec.keyword.len() {
            let mut alt = spec.keyword.clone();
            let i = rng.random_range(0..alt.len());
            let mut j = rng.random_range(0..alt.len());
            while j == i {
                j = rng.random_range(0..alt.len());
            }
            for pos in [i, j] {
                let mut sub = rng.random_range(1..=spec.num_phones);
                while sub == spec.keyword[pos] {
                    sub = rng.random_range(1..=spec.num_phones);
                }
                alt[pos] = sub;
            }
            if alt != spec.keyword && !pool.contains(&alt) {
                pool.push(alt);
            }
        }
    }
    pool
}

struct Renderer<'a> {
    spec: &'a SynthSpec,
    templates: Array2<f32>,
}

impl<'a> Renderer<'a> {
    fn new(spec: &'a SynthSpec, rng: &mut StdRng) -> Self {
        let templates = Array2::from_shape_fn((spec.num_phones, spec.feature_dim), |_| {
            rng.random_range(-1.0f32..1.0)
        });
        Self { spec, templates }
    }

    fn render(&self, string: &[usize], rng: &mut StdRng) -> Array2<f32> {
        let normal = rand_distr::Normal::<f32>::new(0.0, 1.0).expect("unit normal");
        let (flo, fhi) = self.spec.frames_per_phone;
        let mut rows: Vec<f32> = Vec::new();
        let mut t = 0;
        for &p in string {
            let dur = rng.random_range(flo..=fhi);
            for _ in 0..dur {
                for d in 0..self.spec.feature_dim {
                    rows.push(
                        self.templates[(p - 1, d)] + self.spec.noise_level * normal.sample(rng),
                    );
                }
                t += 1;
            }
        }
        Array2::from_shape_vec((t, self.spec.feature_dim), rows).expect("row count")
    }
}

fn random_string(spec: &SynthSpec, rng: &mut StdRng) -> Vec<usize> {
    let len = rng.random_range(spec.phones_per_utt.0..=spec.phones_per_utt.1);
    (0..len).map(|_| rng.random_range(1..=spec.num_phones)).collect()
}

fn with_context(core: &[usize], spec: &SynthSpec, rng: &mut StdRng) -> Vec<usize> {
    let left = rng.random_range(1..=3);
    let right = rng.random_range(1..=3);
    let mut s: Vec<usize> = (0..left)
        .map(|_| rng.random_range(1..=spec.num_phones))
        .collect();
    s.extend_from_slice(core);
    s.extend((0..right).map(|_| rng.random_range(1..=spec.num_phones)));
    s
}

/// Generate the corpus under `out_dir`: feature files in `feats/`, plus
/// `phonetic.jsonl`, `disc.jsonl`, and `test.jsonl`.
pub fn generate_synthetic_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<SynthCorpus> {
    spec.validate()?;
    let feats_dir = out_dir.join("feats");
    std::fs::create_dir_all(&feats_dir)?;

    let mut rng = StdRng::seed_from_u64(spec.seed);
    let renderer = Renderer::new(spec, &mut rng);
    let confusables = if spec.confusables.is_empty() {
        derive_confusables(spec, &mut rng)
    } else {
        spec.confusables.clone()
    };

    let mut strings = BTreeMap::new();
    let emit = |id: String,
                    string: Vec<usize>,
                    label: Option<BinaryLabel>,
                    rng: &mut StdRng,
                    strings: &mut BTreeMap<String, Vec<usize>>|
     -> Result<ManifestEntry> {
        let feats = renderer.render(&string, rng);
        let path = feats_dir.join(format!("{id}.wsft"));
        write_features(&path, feats.view(), spec.frames_per_second)?;
        let entry = ManifestEntry {
            id: id.clone(),
            audio_path: path.to_string_lossy().into_owned(),
            transcript: if label.is_none() { Some(string.clone()) } else { None },
            binary_label: label,
            variant: Variant::Clean,
            provenance: None,
        };
        strings.insert(id, string);
        Ok(entry)
    };

    let mut phonetic = Vec::with_capacity(spec.phonetic_count);
    for i in 0..spec.phonetic_count {
        let s = random_string(spec, &mut rng);
        phonetic.push(emit(format!("ph_{i:05}"), s, None, &mut rng, &mut strings)?);
    }

    // Discriminative set: half positives, negatives alternating between
    // confusables-in-context and random strings.
    let mut disc = Vec::with_capacity(spec.disc_count);
    let disc_pos = spec.disc_count / 2;
    for i in 0..disc_pos {
        let s = with_context(&spec.keyword, spec, &mut rng);
        disc.push(emit(
            format!("disc_pos_{i:04}"),
            s,
            Some(BinaryLabel::Positive),
            &mut rng,
            &mut strings,
        )?);
    }
    for i in 0..spec.disc_count - disc_pos {
        let (id, s) = if i % 2 == 0 {
            let c = &confusables[rng.random_range(0..confusables.len())];
            (format!("disc_neg_conf_{i:04}"), with_context(c, spec, &mut rng))
        } else {
            (format!("disc_neg_rand_{i:04}"), random_string(spec, &mut rng))
        };
        disc.push(emit(id, s, Some(BinaryLabel::Negative), &mut rng, &mut strings)?);
    }

    let mut test = Vec::with_capacity(spec.test_positives + spec.test_negatives);
    for i in 0..spec.test_positives {
        let s = with_context(&spec.keyword, spec, &mut rng);
        test.push(emit(
            format!("test_pos_{i:05}"),
            s,
            Some(BinaryLabel::Positive),
            &mut rng,
            &mut strings,
        )?);
    }
    for i in 0..spec.test_negatives {
        let (id, s) = if i % 2 == 0 {
            let c = &confusables[rng.random_range(0..confusables.len())];
            (format!("test_neg_conf_{i:05}"), with_context(c, spec, &mut rng))
        } else {
            (format!("test_neg_rand_{i:05}"), random_string(spec, &mut rng))
        };
        test.push(emit(id, s, Some(BinaryLabel::Negative), &mut rng, &mut strings)?);
    }

    write_manifest(&out_dir.join("phonetic.jsonl"), &phonetic)?;
    write_manifest(&out_dir.join("disc.jsonl"), &disc)?;
    write_manifest(&out_dir.join("test.jsonl"), &test)?;

    Ok(SynthCorpus { phonetic, disc, test, strings, confusables })
}
