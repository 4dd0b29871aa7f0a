//! Command-line surface. Every subcommand validates its full configuration
//! before touching the filesystem, and every failure maps onto a stable
//! exit code (2 config, 3 data, 4 numeric).

pub mod config;
pub mod demo;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::ctc::LabelSequence;
use crate::data::{load_dataset, read_manifest, write_manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::eval::{det_curve, fr_at_fa, read_segments_csv, write_curve_csv, write_det_svg};
use crate::frontend::io::{read_wav, write_features};
use crate::frontend::{compute_features, stack_and_subsample};
use crate::nnet::{checkpoint, Alphabet, Model, ModelConfig, Task};
use crate::trainer::{train, TrainConfig, TrainMode};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "wakescore",
    version,
    about = "Second-pass keyword rescoring toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Scratch,
    Finetune,
    Mtl,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => TrainMode::Baseline,
            ModeArg::Scratch => TrainMode::Scratch,
            ModeArg::Finetune => TrainMode::Finetune,
            ModeArg::Mtl => TrainMode::Mtl,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Phonetic,
    #[value(alias = "disc")]
    Discriminative,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic feature corpus with train/keyword/test manifests.
    Synth {
        /// Experiment config (.toml or .json); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Triple a WAV manifest: clean, reverberated, reverberated plus
    /// playback residual.
    Augment {
        /// Manifest of clean WAV utterances.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Size of the synthetic room-response pool.
        #[arg(long, default_value_t = 40)]
        rirs: usize,
        /// Size of the synthetic playback-residual pool.
        #[arg(long, default_value_t = 40)]
        residuals: usize,
    },
    /// Convert a WAV manifest into model-input feature files.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model and write per-epoch checkpoints plus a loss log.
    Train {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Manifest with phone transcripts (baseline and mtl).
        #[arg(long)]
        phonetic_manifest: Option<PathBuf>,
        /// Manifest with keyword labels (scratch, finetune and mtl).
        #[arg(long)]
        disc_manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Checkpoint to initialize from (required for finetune).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Score a keyword-labelled manifest with one head of a trained model.
    Score {
        /// Trained checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = HeadArg::Discriminative)]
        head: HeadArg,
        /// Keyword phone indices for phonetic-head scoring, e.g. "2,7,4,9";
        /// defaults to the keyword in the config.
        #[arg(long)]
        keyword: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output TSV: id, log probability, per-frame normalized score.
        #[arg(long)]
        out: PathBuf,
        /// Also write an eval-det input CSV (id,score,label,duration_s).
        #[arg(long)]
        det_csv: Option<PathBuf>,
    },
    /// Sweep detection thresholds over a scored-segment CSV.
    EvalDet {
        /// CSV with header id,score,label,duration_s.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// FA/h operating points for the printed FR table.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
        fa_targets: Vec<f64>,
    },
    /// Synthesize a corpus, train four models and compare five scorers.
    Demo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out_dir } => cmd_synth(config.as_deref(), &out_dir),
        Command::Augment {
            manifest,
            out_dir,
            config,
            rirs,
            residuals,
        } => cmd_augment(&manifest, &out_dir, config.as_deref(), rirs, residuals),
        Command::Featurize {
            manifest,
            out_dir,
            config,
        } => cmd_featurize(&manifest, &out_dir, config.as_deref()),
        Command::Train {
            mode,
            phonetic_manifest,
            disc_manifest,
            config,
            out_dir,
            init,
        } => cmd_train(
            mode,
            phonetic_manifest.as_deref(),
            disc_manifest.as_deref(),
            config.as_deref(),
            &out_dir,
            init.as_deref(),
        ),
        Command::Score {
            model,
            manifest,
            head,
            keyword,
            config,
            out,
            det_csv,
        } => cmd_score(
            &model,
            &manifest,
            head,
            keyword.as_deref(),
            config.as_deref(),
            &out,
            det_csv.as_deref(),
        ),
        Command::EvalDet {
            scores,
            out_dir,
            fa_targets,
        } => cmd_eval_det(&scores, &out_dir, &fa_targets),
        Command::Demo { config, out_dir } => cmd_demo(config.as_deref(), &out_dir),
    }
}

fn cmd_synth(config: Option<&Path>, out_dir: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let mut spec = cfg.synth.clone();
    spec.seed = cfg.stage_seed("synth");
    let corpus = crate::data::generate_synthetic_corpus(&spec, out_dir)?;
    println!(
        "wrote {} phonetic, {} keyword, {} test utterances under {}",
        corpus.phonetic.len(),
        corpus.disc.len(),
        corpus.test.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_augment(
    manifest: &Path,
    out_dir: &Path,
    config: Option<&Path>,
    rirs: usize,
    residuals: usize,
) -> Result<()> {
    if rirs == 0 || residuals == 0 {
        return Err(Error::Config(
            "rir and residual pool sizes must be positive".into(),
        ));
    }
    let cfg = load_config(config)?;
    let entries = read_manifest(manifest)?;
    let sample_rate = cfg.frontend.sample_rate;
    let rir_pool = crate::augment::synth_rir_pool(rirs, sample_rate, cfg.stage_seed("augment/rir"));
    let residual_pool = crate::augment::synth_residual_pool(
        residuals,
        sample_rate,
        sample_rate as usize * 2,
        cfg.stage_seed("augment/residual"),
    );
    let augmented = crate::augment::build_augmented_set(
        &entries,
        &rir_pool,
        &residual_pool,
        out_dir,
        cfg.stage_seed("augment/mix"),
    )?;
    let manifest_path = out_dir.join("augmented.jsonl");
    write_manifest(&manifest_path, &augmented)?;
    println!(
        "wrote {} entries ({}x) to {}",
        augmented.len(),
        augmented.len() / entries.len(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_featurize(manifest: &Path, out_dir: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let entries = read_manifest(manifest)?;
    let feats_dir = out_dir.join("feats");
    std::fs::create_dir_all(&feats_dir)?;
    let mut converted = Vec::with_capacity(entries.len());
    for entry in &entries {
        let clip = read_wav(Path::new(&entry.audio_path))?;
        let features = compute_features(&clip, &cfg.frontend)?;
        let input = stack_and_subsample(&features, cfg.frontend.context, cfg.frontend.subsample)?;
        let path = feats_dir.join(format!("{}.wsft", entry.id));
        write_features(&path, input.data.view(), input.frames_per_second)?;
        converted.push(ManifestEntry {
            audio_path: path.to_string_lossy().into_owned(),
            ..entry.clone()
        });
    }
    let manifest_path = out_dir.join("features.jsonl");
    write_manifest(&manifest_path, &converted)?;
    println!(
        "featurized {} utterances into {}",
        converted.len(),
        manifest_path.display()
    );
    Ok(())
}

/// Highest phone index used by any transcript; the alphabet must cover it.
fn infer_num_phones(entries: &[ManifestEntry]) -> Result<usize> {
    let max = entries
        .iter()
        .filter_map(|e| e.transcript.as_ref())
        .flat_map(|t| t.iter().copied())
        .max();
    match max {
        Some(m) if m > 0 => Ok(m),
        _ => Err(Error::Data(
            "phonetic manifest carries no usable transcripts".into(),
        )),
    }
}

fn cmd_train(
    mode: ModeArg,
    phonetic_manifest: Option<&Path>,
    disc_manifest: Option<&Path>,
    config: Option<&Path>,
    out_dir: &Path,
    init: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let mode: TrainMode = mode.into();

    let needs_phonetic = matches!(mode, TrainMode::Baseline | TrainMode::Mtl);
    let needs_disc = matches!(mode, TrainMode::Scratch | TrainMode::Finetune | TrainMode::Mtl);
    let phonetic_entries = match (needs_phonetic, phonetic_manifest) {
        (true, Some(p)) => read_manifest(p)?,
        (true, None) => {
            return Err(Error::Config(format!(
                "{mode:?} training requires --phonetic-manifest"
            )))
        }
        (false, _) => Vec::new(),
    };
    let disc_entries = match (needs_disc, disc_manifest) {
        (true, Some(p)) => read_manifest(p)?,
        (true, None) => {
            return Err(Error::Config(format!(
                "{mode:?} training requires --disc-manifest"
            )))
        }
        (false, _) => Vec::new(),
    };

    let phonetic = if phonetic_entries.is_empty() {
        Vec::new()
    } else {
        load_dataset(&phonetic_entries)?
    };
    let disc = if disc_entries.is_empty() {
        Vec::new()
    } else {
        load_dataset(&disc_entries)?
    };

    let input_dim = phonetic
        .first()
        .or_else(|| disc.first())
        .map(|u| u.input.ncols())
        .ok_or_else(|| Error::EmptyInput("no training data".into()))?;
    for u in phonetic.iter().chain(&disc) {
        if u.input.ncols() != input_dim {
            return Err(Error::Shape(format!(
                "{}: feature width {} differs from {}",
                u.id,
                u.input.ncols(),
                input_dim
            )));
        }
    }

    let mut model = match (mode, init) {
        (TrainMode::Finetune, Some(ckpt)) => {
            let base = checkpoint::load(ckpt)?;
            if base.config.input_dim != input_dim {
                return Err(Error::Shape(format!(
                    "checkpoint expects {}-dim input, data has {}",
                    base.config.input_dim, input_dim
                )));
            }
            if base.config.discriminative.is_some() {
                base
            } else {
                demo::add_keyword_head(&base, cfg.stage_seed("init/finetune"))?
            }
        }
        (TrainMode::Finetune, None) => {
            return Err(Error::Config("finetune requires --init <checkpoint>".into()))
        }
        (_, Some(ckpt)) => checkpoint::load(ckpt)?,
        (_, None) => {
            let model_config = ModelConfig {
                input_dim,
                hidden_dim: cfg.hidden_dim,
                num_layers: cfg.num_layers,
                phonetic: if needs_phonetic {
                    Some(Alphabet::phones(infer_num_phones(&phonetic_entries)?)?)
                } else {
                    None
                },
                discriminative: needs_disc.then(Alphabet::keyword),
            };
            Model::new(model_config, cfg.stage_seed("init"))?
        }
    };

    let mut train_cfg: TrainConfig = cfg.train.clone();
    train_cfg.seed = cfg.stage_seed("train");
    let outcome = train(&mut model, &phonetic, &disc, mode, &train_cfg, Some(out_dir))?;
    let last = outcome.log.last();
    println!(
        "trained {} steps, final c_mtl {}, checkpoint {}",
        outcome.log.len(),
        last.map(|r| r.c_mtl).unwrap_or(f64::NAN),
        outcome
            .final_checkpoint
            .as_deref()
            .unwrap_or(Path::new("-"))
            .display()
    );
    Ok(())
}

fn parse_keyword(text: &str) -> Result<Vec<usize>> {
    let symbols: std::result::Result<Vec<usize>, _> =
        text.split(',').map(|s| s.trim().parse::<usize>()).collect();
    match symbols {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Config(format!(
            "keyword must be comma-separated phone indices, got {text:?}"
        ))),
    }
}

fn cmd_score(
    model_path: &Path,
    manifest: &Path,
    head: HeadArg,
    keyword: Option<&str>,
    config: Option<&Path>,
    out: &Path,
    det_csv: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let model = checkpoint::load(model_path)?;
    let data = load_dataset(&read_manifest(manifest)?)?;

    let (task, labels) = match head {
        HeadArg::Phonetic => {
            let symbols = match keyword {
                Some(text) => parse_keyword(text)?,
                None => cfg.synth.keyword.clone(),
            };
            (Task::Phonetic, Some(LabelSequence::new(symbols)))
        }
        HeadArg::Discriminative => (Task::Discriminative, None),
    };

    let mut tsv = String::from("id\tlog_prob\tnormalized\n");
    let mut segments = Vec::with_capacity(data.len());
    for u in &data {
        let gram = model.log_posteriors(u.input.view(), task)?;
        let score = match &labels {
            Some(k) => crate::scorer::score_keyword(&gram, k)?,
            None => crate::scorer::score_trigger(&gram)?,
        };
        tsv.push_str(&format!(
            "{}\t{}\t{}\n",
            u.id, score.log_prob, score.normalized
        ));
        segments.push((u, score));
    }
    std::fs::write(out, tsv)?;
    println!("scored {} utterances into {}", data.len(), out.display());

    if let Some(det_path) = det_csv {
        let mut csv_text = String::from("id,score,label,duration_s\n");
        for (u, score) in &segments {
            let label = match &u.target {
                crate::data::Target::Keyword(crate::data::BinaryLabel::Positive) => "positive",
                crate::data::Target::Keyword(crate::data::BinaryLabel::Negative) => "negative",
                crate::data::Target::Phones(_) => {
                    return Err(Error::Data(format!(
                        "{}: det output needs keyword labels, found a transcript",
                        u.id
                    )))
                }
            };
            csv_text.push_str(&format!(
                "{},{},{},{}\n",
                u.id,
                score.normalized,
                label,
                u.duration_seconds()
            ));
        }
        std::fs::write(det_path, csv_text)?;
        println!("wrote det input {}", det_path.display());
    }
    Ok(())
}

fn cmd_eval_det(scores: &Path, out_dir: &Path, fa_targets: &[f64]) -> Result<()> {
    for &t in fa_targets {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Config(format!(
                "fa targets must be finite and non-negative, got {t}"
            )));
        }
    }
    let segments = read_segments_csv(scores)?;
    let curve = det_curve(&segments)?;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("det_curve.csv");
    let svg_path = out_dir.join("det_curve.svg");
    write_curve_csv(&csv_path, &curve)?;
    write_det_svg(&svg_path, &[("scores".to_string(), curve.clone())])?;
    println!(
        "{} positives, {} negatives over {:.3} negative hours",
        curve.num_positives, curve.num_negatives, curve.negative_hours
    );
    println!("fa_per_hour_target\tfr");
    for &t in fa_targets {
        println!("{t}\t{}", fr_at_fa(&curve, t));
    }
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}

fn cmd_demo(config: Option<&Path>, out_dir: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let outcome = demo::run_demo(&cfg, out_dir)?;
    println!("five scorers evaluated in {:.1} s", outcome.elapsed_seconds);
    print!("model");
    for t in &outcome.fa_targets {
        print!("\tfr@{t}/h");
    }
    println!();
    for m in &outcome.models {
        print!("{}", m.name);
        for fr in &m.fr_at_targets {
            print!("\t{fr:.4}");
        }
        println!();
    }
    println!("outputs under {}", out_dir.display());
    Ok(())
}
