//! End-to-end comparison of five keyword scorers on one synthetic corpus:
//! a phonetic-only model, a keyword-only model from scratch, the same
//! fine-tuned from the phonetic model, and the two heads of one jointly
//! trained model. Four trainings, five DET curves.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cli::config::ExperimentConfig;
use crate::ctc::LabelSequence;
use crate::data::{load_dataset, read_manifest, BinaryLabel, LoadedUtterance, Target};
use crate::error::{Error, Result};
use crate::eval::{det_curve, fr_at_fa, write_curve_csv, write_det_svg, DetCurve, Segment};
use crate::nnet::{Alphabet, Model, ModelConfig, Task};
use crate::scorer::{score_keyword, score_trigger};
use crate::trainer::{train, TrainMode};

/// One evaluated scorer: its DET curve and the false-reject rates at the
/// configured FA/h targets.
#[derive(Debug, Clone)]
pub struct DemoModel {
    pub name: String,
    pub curve: DetCurve,
    pub fr_at_targets: Vec<f64>,
}

#[derive(Debug)]
pub struct DemoOutcome {
    pub models: Vec<DemoModel>,
    pub fa_targets: Vec<f64>,
    pub elapsed_seconds: f64,
}

/// Extend a phonetic-only model with a freshly initialized keyword head,
/// keeping every trained parameter. Flat parameter order puts the keyword
/// head last, so the trained model is a prefix.
pub fn add_keyword_head(base: &Model<f32>, seed: u64) -> Result<Model<f32>> {
    if base.config.discriminative.is_some() {
        return Err(Error::Config(
            "model already has a keyword head".into(),
        ));
    }
    let mut config = base.config.clone();
    config.discriminative = Some(Alphabet::keyword());
    let mut extended = Model::new(config, seed)?;
    let base_flat = base.flatten_params();
    let mut flat = extended.flatten_params();
    flat[..base_flat.len()].copy_from_slice(&base_flat);
    extended.load_flat_params(&flat)?;
    Ok(extended)
}

/// Score every utterance of a keyword-labelled dataset with one head.
/// Phonetic heads score the explicit keyword phone sequence; keyword heads
/// score their trigger symbol.
pub fn score_segments(
    model: &Model<f32>,
    data: &[LoadedUtterance],
    task: Task,
    keyword: Option<&LabelSequence>,
) -> Result<Vec<Segment>> {
    data.iter()
        .map(|u| {
            let positive = match &u.target {
                Target::Keyword(BinaryLabel::Positive) => true,
                Target::Keyword(BinaryLabel::Negative) => false,
                Target::Phones(_) => {
                    return Err(Error::Data(format!(
                        "{}: scoring needs keyword labels, found a transcript",
                        u.id
                    )))
                }
            };
            let gram = model.log_posteriors(u.input.view(), task)?;
            let score = match keyword {
                Some(k) => score_keyword(&gram, k)?,
                None => score_trigger(&gram)?,
            };
            Ok(Segment {
                id: u.id.clone(),
                score: score.normalized,
                positive,
                duration_seconds: u.duration_seconds(),
            })
        })
        .collect()
}

fn trunk_config(cfg: &ExperimentConfig, phones: Option<Alphabet>, keyword: bool) -> ModelConfig {
    ModelConfig {
        input_dim: cfg.synth.feature_dim,
        hidden_dim: cfg.hidden_dim,
        num_layers: cfg.num_layers,
        phonetic: phones,
        discriminative: keyword.then(Alphabet::keyword),
    }
}

/// Run the whole comparison under `out_dir`: corpus under `corpus/`,
/// checkpoints under `models/<name>/`, curves as `det_<name>.csv`, the
/// combined plot as `det.svg` and the FR table as `summary.csv`.
pub fn run_demo(cfg: &ExperimentConfig, out_dir: &Path) -> Result<DemoOutcome> {
    cfg.validate()?;
    let started = Instant::now();

    let mut spec = cfg.synth.clone();
    spec.seed = cfg.stage_seed("synth");
    let corpus_dir = out_dir.join("corpus");
    log::info!("synthesizing corpus under {}", corpus_dir.display());
    crate::data::generate_synthetic_corpus(&spec, &corpus_dir)?;
    let phonetic = load_dataset(&read_manifest(&corpus_dir.join("phonetic.jsonl"))?)?;
    let disc = load_dataset(&read_manifest(&corpus_dir.join("disc.jsonl"))?)?;
    let test = load_dataset(&read_manifest(&corpus_dir.join("test.jsonl"))?)?;
    log::info!(
        "corpus ready: {} phonetic, {} keyword, {} test utterances",
        phonetic.len(),
        disc.len(),
        test.len()
    );

    let phones = Alphabet::phones(spec.num_phones)?;
    let models_dir = out_dir.join("models");
    let train_dir = |name: &str| Some(models_dir.join(name)).map(PathBuf::from);

    let mut phonetic_tc = cfg.train.clone();
    let mut keyword_tc = cfg.train.clone();
    keyword_tc.epochs = cfg.keyword_epochs;

    // Phonetic-only reference model.
    let mut baseline = Model::new(
        trunk_config(cfg, Some(phones.clone()), false),
        cfg.stage_seed("init/baseline"),
    )?;
    phonetic_tc.seed = cfg.stage_seed("train/baseline");
    log::info!("training baseline ({} epochs)", phonetic_tc.epochs);
    train(
        &mut baseline,
        &phonetic,
        &[],
        TrainMode::Baseline,
        &phonetic_tc,
        train_dir("baseline").as_deref(),
    )?;

    // Keyword-only model from a fresh initialization.
    let mut scratch = Model::new(
        trunk_config(cfg, None, true),
        cfg.stage_seed("init/scratch"),
    )?;
    keyword_tc.seed = cfg.stage_seed("train/scratch");
    log::info!("training scratch keyword model ({} epochs)", keyword_tc.epochs);
    train(
        &mut scratch,
        &[],
        &disc,
        TrainMode::Scratch,
        &keyword_tc,
        train_dir("scratch").as_deref(),
    )?;

    // Keyword model fine-tuned from the trained baseline.
    let mut finetune = add_keyword_head(&baseline, cfg.stage_seed("init/finetune"))?;
    keyword_tc.seed = cfg.stage_seed("train/finetune");
    log::info!("fine-tuning keyword model ({} epochs)", keyword_tc.epochs);
    train(
        &mut finetune,
        &[],
        &disc,
        TrainMode::Finetune,
        &keyword_tc,
        train_dir("finetune").as_deref(),
    )?;

    // Jointly trained model; both of its heads get evaluated.
    let mut mtl = Model::new(
        trunk_config(cfg, Some(phones), true),
        cfg.stage_seed("init/mtl"),
    )?;
    phonetic_tc.seed = cfg.stage_seed("train/mtl");
    log::info!("training joint model ({} epochs)", phonetic_tc.epochs);
    train(
        &mut mtl,
        &phonetic,
        &disc,
        TrainMode::Mtl,
        &phonetic_tc,
        train_dir("mtl").as_deref(),
    )?;

    let keyword = LabelSequence::new(spec.keyword.clone());
    let scorers: [(&str, &Model<f32>, Task, Option<&LabelSequence>); 5] = [
        ("baseline_phonetic", &baseline, Task::Phonetic, Some(&keyword)),
        ("scratch_keyword", &scratch, Task::Discriminative, None),
        ("finetune_keyword", &finetune, Task::Discriminative, None),
        ("mtl_phonetic", &mtl, Task::Phonetic, Some(&keyword)),
        ("mtl_keyword", &mtl, Task::Discriminative, None),
    ];

    let mut models = Vec::with_capacity(scorers.len());
    let mut named_curves = Vec::with_capacity(scorers.len());
    for (name, model, task, kw) in scorers {
        let segments = score_segments(model, &test, task, kw)?;
        let curve = det_curve(&segments)?;
        write_curve_csv(&out_dir.join(format!("det_{name}.csv")), &curve)?;
        let fr_at_targets: Vec<f64> = cfg
            .fa_targets
            .iter()
            .map(|&t| fr_at_fa(&curve, t))
            .collect();
        log::info!("{name}: fr at fa targets {fr_at_targets:?}");
        named_curves.push((name.to_string(), curve.clone()));
        models.push(DemoModel {
            name: name.to_string(),
            curve,
            fr_at_targets,
        });
    }
    write_det_svg(&out_dir.join("det.svg"), &named_curves)?;

    let mut summary = String::from("model,fa_per_hour_target,fr\n");
    for m in &models {
        for (t, fr) in cfg.fa_targets.iter().zip(&m.fr_at_targets) {
            summary.push_str(&format!("{},{},{}\n", m.name, t, fr));
        }
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;

    Ok(DemoOutcome {
        models,
        fa_targets: cfg.fa_targets.clone(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}
