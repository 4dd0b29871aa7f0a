//! Multi-task training: shared-trunk gradient accumulation across phonetic
//! and keyword batches, synchronous multi-worker reduction, Adam with global
//! norm clipping, per-epoch checkpoints and a step-level loss log.

pub mod adam;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::ctc::{ctc_grad, LabelSequence};
use crate::data::LoadedUtterance;
use crate::error::{Error, Result};
use crate::nnet::{checkpoint, log_softmax, Model, ModelGrads, Task};
use crate::scalar::Scalar;

pub use adam::{clip_gradient, global_norm, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Phonetic head on transcribed data.
    Baseline,
    /// Keyword head only, trained from a fresh initialization.
    Scratch,
    /// Keyword head on keyword data, starting from a trained trunk.
    /// Inside the loop this is identical to `Scratch`; the difference is
    /// entirely in how the caller initializes the model.
    Finetune,
    /// Phonetic and keyword sub-batches on every step, shared trunk.
    Mtl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size_per_worker: usize,
    pub workers: usize,
    pub grad_clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fraction of each global batch drawn from the keyword set in `Mtl`.
    pub mtl_mix: f64,
    pub lambda_phonetic: f64,
    pub lambda_discriminative: f64,
    pub bucketing: bool,
    pub halve_lr_on_plateau: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0032,
            epochs: 15,
            batch_size_per_worker: 16,
            workers: 2,
            grad_clip_norm: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            mtl_mix: 0.25,
            lambda_phonetic: 1.0,
            lambda_discriminative: 1.0,
            bucketing: true,
            halve_lr_on_plateau: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size_per_worker == 0 {
            return Err(Error::Config("batch_size_per_worker must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config(format!(
                "grad_clip_norm must be positive, got {}",
                self.grad_clip_norm
            )));
        }
        if !(0.0..=1.0).contains(&self.mtl_mix) {
            return Err(Error::Config(format!(
                "mtl_mix must lie in [0, 1], got {}",
                self.mtl_mix
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.lambda_phonetic < 0.0 || self.lambda_discriminative < 0.0 {
            return Err(Error::Config("task weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-step loss decomposition. With unit task weights the combined loss is
/// the plain sum `c_p + c_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlLoss {
    pub c_p: f64,
    pub c_d: f64,
    pub c_mtl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub c_p: f64,
    pub c_d: f64,
    pub c_mtl: f64,
    pub grad_norm: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub log: Vec<StepRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

/// One utterance prepared for a gradient pass: input view, CTC target, the
/// head it trains, and its pre-divided loss weight.
#[derive(Clone)]
pub struct BatchItem<'a, F: Scalar> {
    pub input: ArrayView2<'a, F>,
    pub target: LabelSequence,
    pub task: Task,
    pub weight: F,
}

fn item_gradients<F: Scalar>(
    model: &Model<F>,
    items: &[BatchItem<'_, F>],
) -> Result<(Vec<f64>, ModelGrads<F>)> {
    let mut grads = ModelGrads::zeros_like(model);
    let mut losses = Vec::with_capacity(items.len());
    for item in items {
        let (hidden, tape) = model.forward_trunk(item.input)?;
        let head = model.head(item.task)?;
        let blank = model.alphabet(item.task)?.blank();
        let logits = head.logits(hidden.view());
        let logp = log_softmax(logits.view());
        let res = ctc_grad(logp.view(), &item.target, blank)?;
        losses.push(res.loss.as_f64());
        let mut d_logits = res.grad_logits.expect("ctc_grad fills the gradient");
        d_logits.mapv_inplace(|v| v * item.weight);
        let (head_grads, d_hidden) = head.backward(hidden.view(), d_logits.view());
        match item.task {
            Task::Phonetic => grads.phonetic.as_mut().expect("head exists").add_assign(&head_grads),
            Task::Discriminative => {
                grads.discriminative.as_mut().expect("head exists").add_assign(&head_grads)
            }
        }
        model.backward_trunk(&tape, d_hidden, &mut grads);
    }
    Ok((losses, grads))
}

/// Forward/backward over a batch, split contiguously across `workers`
/// threads. Worker gradients are reduced in worker order, so the result for
/// a given worker count is reproducible run to run. Per-item losses are
/// returned unweighted, in batch order.
pub fn batch_gradients<F: Scalar>(
    model: &Model<F>,
    items: &[BatchItem<'_, F>],
    workers: usize,
) -> Result<(Vec<f64>, ModelGrads<F>)> {
    if items.is_empty() {
        return Err(Error::EmptyInput("batch_gradients: empty batch".into()));
    }
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let chunk = items.len().div_ceil(workers);
    if workers == 1 || chunk == items.len() {
        return item_gradients(model, items);
    }
    let results: Vec<Result<(Vec<f64>, ModelGrads<F>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || item_gradients(model, part)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    });
    let mut losses = Vec::with_capacity(items.len());
    let mut total = ModelGrads::zeros_like(model);
    for result in results {
        let (part_losses, part_grads) = result?;
        losses.extend(part_losses);
        total.add_assign(&part_grads);
    }
    Ok((losses, total))
}

fn feasible<'a>(batch: &[&'a LoadedUtterance]) -> Vec<(&'a LoadedUtterance, LabelSequence)> {
    batch
        .iter()
        .filter_map(|u| {
            let seq = u.label_sequence();
            if seq.min_frames() <= u.num_frames() {
                Some((*u, seq))
            } else {
                log::warn!(
                    "{}: target needs {} frames but only {} available, dropped",
                    u.id,
                    seq.min_frames(),
                    u.num_frames()
                );
                None
            }
        })
        .collect()
}

fn mean_in_order(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        return 0.0;
    }
    losses.iter().sum::<f64>() / losses.len() as f64
}

/// One synchronous update: gradients from the phonetic and keyword
/// sub-batches accumulate into the shared trunk, get clipped, and feed one
/// Adam step. Returns `None` (no update) when every utterance in the batch
/// is infeasible.
pub fn mtl_step(
    model: &mut Model<f32>,
    adam: &mut AdamState<f32>,
    phonetic_batch: &[&LoadedUtterance],
    disc_batch: &[&LoadedUtterance],
    cfg: &TrainConfig,
    lr: f64,
) -> Result<Option<(MtlLoss, f64)>> {
    let phonetic = feasible(phonetic_batch);
    let disc = feasible(disc_batch);
    if phonetic.is_empty() && disc.is_empty() {
        log::warn!("entire batch infeasible, step skipped");
        return Ok(None);
    }

    let w_p = if phonetic.is_empty() {
        0.0
    } else {
        cfg.lambda_phonetic / phonetic.len() as f64
    };
    let w_d = if disc.is_empty() {
        0.0
    } else {
        cfg.lambda_discriminative / disc.len() as f64
    };

    let n_p = phonetic.len();
    let mut items: Vec<BatchItem<'_, f32>> = Vec::with_capacity(n_p + disc.len());
    for (u, seq) in &phonetic {
        items.push(BatchItem {
            input: u.input.view(),
            target: seq.clone(),
            task: Task::Phonetic,
            weight: w_p as f32,
        });
    }
    for (u, seq) in &disc {
        items.push(BatchItem {
            input: u.input.view(),
            target: seq.clone(),
            task: Task::Discriminative,
            weight: w_d as f32,
        });
    }

    let (losses, grads) = batch_gradients(model, &items, cfg.workers)?;
    let c_p = mean_in_order(&losses[..n_p]);
    let c_d = mean_in_order(&losses[n_p..]);
    let c_mtl = cfg.lambda_phonetic * c_p + cfg.lambda_discriminative * c_d;
    if !c_mtl.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite training loss (c_p {c_p}, c_d {c_d}); aborting"
        )));
    }

    let mut flat = grads.to_flat();
    let pre_norm = clip_gradient(&mut flat, cfg.grad_clip_norm);
    if !pre_norm.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite gradient norm {pre_norm}; aborting"
        )));
    }
    let mut params = model.flatten_params();
    adam.step(&mut params, &flat, lr)?;
    model.load_flat_params(&params)?;

    Ok(Some((MtlLoss { c_p, c_d, c_mtl }, pre_norm)))
}

/// Endless reshuffled pass over `0..n`; draws can span epoch boundaries.
struct Cycler {
    indices: Vec<usize>,
    pos: usize,
    rng: StdRng,
}

impl Cycler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        Self { indices, pos: 0, rng }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.indices.len() {
                self.indices.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.indices[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn halve_on_plateau(lr: &mut f64, best: &mut f64, stale_epochs: &mut usize, epoch_mean: f64) {
    // Plateau: two consecutive epochs without a >1% improvement on the best.
    if epoch_mean < *best * 0.99 {
        *best = epoch_mean;
        *stale_epochs = 0;
    } else {
        *stale_epochs += 1;
        if *stale_epochs >= 2 && *lr > 1e-5 {
            *lr = (*lr / 2.0).max(1e-5);
            *stale_epochs = 0;
            log::info!("loss plateaued, learning rate halved to {lr}");
        }
    }
}

/// Run the full training loop for `mode`. `phonetic` and `disc` are the two
/// datasets; modes that do not use one of them accept it empty. With an
/// output directory, writes `epoch_NNN.wsck` after every epoch, a `final.wsck`
/// copy of the last one, and `loss_log.csv` with one row per applied step.
pub fn train(
    model: &mut Model<f32>,
    phonetic: &[LoadedUtterance],
    disc: &[LoadedUtterance],
    mode: TrainMode,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let needs_phonetic = matches!(mode, TrainMode::Baseline | TrainMode::Mtl);
    let needs_disc = matches!(mode, TrainMode::Scratch | TrainMode::Finetune | TrainMode::Mtl);
    if needs_phonetic && phonetic.is_empty() {
        return Err(Error::Config(format!(
            "{mode:?} training needs a non-empty phonetic dataset"
        )));
    }
    if needs_disc && disc.is_empty() {
        return Err(Error::Config(format!(
            "{mode:?} training needs a non-empty keyword dataset"
        )));
    }
    if needs_phonetic {
        model.head(Task::Phonetic)?;
    }
    if needs_disc {
        model.head(Task::Discriminative)?;
    }

    let b_global = cfg.workers * cfg.batch_size_per_worker;
    // Split of the global batch between the two tasks, per step.
    let (n_p, n_d) = match mode {
        TrainMode::Baseline => (b_global, 0),
        TrainMode::Scratch | TrainMode::Finetune => (0, b_global),
        TrainMode::Mtl => {
            let d = ((b_global as f64) * cfg.mtl_mix).round() as usize;
            let d = d.min(b_global.saturating_sub(1));
            (b_global - d, d)
        }
    };

    let driver: &[LoadedUtterance] = if needs_phonetic { phonetic } else { disc };
    let driver_batch = if needs_phonetic { n_p.max(1) } else { n_d };
    let driver_lengths: Vec<usize> = driver.iter().map(|u| u.num_frames()).collect();

    let mut batch_rng = StdRng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut disc_cycle = if mode == TrainMode::Mtl && n_d > 0 {
        Some(Cycler::new(disc.len(), cfg.seed ^ 0x6a09_e667_f3bc_c909))
    } else {
        None
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    let mut adam = AdamState::new(model.num_params(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut lr = cfg.learning_rate;
    let mut best_mean = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut log_rows: Vec<StepRecord> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let batches = epoch_driver_batches(&driver_lengths, driver_batch, cfg, &mut batch_rng)?;
        let mut epoch_sum = 0.0;
        let mut epoch_steps = 0usize;
        for batch in &batches {
            let mut phonetic_refs: Vec<&LoadedUtterance> = Vec::new();
            let mut disc_refs: Vec<&LoadedUtterance> = Vec::new();
            match mode {
                TrainMode::Baseline => {
                    phonetic_refs.extend(batch.iter().map(|&i| &phonetic[i]));
                }
                TrainMode::Scratch | TrainMode::Finetune => {
                    disc_refs.extend(batch.iter().map(|&i| &disc[i]));
                }
                TrainMode::Mtl => {
                    phonetic_refs.extend(batch.iter().map(|&i| &phonetic[i]));
                    if let Some(cycle) = disc_cycle.as_mut() {
                        disc_refs.extend(cycle.take(n_d).into_iter().map(|i| &disc[i]));
                    }
                }
            }
            match mtl_step(model, &mut adam, &phonetic_refs, &disc_refs, cfg, lr)? {
                Some((loss, grad_norm)) => {
                    step += 1;
                    epoch_sum += loss.c_mtl;
                    epoch_steps += 1;
                    log_rows.push(StepRecord {
                        step,
                        c_p: loss.c_p,
                        c_d: loss.c_d,
                        c_mtl: loss.c_mtl,
                        grad_norm,
                    });
                }
                None => continue,
            }
        }

        if let Some(dir) = out_dir {
            let path = dir.join(format!("epoch_{:03}.wsck", epoch + 1));
            checkpoint::save(model, &path)?;
            checkpoints.push(path);
        }
        if cfg.halve_lr_on_plateau && epoch_steps > 0 {
            halve_on_plateau(&mut lr, &mut best_mean, &mut stale_epochs, epoch_sum / epoch_steps as f64);
        }
    }

    let final_checkpoint = if let Some(dir) = out_dir {
        let path = dir.join("final.wsck");
        checkpoint::save(model, &path)?;
        write_loss_log(&dir.join("loss_log.csv"), &log_rows)?;
        Some(path)
    } else {
        None
    };

    Ok(TrainOutcome {
        log: log_rows,
        checkpoints,
        final_checkpoint,
    })
}

fn epoch_driver_batches(
    lengths: &[usize],
    batch_size: usize,
    cfg: &TrainConfig,
    rng: &mut StdRng,
) -> Result<Vec<Vec<usize>>> {
    crate::data::epoch_batches(lengths, batch_size, cfg.bucketing, rng)
}

/// Step-level loss log. Plain `Display` formatting round-trips f64 exactly,
/// so identical runs produce byte-identical files.
pub fn write_loss_log(path: &Path, log: &[StepRecord]) -> Result<()> {
    let mut out = String::from("step,c_p,c_d,c_mtl,grad_norm\n");
    for row in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.step, row.c_p, row.c_d, row.c_mtl, row.grad_norm
        ));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BinaryLabel, Target};
    use crate::nnet::{Alphabet, ModelConfig};
    use ndarray::Array2;
    use rand::RngExt;

    fn toy_model(input_dim: usize, hidden: usize, phones: usize, seed: u64) -> Model<f32> {
        let config = ModelConfig {
            input_dim,
            hidden_dim: hidden,
            num_layers: 1,
            phonetic: Some(Alphabet::phones(phones).unwrap()),
            discriminative: Some(Alphabet::keyword()),
        };
        Model::new(config, seed).unwrap()
    }

    /// Noisy per-phone template utterances, entirely in memory.
    fn toy_corpus(n: usize, phones: usize, dim: usize, seed: u64) -> Vec<LoadedUtterance> {
        let mut rng = StdRng::seed_from_u64(seed);
        let templates =
            Array2::from_shape_fn((phones + 1, dim), |_| rng.random_range(-1.0f32..1.0));
        (0..n)
            .map(|i| {
                let len = rng.random_range(3..=5);
                let seq: Vec<usize> = (0..len).map(|_| rng.random_range(1..=phones)).collect();
                let mut rows: Vec<f32> = Vec::new();
                for &p in &seq {
                    for _ in 0..rng.random_range(3..=5) {
                        for d in 0..dim {
                            rows.push(templates[(p, d)] + 0.1 * rng.random_range(-1.0f32..1.0));
                        }
                    }
                }
                let t = rows.len() / dim;
                LoadedUtterance {
                    id: format!("u{i:04}"),
                    input: Array2::from_shape_vec((t, dim), rows).unwrap(),
                    frames_per_second: 100.0 / 3.0,
                    target: Target::Phones(LabelSequence::new(seq)),
                }
            })
            .collect()
    }

    fn keyword_corpus(n: usize, dim: usize, seed: u64) -> Vec<LoadedUtterance> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let t = rng.random_range(8..=14);
                let input = Array2::from_shape_fn((t, dim), |_| rng.random_range(-1.0f32..1.0));
                let label = if i % 2 == 0 {
                    BinaryLabel::Positive
                } else {
                    BinaryLabel::Negative
                };
                LoadedUtterance {
                    id: format!("k{i:04}"),
                    input,
                    frames_per_second: 100.0 / 3.0,
                    target: Target::Keyword(label),
                }
            })
            .collect()
    }

    #[test]
    fn combined_loss_is_the_plain_sum_of_task_means() {
        let mut model = toy_model(6, 8, 4, 3);
        let mut adam = AdamState::new(model.num_params(), 0.9, 0.999, 1e-8);
        let cfg = TrainConfig::default();
        let phonetic = toy_corpus(3, 4, 6, 11);
        let disc = keyword_corpus(3, 6, 12);
        let p_refs: Vec<&LoadedUtterance> = phonetic.iter().collect();
        let d_refs: Vec<&LoadedUtterance> = disc.iter().collect();
        let (loss, _) = mtl_step(&mut model, &mut adam, &p_refs, &d_refs, &cfg, 0.001)
            .unwrap()
            .unwrap();
        assert!(loss.c_p > 0.0 && loss.c_d > 0.0);
        // Unit task weights: exact sum, not approximately.
        assert_eq!(loss.c_mtl, loss.c_p + loss.c_d);
    }

    #[test]
    fn one_and_two_worker_updates_agree() {
        let phonetic = toy_corpus(8, 4, 6, 21);
        let p_refs: Vec<&LoadedUtterance> = phonetic.iter().collect();

        let mut results = Vec::new();
        for workers in [1usize, 2] {
            let mut model = toy_model(6, 8, 4, 7);
            let mut adam = AdamState::new(model.num_params(), 0.9, 0.999, 1e-8);
            let cfg = TrainConfig {
                workers,
                batch_size_per_worker: 8 / workers,
                ..TrainConfig::default()
            };
            mtl_step(&mut model, &mut adam, &p_refs, &[], &cfg, 0.001)
                .unwrap()
                .unwrap();
            results.push(model.flatten_params());
        }
        let (a, b) = (&results[0], &results[1]);
        for i in 0..a.len() {
            let rel = (a[i] - b[i]).abs() as f64 / a[i].abs().max(1e-3) as f64;
            assert!(rel <= 1e-6, "param {i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn trunk_gradients_add_across_tasks() {
        // Same property as the single-layer check, but through the full
        // batch machinery in f64: a joint phonetic+keyword batch produces
        // exactly the sum of the two per-task gradient passes.
        let config = ModelConfig {
            input_dim: 5,
            hidden_dim: 6,
            num_layers: 2,
            phonetic: Some(Alphabet::phones(3).unwrap()),
            discriminative: Some(Alphabet::keyword()),
        };
        let model: Model<f64> = Model::new(config, 2).unwrap();
        let mut rng = StdRng::seed_from_u64(40);
        let input_a = Array2::from_shape_fn((9, 5), |_| rng.random_range(-1.0..1.0));
        let input_b = Array2::from_shape_fn((7, 5), |_| rng.random_range(-1.0..1.0));
        fn item(input: &Array2<f64>, task: Task, target: LabelSequence) -> BatchItem<'_, f64> {
            BatchItem {
                input: input.view(),
                target,
                task,
                weight: 1.0,
            }
        }

        let joint = vec![
            item(&input_a, Task::Phonetic, LabelSequence::new(vec![1, 2])),
            item(&input_b, Task::Discriminative, LabelSequence::new(vec![1])),
        ];
        let (_, g_joint) = batch_gradients(&model, &joint, 1).unwrap();

        let only_p = vec![item(&input_a, Task::Phonetic, LabelSequence::new(vec![1, 2]))];
        let only_d = vec![item(&input_b, Task::Discriminative, LabelSequence::new(vec![1]))];
        let (_, mut g_sum) = batch_gradients(&model, &only_p, 1).unwrap();
        let (_, g_d) = batch_gradients(&model, &only_d, 1).unwrap();
        g_sum.add_assign(&g_d);

        let a = g_joint.to_flat();
        let b = g_sum.to_flat();
        for i in 0..a.len() {
            assert!(
                (a[i] - b[i]).abs() <= 1e-10 * a[i].abs().max(1.0),
                "component {i}: {} vs {}",
                a[i],
                b[i]
            );
        }
    }

    #[test]
    fn fully_infeasible_batch_skips_the_update() {
        let mut model = toy_model(4, 6, 4, 9);
        let before = model.flatten_params();
        let mut adam = AdamState::new(model.num_params(), 0.9, 0.999, 1e-8);
        let cfg = TrainConfig::default();
        // 2 frames cannot carry a 3-symbol transcript.
        let short = LoadedUtterance {
            id: "short".into(),
            input: Array2::zeros((2, 4)),
            frames_per_second: 100.0 / 3.0,
            target: Target::Phones(LabelSequence::new(vec![1, 2, 3])),
        };
        let out = mtl_step(&mut model, &mut adam, &[&short], &[], &cfg, 0.001).unwrap();
        assert!(out.is_none());
        assert_eq!(model.flatten_params(), before);
        assert_eq!(adam.steps_taken(), 0);
    }

    #[test]
    fn nan_features_abort_with_a_numeric_error() {
        let mut model = toy_model(4, 6, 4, 9);
        let mut adam = AdamState::new(model.num_params(), 0.9, 0.999, 1e-8);
        let cfg = TrainConfig::default();
        let mut input = Array2::zeros((6, 4));
        input[(3, 2)] = f32::NAN;
        let poisoned = LoadedUtterance {
            id: "poisoned".into(),
            input,
            frames_per_second: 100.0 / 3.0,
            target: Target::Phones(LabelSequence::new(vec![1])),
        };
        let err = mtl_step(&mut model, &mut adam, &[&poisoned], &[], &cfg, 0.001).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
    }

    #[test]
    fn mtl_mode_without_keyword_data_is_a_config_error() {
        let mut model = toy_model(6, 8, 4, 3);
        let phonetic = toy_corpus(4, 4, 6, 11);
        let err = train(
            &mut model,
            &phonetic,
            &[],
            TrainMode::Mtl,
            &TrainConfig::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn loss_falls_below_half_of_the_first_epoch() {
        let phonetic = toy_corpus(200, 4, 8, 31);
        let mut model = toy_model(8, 16, 4, 5);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 30,
            batch_size_per_worker: 16,
            ..TrainConfig::default()
        };
        let outcome = train(&mut model, &phonetic, &[], TrainMode::Baseline, &cfg, None).unwrap();
        let steps_per_epoch = outcome.log.len() / 30;
        let first: f64 = outcome.log[..steps_per_epoch]
            .iter()
            .map(|r| r.c_mtl)
            .sum::<f64>()
            / steps_per_epoch as f64;
        let last: f64 = outcome.log[outcome.log.len() - steps_per_epoch..]
            .iter()
            .map(|r| r.c_mtl)
            .sum::<f64>()
            / steps_per_epoch as f64;
        assert!(
            last < 0.5 * first,
            "first epoch mean {first}, last epoch mean {last}"
        );
    }

    #[test]
    fn identical_seeds_give_bit_identical_loss_logs() {
        let phonetic = toy_corpus(24, 4, 6, 51);
        let run = || {
            let mut model = toy_model(6, 8, 4, 13);
            let cfg = TrainConfig {
                epochs: 2,
                batch_size_per_worker: 8,
                seed: 99,
                ..TrainConfig::default()
            };
            train(&mut model, &phonetic, &[], TrainMode::Baseline, &cfg, None)
                .unwrap()
                .log
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn training_writes_checkpoints_and_a_loss_log() {
        let dir = tempfile::tempdir().unwrap();
        let phonetic = toy_corpus(12, 4, 6, 61);
        let mut model = toy_model(6, 8, 4, 17);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size_per_worker: 6,
            ..TrainConfig::default()
        };
        let outcome = train(
            &mut model,
            &phonetic,
            &[],
            TrainMode::Baseline,
            &cfg,
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(outcome.checkpoints.len(), 3);
        for path in &outcome.checkpoints {
            assert!(path.exists());
        }
        let final_path = outcome.final_checkpoint.unwrap();
        let reloaded = checkpoint::load(&final_path).unwrap();
        assert_eq!(reloaded.flatten_params(), model.flatten_params());
        let log_text = fs::read_to_string(dir.path().join("loss_log.csv")).unwrap();
        assert!(log_text.starts_with("step,c_p,c_d,c_mtl,grad_norm\n"));
        assert_eq!(log_text.lines().count(), outcome.log.len() + 1);
    }

    #[test]
    fn cycler_covers_the_set_before_repeating() {
        let mut cycle = Cycler::new(5, 7);
        let first: Vec<usize> = cycle.take(5);
        let mut sorted = first.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        // A draw spanning the epoch boundary still yields valid indices.
        let span = cycle.take(7);
        assert!(span.iter().all(|&i| i < 5));
    }

    #[test]
    fn plateau_halving_waits_for_two_stale_epochs() {
        let mut lr = 0.01;
        let mut best = f64::INFINITY;
        let mut stale = 0;
        halve_on_plateau(&mut lr, &mut best, &mut stale, 10.0);
        assert_eq!(lr, 0.01);
        halve_on_plateau(&mut lr, &mut best, &mut stale, 10.0);
        assert_eq!(lr, 0.01);
        halve_on_plateau(&mut lr, &mut best, &mut stale, 10.0);
        assert_eq!(lr, 0.005);
        // Improvement resets the counter.
        halve_on_plateau(&mut lr, &mut best, &mut stale, 5.0);
        assert_eq!(lr, 0.005);
    }
}
