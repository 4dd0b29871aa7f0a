//! Python bindings for the rescoring toolkit. Matrices cross the boundary
//! as flat row-major float lists plus a `(rows, cols)` shape, which keeps
//! the surface free of binary-format dependencies; `numpy.asarray(...)
//! .reshape(shape)` reassembles them on the Python side.

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wakescore::ctc::{self, LabelSequence};
use wakescore::error::Error;
use wakescore::eval;
use wakescore::frontend::{self, io as feat_io, AudioClip, FrontendConfig};
use wakescore::nnet::{checkpoint, Alphabet, Model, ModelConfig, Task};
use wakescore::scorer;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::EmptyInput(_) | Error::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix_from_flat(flat: Vec<f64>, shape: (usize, usize)) -> PyResult<Array2<f64>> {
    Array2::from_shape_vec(shape, flat)
        .map_err(|e| PyValueError::new_err(format!("bad shape: {e}")))
}

fn matrix_from_flat_f32(flat: Vec<f32>, shape: (usize, usize)) -> PyResult<Array2<f32>> {
    Array2::from_shape_vec(shape, flat)
        .map_err(|e| PyValueError::new_err(format!("bad shape: {e}")))
}

fn flatten(m: &Array2<f32>) -> (Vec<f32>, (usize, usize)) {
    (m.iter().copied().collect(), m.dim())
}

fn task_from_str(name: &str) -> PyResult<Task> {
    match name {
        "phonetic" => Ok(Task::Phonetic),
        "discriminative" | "disc" => Ok(Task::Discriminative),
        other => Err(PyValueError::new_err(format!(
            "task must be 'phonetic' or 'discriminative', got {other:?}"
        ))),
    }
}

/// CTC loss of `target` under row-major `(frames, vocab)` log posteriors.
/// Returns `(loss, infeasible)`; infeasible targets yield `inf`.
#[pyfunction]
fn ctc_loss(
    log_probs: Vec<f64>,
    shape: (usize, usize),
    target: Vec<usize>,
    blank: usize,
) -> PyResult<(f64, bool)> {
    let m = matrix_from_flat(log_probs, shape)?;
    let res = ctc::ctc_loss(m.view(), &LabelSequence::new(target), blank).map_err(to_py_err)?;
    Ok((res.loss, res.infeasible))
}

/// CTC loss plus its gradient w.r.t. the logits behind the log posteriors,
/// as `(loss, flat_grad)` in the same row-major layout.
#[pyfunction]
fn ctc_grad(
    log_probs: Vec<f64>,
    shape: (usize, usize),
    target: Vec<usize>,
    blank: usize,
) -> PyResult<(f64, Vec<f64>)> {
    let m = matrix_from_flat(log_probs, shape)?;
    let res = ctc::ctc_grad(m.view(), &LabelSequence::new(target), blank).map_err(to_py_err)?;
    let grad = res.grad_logits.expect("gradient requested");
    Ok((res.loss, grad.iter().copied().collect()))
}

/// Cross entropy of all-blank supervision; identical to `ctc_loss` with an
/// empty target.
#[pyfunction]
fn blank_only_loss(log_probs: Vec<f64>, shape: (usize, usize), blank: usize) -> PyResult<f64> {
    let m = matrix_from_flat(log_probs, shape)?;
    ctc::blank_only_loss(m.view(), blank).map_err(to_py_err)
}

/// Minimum number of frames an alignment of `target` needs.
#[pyfunction]
fn min_frames(target: Vec<usize>) -> usize {
    LabelSequence::new(target).min_frames()
}

/// Mel filterbank features for mono samples: returns
/// `(flat_features, (frames, num_mels), frames_per_second)`.
#[pyfunction]
fn compute_features(
    samples: Vec<f32>,
    sample_rate: u32,
) -> PyResult<(Vec<f32>, (usize, usize), f32)> {
    let clip = AudioClip {
        samples,
        sample_rate,
    };
    let config = FrontendConfig {
        sample_rate,
        ..FrontendConfig::default()
    };
    let feats = frontend::compute_features(&clip, &config).map_err(to_py_err)?;
    let (flat, shape) = flatten(&feats.data);
    Ok((flat, shape, feats.frames_per_second))
}

/// Frame stacking and subsampling:
/// `(T, D) -> (ceil(T / subsample), (2 * context + 1) * D)`.
#[pyfunction]
fn stack_and_subsample(
    features: Vec<f32>,
    shape: (usize, usize),
    frames_per_second: f32,
    context: usize,
    subsample: usize,
) -> PyResult<(Vec<f32>, (usize, usize), f32)> {
    let data = matrix_from_flat_f32(features, shape)?;
    let seq = frontend::FeatureSequence {
        data,
        frames_per_second,
    };
    let input = frontend::stack_and_subsample(&seq, context, subsample).map_err(to_py_err)?;
    let (flat, out_shape) = flatten(&input.data);
    Ok((flat, out_shape, input.frames_per_second))
}

/// Write features to the binary feature-file format.
#[pyfunction]
fn write_features(
    path: String,
    features: Vec<f32>,
    shape: (usize, usize),
    frames_per_second: f32,
) -> PyResult<()> {
    let data = matrix_from_flat_f32(features, shape)?;
    feat_io::write_features(std::path::Path::new(&path), data.view(), frames_per_second)
        .map_err(to_py_err)
}

/// Read a binary feature file: `(flat, (frames, dim), frames_per_second)`.
#[pyfunction]
fn read_features(path: String) -> PyResult<(Vec<f32>, (usize, usize), f32)> {
    let (data, fps) = feat_io::read_features(std::path::Path::new(&path)).map_err(to_py_err)?;
    let (flat, shape) = flatten(&data);
    Ok((flat, shape, fps))
}

/// Threshold sweep over scored segments. Takes parallel lists of scores,
/// positive flags and durations in seconds; returns
/// `[(threshold, fr, fa_per_hour), ...]`.
#[pyfunction]
fn det_points(
    scores: Vec<f64>,
    positives: Vec<bool>,
    durations: Vec<f64>,
) -> PyResult<Vec<(f64, f64, f64)>> {
    if scores.len() != positives.len() || scores.len() != durations.len() {
        return Err(PyValueError::new_err(
            "scores, positives and durations must have equal lengths",
        ));
    }
    let segments: Vec<eval::Segment> = scores
        .iter()
        .zip(&positives)
        .zip(&durations)
        .enumerate()
        .map(|(i, ((&score, &positive), &duration_seconds))| eval::Segment {
            id: format!("seg{i}"),
            score,
            positive,
            duration_seconds,
        })
        .collect();
    let curve = eval::det_curve(&segments).map_err(to_py_err)?;
    Ok(curve
        .points
        .iter()
        .map(|p| (p.threshold, p.fr, p.fa_per_hour))
        .collect())
}

/// Smallest false-reject rate among sweep points with FA/h at or under the
/// target.
#[pyfunction]
fn fr_at_fa(
    scores: Vec<f64>,
    positives: Vec<bool>,
    durations: Vec<f64>,
    fa_target: f64,
) -> PyResult<f64> {
    let points = det_points(scores, positives, durations)?;
    Ok(points
        .iter()
        .filter(|p| p.2 <= fa_target)
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min))
}

/// A trained model exposed to Python: forward passes, keyword scoring and
/// checkpoint round trips.
#[pyclass(name = "Model")]
struct PyModel {
    inner: Model<f32>,
}

#[pymethods]
impl PyModel {
    /// Fresh model with seeded initialization. `num_phones = 0` omits the
    /// phonetic head; `keyword_head = False` omits the keyword head.
    #[new]
    fn new(
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        num_phones: usize,
        keyword_head: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let phonetic = if num_phones > 0 {
            Some(Alphabet::phones(num_phones).map_err(to_py_err)?)
        } else {
            None
        };
        let config = ModelConfig {
            input_dim,
            hidden_dim,
            num_layers,
            phonetic,
            discriminative: keyword_head.then(Alphabet::keyword),
        };
        Ok(Self {
            inner: Model::new(config, seed).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: String) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load(std::path::Path::new(&path)).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: String) -> PyResult<()> {
        checkpoint::save(&self.inner, std::path::Path::new(&path)).map_err(to_py_err)
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn input_dim(&self) -> usize {
        self.inner.config.input_dim
    }

    /// Log posteriors of one head over row-major `(frames, input_dim)`
    /// features: `(flat, (frames, alphabet_size))`.
    fn log_posteriors(
        &self,
        input: Vec<f32>,
        shape: (usize, usize),
        task: &str,
    ) -> PyResult<(Vec<f32>, (usize, usize))> {
        let data = matrix_from_flat_f32(input, shape)?;
        let gram = self
            .inner
            .log_posteriors(data.view(), task_from_str(task)?)
            .map_err(to_py_err)?;
        Ok(flatten(&gram.log_probs))
    }

    /// Score a phone sequence with the phonetic head:
    /// `(log_prob, normalized, infeasible)`.
    fn score_keyword(
        &self,
        input: Vec<f32>,
        shape: (usize, usize),
        keyword: Vec<usize>,
    ) -> PyResult<(f64, f64, bool)> {
        let data = matrix_from_flat_f32(input, shape)?;
        let gram = self
            .inner
            .log_posteriors(data.view(), Task::Phonetic)
            .map_err(to_py_err)?;
        let s = scorer::score_keyword(&gram, &LabelSequence::new(keyword)).map_err(to_py_err)?;
        Ok((s.log_prob, s.normalized, s.infeasible))
    }

    /// Score keyword presence with the keyword head:
    /// `(log_prob, normalized, infeasible)`.
    fn score_trigger(
        &self,
        input: Vec<f32>,
        shape: (usize, usize),
    ) -> PyResult<(f64, f64, bool)> {
        let data = matrix_from_flat_f32(input, shape)?;
        let gram = self
            .inner
            .log_posteriors(data.view(), Task::Discriminative)
            .map_err(to_py_err)?;
        let s = scorer::score_trigger(&gram).map_err(to_py_err)?;
        Ok((s.log_prob, s.normalized, s.infeasible))
    }
}

#[pymodule]
fn wakescore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ctc_loss, m)?)?;
    m.add_function(wrap_pyfunction!(ctc_grad, m)?)?;
    m.add_function(wrap_pyfunction!(blank_only_loss, m)?)?;
    m.add_function(wrap_pyfunction!(min_frames, m)?)?;
    m.add_function(wrap_pyfunction!(compute_features, m)?)?;
    m.add_function(wrap_pyfunction!(stack_and_subsample, m)?)?;
    m.add_function(wrap_pyfunction!(write_features, m)?)?;
    m.add_function(wrap_pyfunction!(read_features, m)?)?;
    m.add_function(wrap_pyfunction!(det_points, m)?)?;
    m.add_function(wrap_pyfunction!(fr_at_fa, m)?)?;
    m.add_class::<PyModel>()?;
    Ok(())
}
