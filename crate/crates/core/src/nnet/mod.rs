//! Acoustic model: a stack of bidirectional LSTM layers (the shared trunk)
//! with one or two log-softmax output heads hanging off the final layer.

pub mod checkpoint;
pub mod head;
pub mod lstm;

use ndarray::{Array2, ArrayView2};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use head::{log_softmax, Head, HeadGrads};
pub use lstm::{BiGrads, BiLstm, BiTape};

/// Output symbol table. Index 0 is always the blank symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    /// `symbols[0]` names the blank. Requires at least one real symbol and
    /// no duplicates.
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::Config(format!(
                "alphabet needs blank plus at least one symbol, got {}",
                symbols.len()
            )));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::Config(format!("duplicate alphabet symbol {s:?}")));
            }
        }
        Ok(Self { symbols })
    }

    /// Phone-like alphabet: blank plus `n` symbols `p00..`.
    pub fn phones(n: usize) -> Result<Self> {
        let mut symbols = vec!["<eps>".to_string()];
        symbols.extend((0..n).map(|i| format!("p{i:02}")));
        Self::new(symbols)
    }

    /// Keyword-presence alphabet: blank plus the single trigger symbol.
    pub fn keyword() -> Self {
        Self {
            symbols: vec!["<eps>".to_string(), "<trigger>".to_string()],
        }
    }

    pub fn blank(&self) -> usize {
        0
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Index of the trigger symbol in [`Alphabet::keyword`].
pub const TRIGGER: usize = 1;

/// Per-frame log posteriors over an alphabet. Rows are frames.
#[derive(Debug, Clone)]
pub struct PosteriorGram<F: Scalar> {
    pub log_probs: Array2<F>,
    pub alphabet: Alphabet,
}

impl<F: Scalar> PosteriorGram<F> {
    pub fn new(log_probs: Array2<F>, alphabet: Alphabet) -> Result<Self> {
        if log_probs.dim().1 != alphabet.size() {
            return Err(Error::Shape(format!(
                "posterior width {} != alphabet size {}",
                log_probs.dim().1,
                alphabet.size()
            )));
        }
        Ok(Self { log_probs, alphabet })
    }

    pub fn num_frames(&self) -> usize {
        self.log_probs.dim().0
    }

    /// Largest row-normalization defect, `|1 - sum_k exp(log p)|` over rows.
    pub fn normalization_defect(&self) -> f64 {
        self.log_probs
            .rows()
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().map(|v| v.as_f64().exp()).sum();
                (1.0 - total).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Which head to read an utterance through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Phonetic,
    Discriminative,
}

/// Static shape of a model. Serialized verbatim into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Symbol table for the phonetic head, if present.
    pub phonetic: Option<Alphabet>,
    /// Symbol table for the keyword head, if present.
    pub discriminative: Option<Alphabet>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(Error::Config(format!(
                "model dims must be positive: input {} hidden {} layers {}",
                self.input_dim, self.hidden_dim, self.num_layers
            )));
        }
        if self.phonetic.is_none() && self.discriminative.is_none() {
            return Err(Error::Config("model needs at least one head".into()));
        }
        Ok(())
    }
}

/// Per-layer forward records for the whole trunk.
pub struct TrunkTape<F: Scalar> {
    layers: Vec<LayerTape<F>>,
}

struct LayerTape<F: Scalar> {
    input: Array2<F>,
    bi: BiTape<F>,
}

/// Gradient accumulator shaped like a [`Model`].
#[derive(Debug, Clone)]
pub struct ModelGrads<F: Scalar> {
    pub trunk: Vec<BiGrads<F>>,
    pub phonetic: Option<HeadGrads<F>>,
    pub discriminative: Option<HeadGrads<F>>,
}

#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    pub config: ModelConfig,
    pub trunk: Vec<BiLstm<F>>,
    pub phonetic: Option<Head<F>>,
    pub discriminative: Option<Head<F>>,
}

impl<F: Scalar> Model<F> {
    /// Seeded initialization. Draw order is fixed (layers in order, each
    /// forward direction before backward, then phonetic head, then keyword
    /// head) so a seed pins every parameter.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut trunk = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let d = if l == 0 { config.input_dim } else { 2 * config.hidden_dim };
            trunk.push(BiLstm::init(d, config.hidden_dim, &mut rng));
        }
        let trunk_out = 2 * config.hidden_dim;
        let phonetic = config
            .phonetic
            .as_ref()
            .map(|a| Head::init(trunk_out, a.size(), &mut rng));
        let discriminative = config
            .discriminative
            .as_ref()
            .map(|a| Head::init(trunk_out, a.size(), &mut rng));
        Ok(Self { config, trunk, phonetic, discriminative })
    }

    /// All-zero parameters; used as the target of checkpoint loads.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut trunk = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let d = if l == 0 { config.input_dim } else { 2 * config.hidden_dim };
            trunk.push(BiLstm {
                fwd: lstm::LstmDir::zeros(d, config.hidden_dim),
                bwd: lstm::LstmDir::zeros(d, config.hidden_dim),
            });
        }
        let trunk_out = 2 * config.hidden_dim;
        let phonetic = config
            .phonetic
            .as_ref()
            .map(|a| Head::zeros(trunk_out, a.size()));
        let discriminative = config
            .discriminative
            .as_ref()
            .map(|a| Head::zeros(trunk_out, a.size()));
        Ok(Self { config, trunk, phonetic, discriminative })
    }

    pub fn head(&self, task: Task) -> Result<&Head<F>> {
        let (head, name) = match task {
            Task::Phonetic => (&self.phonetic, "phonetic"),
            Task::Discriminative => (&self.discriminative, "discriminative"),
        };
        head.as_ref()
            .ok_or_else(|| Error::Config(format!("model has no {name} head")))
    }

    pub fn alphabet(&self, task: Task) -> Result<&Alphabet> {
        let (alpha, name) = match task {
            Task::Phonetic => (&self.config.phonetic, "phonetic"),
            Task::Discriminative => (&self.config.discriminative, "discriminative"),
        };
        alpha
            .as_ref()
            .ok_or_else(|| Error::Config(format!("model has no {name} head")))
    }

    /// Run the trunk over one utterance. `(T, input_dim) -> (T, 2H)` plus
    /// the tape needed for `backward_trunk`.
    pub fn forward_trunk(&self, input: ArrayView2<F>) -> Result<(Array2<F>, TrunkTape<F>)> {
        let (t_len, d) = input.dim();
        if t_len == 0 {
            return Err(Error::EmptyInput("trunk input has zero frames".into()));
        }
        if d != self.config.input_dim {
            return Err(Error::Shape(format!(
                "trunk input width {} != configured {}",
                d, self.config.input_dim
            )));
        }
        let mut layers = Vec::with_capacity(self.trunk.len());
        let mut cur = input.to_owned();
        for layer in &self.trunk {
            let (out, bi) = layer.forward(cur.view());
            layers.push(LayerTape { input: cur, bi });
            cur = out;
        }
        Ok((cur, TrunkTape { layers }))
    }

    /// Backpropagate a gradient w.r.t. the trunk output, accumulating into
    /// `grads`. Linear in `d_out`, so task gradients can be summed either
    /// before or after this call.
    pub fn backward_trunk(&self, tape: &TrunkTape<F>, d_out: Array2<F>, grads: &mut ModelGrads<F>) {
        let mut d_cur = d_out;
        for (l, layer) in self.trunk.iter().enumerate().rev() {
            let lt = &tape.layers[l];
            let (g, dx) = layer.backward(lt.input.view(), &lt.bi, d_cur.view());
            grads.trunk[l].add_assign(&g);
            d_cur = dx;
        }
    }

    /// Full read path for scoring: trunk, head, log-softmax.
    pub fn log_posteriors(&self, input: ArrayView2<F>, task: Task) -> Result<PosteriorGram<F>> {
        let (hidden, _) = self.forward_trunk(input)?;
        let head = self.head(task)?;
        let log_probs = log_softmax(head.logits(hidden.view()).view());
        PosteriorGram::new(log_probs, self.alphabet(task)?.clone())
    }

    pub fn num_params(&self) -> usize {
        let mut n: usize = self.trunk.iter().map(BiLstm::num_params).sum();
        if let Some(h) = &self.phonetic {
            n += h.num_params();
        }
        if let Some(h) = &self.discriminative {
            n += h.num_params();
        }
        n
    }

    /// Copy every parameter into one vector. Order: per layer forward
    /// `w, u, b` then backward `w, u, b`; phonetic head `w, b`; keyword
    /// head `w, b`. Matrices are row-major.
    pub fn flatten_params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.trunk {
            for dir in [&layer.fwd, &layer.bwd] {
                out.extend(dir.w.iter().cloned());
                out.extend(dir.u.iter().cloned());
                out.extend(dir.b.iter().cloned());
            }
        }
        for head in [&self.phonetic, &self.discriminative].into_iter().flatten() {
            out.extend(head.w.iter().cloned());
            out.extend(head.b.iter().cloned());
        }
        out
    }

    /// Inverse of `flatten_params`.
    pub fn load_flat_params(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} values, model needs {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut pos = 0;
        let mut take = |dst: &mut [F], src: &[F]| {
            dst.copy_from_slice(&src[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for layer in &mut self.trunk {
            for dir in [&mut layer.fwd, &mut layer.bwd] {
                take(dir.w.as_slice_mut().expect("contiguous"), flat);
                take(dir.u.as_slice_mut().expect("contiguous"), flat);
                take(dir.b.as_slice_mut().expect("contiguous"), flat);
            }
        }
        for head in [&mut self.phonetic, &mut self.discriminative]
            .into_iter()
            .flatten()
        {
            take(head.w.as_slice_mut().expect("contiguous"), flat);
            take(head.b.as_slice_mut().expect("contiguous"), flat);
        }
        debug_assert_eq!(pos, flat.len());
        Ok(())
    }
}

impl<F: Scalar> ModelGrads<F> {
    pub fn zeros_like(model: &Model<F>) -> Self {
        Self {
            trunk: model
                .trunk
                .iter()
                .map(|l| BiGrads::zeros(l.input_dim(), l.hidden_dim()))
                .collect(),
            phonetic: model
                .phonetic
                .as_ref()
                .map(|h| HeadGrads::zeros(h.input_dim(), h.alphabet_size())),
            discriminative: model
                .discriminative
                .as_ref()
                .map(|h| HeadGrads::zeros(h.input_dim(), h.alphabet_size())),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.trunk.iter_mut().zip(&other.trunk) {
            a.add_assign(b);
        }
        if let (Some(a), Some(b)) = (self.phonetic.as_mut(), other.phonetic.as_ref()) {
            a.add_assign(b);
        }
        if let (Some(a), Some(b)) = (self.discriminative.as_mut(), other.discriminative.as_ref()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: F) {
        for g in &mut self.trunk {
            for dir in [&mut g.fwd, &mut g.bwd] {
                dir.w.mapv_inplace(|v| v * factor);
                dir.u.mapv_inplace(|v| v * factor);
                dir.b.mapv_inplace(|v| v * factor);
            }
        }
        for head in [&mut self.phonetic, &mut self.discriminative]
            .into_iter()
            .flatten()
        {
            head.w.mapv_inplace(|v| v * factor);
            head.b.mapv_inplace(|v| v * factor);
        }
    }

    /// Same ordering as [`Model::flatten_params`].
    pub fn to_flat(&self) -> Vec<F> {
        let mut out = Vec::new();
        for g in &self.trunk {
            for dir in [&g.fwd, &g.bwd] {
                out.extend(dir.w.iter().cloned());
                out.extend(dir.u.iter().cloned());
                out.extend(dir.b.iter().cloned());
            }
        }
        for head in [&self.phonetic, &self.discriminative].into_iter().flatten() {
            out.extend(head.w.iter().cloned());
            out.extend(head.b.iter().cloned());
        }
        out
    }
}
