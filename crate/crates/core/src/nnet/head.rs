//! Output heads: per-frame affine projection followed by a log-softmax.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::rngs::StdRng;
use rand::RngExt;

use crate::scalar::Scalar;

/// Affine projection from trunk features to per-symbol scores.
#[derive(Debug, Clone)]
pub struct Head<F: Scalar> {
    /// `(V, Din)` where `V` is the alphabet size.
    pub w: Array2<F>,
    /// `(V,)`.
    pub b: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct HeadGrads<F: Scalar> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> Head<F> {
    pub fn zeros(input_dim: usize, alphabet_size: usize) -> Self {
        Self {
            w: Array2::zeros((alphabet_size, input_dim)),
            b: Array1::zeros(alphabet_size),
        }
    }

    pub fn init(input_dim: usize, alphabet_size: usize, rng: &mut StdRng) -> Self {
        let mut head = Self::zeros(input_dim, alphabet_size);
        let bound = 1.0 / (input_dim as f64).sqrt();
        for v in head.w.iter_mut() {
            *v = F::from_f64(rng.random_range(-bound..bound));
        }
        head
    }

    pub fn input_dim(&self) -> usize {
        self.w.dim().1
    }

    pub fn alphabet_size(&self) -> usize {
        self.w.dim().0
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// `(T, Din) -> (T, V)` raw scores.
    pub fn logits(&self, hidden: ArrayView2<F>) -> Array2<F> {
        let mut out = hidden.dot(&self.w.t());
        for mut row in out.rows_mut() {
            row += &self.b;
        }
        out
    }

    /// Gradients of a scalar loss through the affine map. Returns parameter
    /// gradients and the gradient w.r.t. the hidden input.
    pub fn backward(
        &self,
        hidden: ArrayView2<F>,
        d_logits: ArrayView2<F>,
    ) -> (HeadGrads<F>, Array2<F>) {
        let grads = HeadGrads {
            w: d_logits.t().dot(&hidden),
            b: d_logits.sum_axis(Axis(0)),
        };
        (grads, d_logits.dot(&self.w))
    }
}

impl<F: Scalar> HeadGrads<F> {
    pub fn zeros(input_dim: usize, alphabet_size: usize) -> Self {
        Self {
            w: Array2::zeros((alphabet_size, input_dim)),
            b: Array1::zeros(alphabet_size),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.w += &other.w;
        self.b += &other.b;
    }
}

/// Row-wise log-softmax with max subtraction for stability.
pub fn log_softmax<F: Scalar>(logits: ArrayView2<F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter() {
            sum += (*v - max).exp();
        }
        let log_z = max + sum.ln();
        for v in row.iter_mut() {
            *v -= log_z;
        }
    }
    out
}
