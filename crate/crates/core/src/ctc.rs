//! CTC loss and gradients via the forward-backward algorithm over the
//! blank-interleaved state lattice, in log space throughout.
//!
//! The blank-only special case (`blank_only_loss`) is the degenerate lattice
//! with an empty target; it reduces to a plain cross-entropy on the blank row
//! and is required to agree with `ctc_loss` on the empty target exactly.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Target symbol sequence for CTC. Symbols are alphabet indices and must not
/// include the blank; the empty sequence is valid (used for negative segments).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    symbols: Vec<usize>,
}

impl LabelSequence {
    pub fn new(symbols: Vec<usize>) -> Self {
        Self { symbols }
    }

    pub fn empty() -> Self {
        Self { symbols: Vec::new() }
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Shortest frame count that can realize this target: one frame per label
    /// plus one separating blank between each pair of repeated labels.
    pub fn min_frames(&self) -> usize {
        let repeats = self
            .symbols
            .windows(2)
            .filter(|w| w[0] == w[1])
            .count();
        self.symbols.len() + repeats
    }
}

impl From<Vec<usize>> for LabelSequence {
    fn from(symbols: Vec<usize>) -> Self {
        Self::new(symbols)
    }
}

/// Outcome of a CTC evaluation.
#[derive(Debug, Clone)]
pub struct CtcResult<F: Scalar> {
    /// Negative log probability of the target (nats). `+inf` when infeasible.
    pub loss: F,
    /// True when no alignment of the target fits in the input length.
    pub infeasible: bool,
    /// Gradient of the loss w.r.t. the logits behind `log_probs`, when requested.
    pub grad_logits: Option<Array2<F>>,
}

#[inline]
fn log_add<F: Scalar>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn validate_inputs<F: Scalar>(
    log_probs: &ArrayView2<F>,
    target: &LabelSequence,
    blank: usize,
) -> Result<()> {
    let (t_len, vocab) = log_probs.dim();
    if t_len == 0 {
        return Err(Error::EmptyInput("ctc: zero-length input".into()));
    }
    if blank >= vocab {
        return Err(Error::Config(format!(
            "ctc: blank index {blank} out of range for alphabet size {vocab}"
        )));
    }
    for &s in target.symbols() {
        if s == blank {
            return Err(Error::Config(format!(
                "ctc: target contains the blank index {blank}"
            )));
        }
        if s >= vocab {
            return Err(Error::Config(format!(
                "ctc: target symbol {s} out of range for alphabet size {vocab}"
            )));
        }
    }
    Ok(())
}

/// Blank-interleaved state sequence: eps, y1, eps, y2, ..., yL, eps.
fn lattice(target: &LabelSequence, blank: usize) -> Vec<usize> {
    let mut states = Vec::with_capacity(2 * target.len() + 1);
    states.push(blank);
    for &s in target.symbols() {
        states.push(s);
        states.push(blank);
    }
    states
}

/// Forward recursion over the lattice. Returns per-frame alpha values
/// (emission at frame t included in `alpha[t]`).
fn forward_pass<F: Scalar>(
    log_probs: &ArrayView2<F>,
    states: &[usize],
) -> Array2<F> {
    let t_len = log_probs.dim().0;
    let n_states = states.len();
    let mut alpha = Array2::from_elem((t_len, n_states), F::neg_infinity());

    alpha[(0, 0)] = log_probs[(0, states[0])];
    if n_states > 1 {
        alpha[(0, 1)] = log_probs[(0, states[1])];
    }

    for t in 1..t_len {
        for s in 0..n_states {
            let mut acc = alpha[(t - 1, s)];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1, s - 1)]);
            }
            // Skip transition is allowed only onto a non-blank state that
            // differs from the previous non-blank state.
            if s >= 2 && states[s] != states[0] && states[s] != states[s - 2] {
                acc = log_add(acc, alpha[(t - 1, s - 2)]);
            }
            if acc != F::neg_infinity() {
                alpha[(t, s)] = acc + log_probs[(t, states[s])];
            }
        }
    }
    alpha
}

/// CTC loss: negative log probability that the posteriorgram emits the target
/// after collapsing repeats and removing blanks.
///
/// Rows of `exp(log_probs)` are expected to be normalized distributions.
/// An infeasible target (shorter input than the minimal alignment) yields
/// `loss = +inf` with the `infeasible` flag set rather than an error, so that
/// training loops can skip such utterances.
pub fn ctc_loss<F: Scalar>(
    log_probs: ArrayView2<F>,
    target: &LabelSequence,
    blank: usize,
) -> Result<CtcResult<F>> {
    validate_inputs(&log_probs, target, blank)?;
    let t_len = log_probs.dim().0;

    if target.min_frames() > t_len {
        return Ok(CtcResult {
            loss: F::infinity(),
            infeasible: true,
            grad_logits: None,
        });
    }

    if target.is_empty() {
        // Degenerate single-state lattice: the only path stays on blank.
        let mut acc = F::zero();
        for t in 0..t_len {
            acc = acc + log_probs[(t, blank)];
        }
        return Ok(CtcResult {
            loss: -acc,
            infeasible: false,
            grad_logits: None,
        });
    }

    let states = lattice(target, blank);
    let n_states = states.len();
    let alpha = forward_pass(&log_probs, &states);

    let mut log_p = alpha[(t_len - 1, n_states - 1)];
    if n_states >= 2 {
        log_p = log_add(log_p, alpha[(t_len - 1, n_states - 2)]);
    }

    Ok(CtcResult {
        loss: -log_p,
        infeasible: false,
        grad_logits: None,
    })
}

/// Cross-entropy of the blank row: `-sum_t log_probs[t, blank]`.
///
/// This is the loss for a negative segment in the discriminative task and is
/// exactly `ctc_loss` with the empty target (same accumulation order, so the
/// two agree bit for bit).
pub fn blank_only_loss<F: Scalar>(log_probs: ArrayView2<F>, blank: usize) -> Result<F> {
    validate_inputs(&log_probs, &LabelSequence::empty(), blank)?;
    let mut acc = F::zero();
    for t in 0..log_probs.dim().0 {
        acc = acc + log_probs[(t, blank)];
    }
    Ok(-acc)
}

/// CTC loss plus gradient of the loss w.r.t. the logits feeding the softmax
/// that produced `log_probs`: `grad = softmax(logits) - occupancy`, where the
/// occupancy is the posterior expected symbol count from forward-backward.
///
/// Infeasible targets are an error here: there is no finite gradient.
pub fn ctc_grad<F: Scalar>(
    log_probs: ArrayView2<F>,
    target: &LabelSequence,
    blank: usize,
) -> Result<CtcResult<F>> {
    validate_inputs(&log_probs, target, blank)?;
    let (t_len, vocab) = log_probs.dim();

    if target.min_frames() > t_len {
        return Err(Error::Numeric(
            "ctc: gradient requested for an infeasible target".into(),
        ));
    }

    let states = lattice(target, blank);
    let n_states = states.len();
    let alpha = forward_pass(&log_probs, &states);

    let mut log_p = alpha[(t_len - 1, n_states - 1)];
    if n_states >= 2 {
        log_p = log_add(log_p, alpha[(t_len - 1, n_states - 2)]);
    }

    // Backward variables: beta[t][s] = log P(emissions t+1..T-1 | state s at t).
    let mut beta = Array2::from_elem((t_len, n_states), F::neg_infinity());
    beta[(t_len - 1, n_states - 1)] = F::zero();
    if n_states >= 2 {
        beta[(t_len - 1, n_states - 2)] = F::zero();
    }
    for t in (0..t_len.saturating_sub(1)).rev() {
        for s in 0..n_states {
            let mut acc = beta[(t + 1, s)] + log_probs[(t + 1, states[s])];
            if s + 1 < n_states {
                acc = log_add(acc, beta[(t + 1, s + 1)] + log_probs[(t + 1, states[s + 1])]);
            }
            if s + 2 < n_states && states[s + 2] != blank && states[s + 2] != states[s] {
                acc = log_add(acc, beta[(t + 1, s + 2)] + log_probs[(t + 1, states[s + 2])]);
            }
            beta[(t, s)] = acc;
        }
    }

    // grad wrt logit[t, k] = p[t, k] - sum_{s: states[s] == k} gamma[t, s]
    let mut grad = Array2::<F>::zeros((t_len, vocab));
    for t in 0..t_len {
        for k in 0..vocab {
            grad[(t, k)] = log_probs[(t, k)].exp();
        }
        for s in 0..n_states {
            let g = alpha[(t, s)] + beta[(t, s)] - log_p;
            if g != F::neg_infinity() {
                let k = states[s];
                grad[(t, k)] = grad[(t, k)] - g.exp();
            }
        }
    }

    Ok(CtcResult {
        loss: -log_p,
        infeasible: false,
        grad_logits: Some(grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn log2x2(p: [[f64; 2]; 2]) -> Array2<f64> {
        array![
            [p[0][0].ln(), p[0][1].ln()],
            [p[1][0].ln(), p[1][1].ln()]
        ]
    }

    #[test]
    fn single_frame_forced_alignment() {
        // alphabet {eps=0, a=1}, prob(a) ~ 1
        let probs = array![[(1e-9f64).ln(), (1.0 - 1e-9f64).ln()]];
        let r = ctc_loss(probs.view(), &LabelSequence::new(vec![1]), 0).unwrap();
        assert!(!r.infeasible);
        assert_abs_diff_eq!(r.loss, 1e-9, epsilon = 1e-12);
    }

    #[test]
    fn two_frame_uniform_single_label() {
        // paths collapsing to {a}: aa, a eps, eps a -> 3/4
        let probs = log2x2([[0.5, 0.5], [0.5, 0.5]]);
        let r = ctc_loss(probs.view(), &LabelSequence::new(vec![1]), 0).unwrap();
        assert_abs_diff_eq!(r.loss, -(0.75f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn repeated_label_needs_separating_blank() {
        let probs = log2x2([[0.5, 0.5], [0.5, 0.5]]);
        let target = LabelSequence::new(vec![1, 1]);
        assert_eq!(target.min_frames(), 3);
        let r = ctc_loss(probs.view(), &target, 0).unwrap();
        assert!(r.infeasible);
        assert!(r.loss.is_infinite());
    }

    #[test]
    fn blank_only_matches_formula() {
        let probs = log2x2([[0.5, 0.5], [0.5, 0.5]]);
        let l = blank_only_loss(probs.view(), 0).unwrap();
        assert_abs_diff_eq!(l, -2.0 * 0.5f64.ln(), epsilon = 1e-15);

        let certain = array![[0.0f64, -60.0], [0.0, -60.0], [0.0, -60.0]];
        assert_eq!(blank_only_loss(certain.view(), 0).unwrap(), 0.0);
    }

    #[test]
    fn blank_only_equals_empty_target_exactly() {
        let mut rng_state = 0x1234_5678_u64;
        let mut next = move || {
            // xorshift, enough for test fixtures
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let t_len = 1 + (next() * 6.0) as usize;
            let vocab = 2 + (next() * 3.0) as usize;
            let mut rows = Vec::new();
            for _ in 0..t_len {
                let mut row: Vec<f64> = (0..vocab).map(|_| next() + 1e-3).collect();
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v = (*v / s).ln());
                rows.extend(row);
            }
            let lp = Array2::from_shape_vec((t_len, vocab), rows).unwrap();
            let a = blank_only_loss(lp.view(), 0).unwrap();
            let b = ctc_loss(lp.view(), &LabelSequence::empty(), 0).unwrap().loss;
            assert_eq!(a, b, "shared degenerate lattice must agree bitwise");
        }
    }

    #[test]
    fn empty_target_gradient_is_analytic() {
        // d(-sum log p_eps)/d logit = p - onehot(eps)
        let probs = array![
            [0.7f64.ln(), 0.3f64.ln()],
            [0.2f64.ln(), 0.8f64.ln()],
        ];
        let r = ctc_grad(probs.view(), &LabelSequence::empty(), 0).unwrap();
        let g = r.grad_logits.unwrap();
        assert_abs_diff_eq!(g[(0, 0)], 0.7 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(0, 1)], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(1, 0)], 0.2 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(1, 1)], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let probs = array![
            [0.6f64.ln(), 0.1f64.ln(), 0.3f64.ln()],
            [0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()],
            [0.25f64.ln(), 0.25f64.ln(), 0.5f64.ln()],
        ];
        let r = ctc_grad(probs.view(), &LabelSequence::new(vec![1, 2]), 0).unwrap();
        let g = r.grad_logits.unwrap();
        for t in 0..3 {
            let s: f64 = (0..3).map(|k| g[(t, k)]).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn grad_of_infeasible_target_is_an_error() {
        let probs = log2x2([[0.5, 0.5], [0.5, 0.5]]);
        let err = ctc_grad(probs.view(), &LabelSequence::new(vec![1, 1]), 0);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn rejects_blank_in_target_and_bad_symbols() {
        let probs = log2x2([[0.5, 0.5], [0.5, 0.5]]);
        assert!(matches!(
            ctc_loss(probs.view(), &LabelSequence::new(vec![0]), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ctc_loss(probs.view(), &LabelSequence::new(vec![7]), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_length_input_is_empty_error() {
        let probs = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            ctc_loss(probs.view(), &LabelSequence::empty(), 0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn stable_at_the_posterior_floor() {
        // every entry at the 1e-30 floor except a dominant one
        let floor = 1e-30f64.ln();
        let probs = array![
            [0.0f64, floor, floor],
            [floor, 0.0, floor],
            [floor, floor, 0.0],
        ];
        let r = ctc_loss(probs.view(), &LabelSequence::new(vec![1, 2]), 0).unwrap();
        assert!(r.loss.is_finite());
        let g = ctc_grad(probs.view(), &LabelSequence::new(vec![1, 2]), 0).unwrap();
        assert!(g.grad_logits.unwrap().iter().all(|v| v.is_finite()));
    }
}
