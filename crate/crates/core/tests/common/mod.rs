//! Independent reference implementations the integration tests check
//! against: exhaustive path enumeration for sequence losses, central
//! finite differences for gradients, and a quadratic recount for
//! threshold sweeps. Deliberately naive; never call these at scale.

#![allow(dead_code)]

use ndarray::ArrayView2;

/// Collapse a frame-level path: merge adjacent repeats, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Loss by brute force: sum the probability of every frame-level path
/// that collapses to `target`, over all `vocab^frames` paths.
pub fn brute_force_loss(log_probs: ArrayView2<f64>, target: &[usize], blank: usize) -> f64 {
    let (frames, vocab) = log_probs.dim();
    let mut total = 0.0f64;
    let mut path = vec![0usize; frames];
    loop {
        if collapse(&path, blank) == target {
            let lp: f64 = path.iter().enumerate().map(|(t, &s)| log_probs[(t, s)]).sum();
            total += lp.exp();
        }
        // Odometer increment over the path digits.
        let mut pos = 0;
        loop {
            if pos == frames {
                return if total > 0.0 { -total.ln() } else { f64::INFINITY };
            }
            path[pos] += 1;
            if path[pos] < vocab {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Every label string the collapse map can produce from `frames` frames
/// over a vocabulary with `vocab - 1` real symbols: all strings of length
/// 0..=frames. Adjacent repeats are legal outputs (a blank between two
/// equal frames survives collapsing); the impossible ones cost +inf and
/// contribute nothing to probability sums.
pub fn enumerate_collapsed(frames: usize, vocab: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..frames {
        let mut next = Vec::new();
        for s in &layer {
            for sym in 1..vocab {
                let mut e = s.clone();
                e.push(sym);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Central finite difference of `f` at `params`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    params: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        work[i] = params[i] + step;
        let hi = f(&work);
        work[i] = params[i] - step;
        let lo = f(&work);
        work[i] = params[i];
        grad.push((hi - lo) / (2.0 * step));
    }
    grad
}

/// Largest relative error between two gradients, with an absolute floor
/// so near-zero components do not blow the ratio up.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Direct quadratic recount of reject and accept rates at one threshold:
/// accept iff score >= threshold.
pub fn recount_rates(
    scores: &[(f64, bool, f64)],
    threshold: f64,
) -> (f64, f64) {
    let mut pos = 0usize;
    let mut rejected = 0usize;
    let mut accepted_neg = 0usize;
    let mut neg_seconds = 0.0f64;
    for &(score, positive, duration) in scores {
        if positive {
            pos += 1;
            if score < threshold {
                rejected += 1;
            }
        } else {
            neg_seconds += duration;
            if score >= threshold {
                accepted_neg += 1;
            }
        }
    }
    let fr = rejected as f64 / pos as f64;
    let fa = accepted_neg as f64 / (neg_seconds / 3600.0);
    (fr, fa)
}
