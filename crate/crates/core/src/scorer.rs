//! Keyword scoring over posteriorgrams.
//!
//! A keyword is scored as the total probability, under the frame-level
//! posteriors, of every alignment that collapses to its label sequence:
//! exactly the quantity the CTC loss negates. Posteriors are floored at
//! 1e-30 first so silent channels cannot produce NaNs downstream.

use crate::ctc::{ctc_loss, LabelSequence};
use crate::error::Result;
use crate::nnet::{PosteriorGram, TRIGGER};
use crate::scalar::Scalar;

/// Probability floor applied to posteriors before scoring.
pub const POSTERIOR_FLOOR: f64 = 1e-30;

/// Result of scoring one utterance against one keyword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    /// Log probability of the keyword given the utterance.
    pub log_prob: f64,
    /// `log_prob` divided by the frame count, comparable across durations.
    pub normalized: f64,
    pub num_frames: usize,
    /// True when the utterance is too short to realize the keyword at all;
    /// both scores are then negative infinity.
    pub infeasible: bool,
}

/// Score an explicit label sequence against a posteriorgram.
pub fn score_keyword<F: Scalar>(
    gram: &PosteriorGram<F>,
    labels: &LabelSequence,
) -> Result<DetectionScore> {
    let floor = F::from_f64(POSTERIOR_FLOOR.ln());
    let floored = gram.log_probs.mapv(|v| v.max(floor));
    let res = ctc_loss(floored.view(), labels, gram.alphabet.blank())?;
    let log_prob = if res.infeasible {
        f64::NEG_INFINITY
    } else {
        -res.loss.as_f64()
    };
    let t = gram.num_frames();
    Ok(DetectionScore {
        log_prob,
        normalized: log_prob / t as f64,
        num_frames: t,
        infeasible: res.infeasible,
    })
}

/// Score the single trigger symbol of a keyword-presence head.
pub fn score_trigger<F: Scalar>(gram: &PosteriorGram<F>) -> Result<DetectionScore> {
    score_keyword(gram, &LabelSequence::new(vec![TRIGGER]))
}
