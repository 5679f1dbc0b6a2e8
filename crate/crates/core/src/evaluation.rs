//! Precision at N and the Matthews correlation coefficient.

use std::cmp::Ordering;

use crate::error::{KodError, Result};
use crate::scalar::Real;

/// Share of true outliers among the `N` highest scores, `N` being the number
/// of true outliers.
///
/// Scores tied with the `N`-th highest are resolved pessimistically: inliers
/// in the tie are ranked ahead of outliers.
pub fn precision_at_n<T: Real>(scores: &[T], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(KodError::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_out = labels.iter().filter(|&&l| l).count();
    if n_out == 0 {
        return Err(KodError::InvalidInput("precision at N needs at least one true outlier".into()));
    }
    let mut sorted: Vec<T> = scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let threshold = sorted[n_out - 1];

    let (mut above, mut above_out, mut tied_in) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        if s > threshold {
            above += 1;
            above_out += usize::from(l);
        } else if s == threshold && !l {
            tied_in += 1;
        }
    }
    let slots = n_out - above;
    let tied_out_taken = slots.saturating_sub(tied_in);
    Ok((above_out + tied_out_taken) as f64 / n_out as f64)
}

/// Confusion counts of binary flags against true labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_flags(flags: &[bool], labels: &[bool]) -> Result<Self> {
        if flags.len() != labels.len() {
            return Err(KodError::InvalidInput(format!(
                "{} flags but {} labels",
                flags.len(),
                labels.len()
            )));
        }
        let mut c = Confusion::default();
        for (&f, &l) in flags.iter().zip(labels) {
            match (f, l) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / denom.sqrt()
        }
    }
}

pub fn mcc(flags: &[bool], labels: &[bool]) -> Result<f64> {
    Ok(Confusion::from_flags(flags, labels)?.mcc())
}
