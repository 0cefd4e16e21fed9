//! Agreement between an automatic score and human judgments.
//!
//! Human 1-5 means are binarised (high quality iff `>= cutoff`), and the
//! automatic score is graded as a detector of high-quality cases by average
//! precision and ROC AUC. Linear agreement with the raw human means is
//! reported as the Pearson correlation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CUTOFF: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("human score {0} outside [1, 5]")]
    HumanOutOfRange(f64),
    #[error("undefined AUC: need at least one positive and one negative item")]
    UndefinedAuc,
    #[error("undefined AP: no positive items")]
    UndefinedAp,
    #[error("undefined PCC: {0}")]
    UndefinedPcc(&'static str),
    #[error("non-finite score {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub score: f64,
    pub human_value: f64,
    pub positive: bool,
}

impl ScoredItem {
    /// Binarises `human_value` against `cutoff`.
    pub fn new(score: f64, human_value: f64, cutoff: f64) -> Result<Self, MetricError> {
        Ok(Self {
            score,
            human_value,
            positive: binarize(human_value, cutoff)?,
        })
    }
}

pub fn binarize(human_value: f64, cutoff: f64) -> Result<bool, MetricError> {
    if !(1.0..=5.0).contains(&human_value) {
        return Err(MetricError::HumanOutOfRange(human_value));
    }
    Ok(human_value >= cutoff)
}

fn check_finite(items: &[ScoredItem]) -> Result<(), MetricError> {
    match items.iter().find(|it| !it.score.is_finite()) {
        Some(it) => Err(MetricError::NonFinite(it.score)),
        None => Ok(()),
    }
}

/// Area under the ROC curve as a rank statistic: the chance a random positive
/// outscores a random negative, ties counting one half.
pub fn roc_auc(items: &[ScoredItem]) -> Result<f64, MetricError> {
    check_finite(items)?;
    let n_pos = items.iter().filter(|it| it.positive).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::UndefinedAuc);
    }
    let mut order: Vec<&ScoredItem> = items.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Walk tie groups in ascending order; each positive beats every negative
    // strictly below it and half of the negatives tied with it.
    let mut negatives_below = 0usize;
    let mut credit = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].score == order[i].score {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|it| it.positive).count();
        let neg = group.len() - pos;
        credit += pos as f64 * (negatives_below as f64 + 0.5 * neg as f64);
        negatives_below += neg;
        i = j;
    }
    Ok(credit / (n_pos as f64 * n_neg as f64))
}

/// Non-interpolated average precision. Items are ranked by descending score;
/// equal scores keep their input order, so AP on tied data depends on that order.
pub fn average_precision(items: &[ScoredItem]) -> Result<f64, MetricError> {
    check_finite(items)?;
    let n_pos = items.iter().filter(|it| it.positive).count();
    if n_pos == 0 {
        return Err(MetricError::UndefinedAp);
    }
    let mut order: Vec<&ScoredItem> = items.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, it) in order.iter().enumerate() {
        if it.positive {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

/// Pearson correlation, population (n-denominator) form.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::UndefinedPcc("lengths differ"));
    }
    if xs.len() < 2 {
        return Err(MetricError::UndefinedPcc("fewer than two points"));
    }
    if let Some(&v) = xs.iter().chain(ys).find(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite(v));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::UndefinedPcc("zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub auc: f64,
    pub pcc: f64,
    pub n_items: usize,
    pub n_positive: usize,
    /// Some scores are tied, so `ap` depends on input order.
    pub tied_scores: bool,
}

pub fn evaluate_metric(items: &[ScoredItem]) -> Result<EvalReport, MetricError> {
    let auc = roc_auc(items)?;
    let ap = average_precision(items)?;
    let xs: Vec<f64> = items.iter().map(|it| it.score).collect();
    let ys: Vec<f64> = items.iter().map(|it| it.human_value).collect();
    let pcc = pearson(&xs, &ys)?;
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let tied_scores = sorted
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) == Some(Ordering::Equal));
    Ok(EvalReport {
        ap,
        auc,
        pcc,
        n_items: items.len(),
        n_positive: items.iter().filter(|it| it.positive).count(),
        tied_scores,
    })
}
