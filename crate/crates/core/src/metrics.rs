//! Evaluation metrics.
//!
//! Probability matrices are row-per-sample. Argmax ties resolve to the
//! lowest class index everywhere, so accuracy and ECE are deterministic.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Floor applied to the true-class probability before taking the log.
pub const PROB_CLAMP: f64 = 1e-12;

/// Index of the largest entry; first one wins on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_rows(preds: &Matrix, n_labels: usize) -> Result<()> {
    if preds.rows() != n_labels {
        return Err(Error::Shape(format!(
            "{} prediction rows for {n_labels} labels",
            preds.rows()
        )));
    }
    Ok(())
}

pub fn accuracy(preds: &Matrix, labels: &[usize]) -> Result<f64> {
    check_rows(preds, labels.len())?;
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = preds
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// MSE, MAE and R² (with the total sum of squares taken about the target mean).
pub fn regression_metrics(preds: &[f64], targets: &[f64]) -> Result<RegressionMetrics> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = targets.len();
    if n < 2 {
        return Err(Error::UndefinedMetric("R² needs at least two targets".into()));
    }
    let nf = n as f64;
    let mse = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / nf;
    let mae = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / nf;
    let mean = targets.iter().sum::<f64>() / nf;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric(
            "R² is undefined for constant targets".into(),
        ));
    }
    let r2 = 1.0 - mse * nf / ss_tot;
    Ok(RegressionMetrics { mse, mae, r2 })
}

/// Mean of `-ln max(p_true, 1e-12)`.
pub fn nll(preds: &Matrix, labels: &[usize]) -> Result<f64> {
    check_rows(preds, labels.len())?;
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("nll of an empty set".into()));
    }
    let total: f64 = preds
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| -row[y].max(PROB_CLAMP).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Reliability-diagram data plus the expected calibration error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Mean max-probability per bin; 0 for empty bins.
    pub mean_confidence: Vec<f64>,
    /// Fraction correct per bin; 0 for empty bins.
    pub mean_accuracy: Vec<f64>,
    pub ece: f64,
}

/// Confidence-binned calibration with `bins` equal-width bins on [0, 1].
///
/// Bins are left-closed and right-open except the last, which also takes
/// confidence exactly 1. Confidence is the row maximum.
pub fn ece(preds: &Matrix, labels: &[usize], bins: usize) -> Result<CalibrationReport> {
    if bins < 1 {
        return Err(Error::Config("ECE needs at least one bin".into()));
    }
    check_rows(preds, labels.len())?;
    let edges: Vec<f64> = (0..=bins).map(|b| b as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hit_sum = vec![0.0; bins];

    for (row, &y) in preds.iter_rows().zip(labels) {
        let pred = argmax(row);
        let conf = row[pred];
        let b = bin_of(conf, &edges);
        counts[b] += 1;
        conf_sum[b] += conf;
        if pred == y {
            hit_sum[b] += 1.0;
        }
    }

    let n = labels.len();
    let mut mean_confidence = vec![0.0; bins];
    let mut mean_accuracy = vec![0.0; bins];
    let mut ece = 0.0;
    for b in 0..bins {
        if counts[b] == 0 {
            continue;
        }
        let c = counts[b] as f64;
        mean_confidence[b] = conf_sum[b] / c;
        mean_accuracy[b] = hit_sum[b] / c;
        ece += c / n as f64 * (mean_accuracy[b] - mean_confidence[b]).abs();
    }
    Ok(CalibrationReport {
        bin_edges: edges,
        counts,
        mean_confidence,
        mean_accuracy,
        ece,
    })
}

fn bin_of(conf: f64, edges: &[f64]) -> usize {
    let bins = edges.len() - 1;
    let mut b = ((conf * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    // conf * bins can land one bin off the edge comparison
    while b > 0 && conf < edges[b] {
        b -= 1;
    }
    while b + 1 < bins && conf >= edges[b + 1] {
        b += 1;
    }
    b
}

/// Fractional ranks (1-based); tied values share their average rank.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation with zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric(
            "spearman needs at least two points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in spearman input".into()));
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}
