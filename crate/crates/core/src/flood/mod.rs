//! Flood objectives and correction functions.
//!
//! Every objective maps a batch of per-sample base losses to a scalar and to
//! the per-sample upstream gradient `d objective / d loss_i`, which
//! [`MlpModel::backward`](crate::MlpModel::backward) pushes through the network.
//! At the kink of `|.|` the subgradient is 0: a sample sitting exactly at its
//! flood level exerts no gradient.

mod table;

pub use table::{FloodTable, TableProvenance};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub upstream: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_batch(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Config("objective over an empty batch".into()));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss {bad}")));
    }
    Ok(losses.len() as f64)
}

/// Plain mean loss.
pub fn mean_objective(losses: &[f64]) -> Result<ObjectiveValue> {
    let b = check_batch(losses)?;
    Ok(ObjectiveValue {
        value: losses.iter().sum::<f64>() / b,
        upstream: vec![1.0 / b; losses.len()],
    })
}

/// `|mean(loss) - b| + b`, one flood level for the batch mean.
pub fn flood_objective(losses: &[f64], b: f64) -> Result<ObjectiveValue> {
    let n = check_batch(losses)?;
    let mean = losses.iter().sum::<f64>() / n;
    let s = sign(mean - b);
    Ok(ObjectiveValue {
        value: (mean - b).abs() + b,
        upstream: vec![s / n; losses.len()],
    })
}

/// `mean(|loss_i - b| + b)`, the same flood level applied to each sample.
pub fn iflood_objective(losses: &[f64], b: f64) -> Result<ObjectiveValue> {
    let n = check_batch(losses)?;
    let value = losses.iter().map(|l| (l - b).abs() + b).sum::<f64>() / n;
    let upstream = losses.iter().map(|l| sign(l - b) / n).collect();
    Ok(ObjectiveValue { value, upstream })
}

/// `mean(|loss_i - theta_i| + theta_i)` with a flood level per sample.
pub fn adaflood_objective(losses: &[f64], theta: &[f64]) -> Result<ObjectiveValue> {
    let n = check_batch(losses)?;
    if theta.len() != losses.len() {
        return Err(Error::Shape(format!(
            "{} flood levels for {} losses",
            theta.len(),
            losses.len()
        )));
    }
    let value = losses
        .iter()
        .zip(theta)
        .map(|(l, t)| (l - t).abs() + t)
        .sum::<f64>()
        / n;
    let upstream = losses.iter().zip(theta).map(|(l, t)| sign(l - t) / n).collect();
    Ok(ObjectiveValue { value, upstream })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// Regression correction: `(1 - gamma) * aux_pred + gamma * label`.
pub fn correct_regression(aux_pred: f64, label: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(aux_pred.is_finite() && label.is_finite()) {
        return Err(Error::Numeric("non-finite regression prediction or label".into()));
    }
    Ok((1.0 - gamma) * aux_pred + gamma * label)
}

/// Squared error of the corrected prediction, `(1 - gamma)^2 * (aux_pred - label)^2`.
pub fn theta_regression(aux_pred: f64, label: f64, gamma: f64) -> Result<f64> {
    let corrected = correct_regression(aux_pred, label, gamma)?;
    Ok((corrected - label).powi(2))
}

/// Classification correction: `-ln((1 - gamma) * p_true + gamma)`.
///
/// `p_true == 0` with `gamma == 0` would give an infinite level and is
/// rejected.
pub fn correct_classification(aux_probs: &[f64], label: usize, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let p = *aux_probs
        .get(label)
        .ok_or_else(|| Error::Shape(format!("label {label} outside {} probabilities", aux_probs.len())))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::DegenerateProbability(format!(
            "p_true = {p} is not a probability"
        )));
    }
    let corrected = (1.0 - gamma) * p + gamma;
    if corrected <= 0.0 {
        return Err(Error::DegenerateProbability(
            "auxiliary model gives the true class probability 0 and gamma = 0".into(),
        ));
    }
    // clamp tiny rounding overshoot above 1
    Ok((-corrected.ln()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloodVariant {
    Unregularized,
    Flood,
    #[serde(rename = "iflood")]
    IFlood,
    #[serde(rename = "adaflood")]
    AdaFlood,
}

impl FloodVariant {
    pub fn name(self) -> &'static str {
        match self {
            FloodVariant::Unregularized => "unregularized",
            FloodVariant::Flood => "flood",
            FloodVariant::IFlood => "iflood",
            FloodVariant::AdaFlood => "adaflood",
        }
    }
}

/// Regularizer selection. `b` is used by Flood/iFlood, `gamma` by AdaFlood;
/// each is ignored by the other variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloodConfig {
    pub variant: FloodVariant,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl FloodConfig {
    pub fn unregularized() -> Self {
        Self {
            variant: FloodVariant::Unregularized,
            b: 0.0,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            // b may be negative for losses that can go below zero
            FloodVariant::Flood | FloodVariant::IFlood if !self.b.is_finite() => Err(Error::Config(format!(
                "flood level b must be finite, got {}",
                self.b
            ))),
            FloodVariant::AdaFlood => check_gamma(self.gamma),
            _ => Ok(()),
        }
    }
}

/// Training-time objective handle.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Unregularized,
    Flood { b: f64 },
    IFlood { b: f64 },
    AdaFlood(&'a FloodTable),
}

impl<'a> Objective<'a> {
    /// Builds the handle for a config. AdaFlood needs a table.
    pub fn from_config(cfg: &FloodConfig, table: Option<&'a FloodTable>) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.variant {
            FloodVariant::Unregularized => Objective::Unregularized,
            FloodVariant::Flood => Objective::Flood { b: cfg.b },
            FloodVariant::IFlood => Objective::IFlood { b: cfg.b },
            FloodVariant::AdaFlood => Objective::AdaFlood(
                table.ok_or_else(|| Error::Config("the adaflood objective needs a flood table".into()))?,
            ),
        })
    }

    /// Evaluates the objective on a batch identified by `ids`.
    pub fn evaluate(&self, losses: &[f64], ids: &[u64]) -> Result<ObjectiveValue> {
        match self {
            Objective::Unregularized => mean_objective(losses),
            Objective::Flood { b } => flood_objective(losses, *b),
            Objective::IFlood { b } => iflood_objective(losses, *b),
            Objective::AdaFlood(table) => {
                let theta = table.lookup(ids)?;
                adaflood_objective(losses, &theta)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flood_examples() {
        let r = flood_objective(&[0.2, 0.4], 0.1).unwrap();
        assert_relative_eq!(r.value, 0.3, epsilon = 1e-12);
        assert_eq!(r.upstream, vec![0.5, 0.5]);

        let r = flood_objective(&[0.05, 0.05], 0.1).unwrap();
        assert_relative_eq!(r.value, 0.15, epsilon = 1e-12);
        assert_eq!(r.upstream, vec![-0.5, -0.5]);

        let r = flood_objective(&[0.3, 0.9, 0.0], 0.0).unwrap();
        assert_relative_eq!(r.value, 0.4, epsilon = 1e-12);
        assert!(matches!(flood_objective(&[], 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn iflood_examples() {
        let r = iflood_objective(&[0.05, 0.3], 0.1).unwrap();
        assert_relative_eq!(r.value, 0.225, epsilon = 1e-12);
        assert_eq!(r.upstream, vec![-0.5, 0.5]);

        let r = iflood_objective(&[0.0, 0.4], 0.0).unwrap();
        assert_relative_eq!(r.value, 0.2, epsilon = 1e-12);
        assert_eq!(r.upstream, vec![0.0, 0.5]);

        let r = iflood_objective(&[0.1, 0.1, 0.1], 0.1).unwrap();
        assert_relative_eq!(r.value, 0.1, epsilon = 1e-12);
        assert!(r.upstream.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn adaflood_examples() {
        let r = adaflood_objective(&[0.5, 0.02], &[0.4, 0.05]).unwrap();
        assert_relative_eq!(r.value, 0.29, epsilon = 1e-12);
        assert_eq!(r.upstream, vec![0.5, -0.5]);

        let r = adaflood_objective(&[0.3, 0.7], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(r.value, 0.5, epsilon = 1e-12);
        assert_eq!(r.upstream, mean_objective(&[0.3, 0.7]).unwrap().upstream);

        let theta = [0.2, 0.6, 0.1];
        let r = adaflood_objective(&theta, &theta).unwrap();
        assert_relative_eq!(r.value, 0.3, epsilon = 1e-12);
        assert!(r.upstream.iter().all(|&u| u == 0.0));

        assert!(matches!(
            adaflood_objective(&[0.1], &[0.1, 0.2]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_losses_against_theta_double_the_mean() {
        let theta = [0.3, 0.1, 0.8, 0.0];
        let r = adaflood_objective(&[0.0; 4], &theta).unwrap();
        assert_relative_eq!(r.value, 2.0 * 1.2 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn regression_correction_examples() {
        assert_relative_eq!(correct_regression(2.0, 1.0, 0.25).unwrap(), 1.75);
        assert_relative_eq!(theta_regression(2.0, 1.0, 0.25).unwrap(), 0.5625);
        assert_eq!(correct_regression(2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(theta_regression(2.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(theta_regression(3.5, 1.0, 0.0).unwrap(), 6.25);
        assert!(theta_regression(1.0, 0.0, 1.5).is_err());
    }

    #[test]
    fn classification_correction_examples() {
        let p = [0.6, 0.3, 0.1];
        assert_relative_eq!(
            correct_classification(&p, 0, 0.5).unwrap(),
            0.2231435513142097,
            epsilon = 1e-12
        );
        assert_eq!(correct_classification(&p, 0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            correct_classification(&p, 0, 0.0).unwrap(),
            0.5108256237659907,
            epsilon = 1e-12
        );
        assert!(matches!(
            correct_classification(&[1.0, 0.0], 1, 0.0),
            Err(Error::DegenerateProbability(_))
        ));
        assert!(correct_classification(&[1.0, 0.0], 1, 0.05).unwrap().is_finite());
    }

    #[test]
    fn config_validation() {
        let mut c = FloodConfig {
            variant: FloodVariant::AdaFlood,
            b: 0.0,
            gamma: 1.2,
        };
        assert!(c.validate().is_err());
        c.gamma = 0.5;
        assert!(c.validate().is_ok());
        c.variant = FloodVariant::Flood;
        c.b = -3.0;
        assert!(c.validate().is_ok());
        c.b = f64::NAN;
        assert!(c.validate().is_err());
        assert!(Objective::from_config(
            &FloodConfig {
                variant: FloodVariant::AdaFlood,
                b: 0.0,
                gamma: 0.1
            },
            None
        )
        .is_err());
    }
}
