//! Synthetic K-class Gaussian data with regular, irregular and mislabeled
//! samples.
//!
//! Each class k has a mean vector whose entries are drawn from
//! `{-delta_mu, 0, delta_mu}`. Regular samples are drawn around the mean with
//! `sigma_regular`, irregular ones with the larger `sigma_irregular`, and
//! mislabeled ones with `sigma_regular` but a label replaced by a uniformly
//! chosen other class.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Labels, SampleFlag, Task};
use crate::rng::{rng_for, stream, Rng};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyGaussianConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub delta_mu: f64,
    pub sigma_regular: f64,
    pub sigma_irregular: f64,
    pub frac_regular: f64,
    pub frac_irregular: f64,
    pub frac_mislabeled: f64,
    /// Samples per generated dataset.
    pub n: usize,
    pub seed: u64,
}

impl Default for ToyGaussianConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            dim: 10,
            delta_mu: 1.0,
            sigma_regular: 0.5,
            sigma_irregular: 1.5,
            frac_regular: 0.70,
            frac_irregular: 0.15,
            frac_mislabeled: 0.15,
            n: 600,
            seed: 0,
        }
    }
}

impl ToyGaussianConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "toy gaussian needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.dim == 0 || self.n == 0 {
            return Err(Error::Config("toy gaussian dim and n must be positive".into()));
        }
        if !(self.delta_mu.is_finite() && self.delta_mu > 0.0) {
            return Err(Error::Config("delta_mu must be positive".into()));
        }
        // sigma_regular may be 0 for the noiseless limit
        if !(self.sigma_regular.is_finite() && self.sigma_regular >= 0.0) {
            return Err(Error::Config("sigma_regular must be nonnegative".into()));
        }
        if !(self.sigma_irregular.is_finite() && self.sigma_irregular > self.sigma_regular) {
            return Err(Error::Config(
                "sigma_irregular must be finite and larger than sigma_regular".into(),
            ));
        }
        let fracs = [self.frac_regular, self.frac_irregular, self.frac_mislabeled];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("sample-type fractions must lie in [0, 1]".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "sample-type fractions must sum to 1, got {}",
                fracs.iter().sum::<f64>()
            )));
        }
        Ok(())
    }

    /// Class means shared by both generated datasets. Means are redrawn until
    /// pairwise distinct.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let mut rng = rng_for(self.seed, stream::TOY_MEANS);
        let levels = [-self.delta_mu, 0.0, self.delta_mu];
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(self.num_classes);
        while means.len() < self.num_classes {
            let mu: Vec<f64> = (0..self.dim).map(|_| levels[rng.random_range(0..3)]).collect();
            if !means.contains(&mu) {
                means.push(mu);
            }
        }
        means
    }
}

/// Generates datasets A and B from the same class means with independent
/// draws. A carries sample IDs `0..n`, B carries `n..2n`.
pub fn gen_toy_gaussian(cfg: &ToyGaussianConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    if cfg.dim > 0 && 3f64.powi(cfg.dim.min(64) as i32) < cfg.num_classes as f64 {
        return Err(Error::Config(
            "not enough distinct class means for this dim".into(),
        ));
    }
    let means = cfg.class_means();
    let a = draw(cfg, &means, &mut rng_for(cfg.seed, stream::TOY_A), 0)?;
    let b = draw(cfg, &means, &mut rng_for(cfg.seed, stream::TOY_B), cfg.n as u64)?;
    Ok((a, b))
}

fn draw(cfg: &ToyGaussianConfig, means: &[Vec<f64>], rng: &mut Rng, id_offset: u64) -> Result<Dataset> {
    let k = cfg.num_classes;
    let mut rows: Vec<(Vec<f64>, usize, SampleFlag)> = Vec::with_capacity(cfg.n);
    for (class, mu) in means.iter().enumerate() {
        let n_k = cfg.n / k + usize::from(class < cfg.n % k);
        let n_mis = (cfg.frac_mislabeled * n_k as f64).round() as usize;
        let n_irr = ((cfg.frac_irregular * n_k as f64).round() as usize).min(n_k - n_mis);
        for j in 0..n_k {
            let (flag, sigma) = if j < n_mis {
                (SampleFlag::Mislabeled, cfg.sigma_regular)
            } else if j < n_mis + n_irr {
                (SampleFlag::Irregular, cfg.sigma_irregular)
            } else {
                (SampleFlag::Clean, cfg.sigma_regular)
            };
            let x: Vec<f64> = mu
                .iter()
                .map(|&m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let label = if flag == SampleFlag::Mislabeled {
                let r = rng.random_range(0..k - 1);
                if r >= class {
                    r + 1
                } else {
                    r
                }
            } else {
                class
            };
            rows.push((x, label, flag));
        }
    }
    rows.shuffle(rng);

    let features = Matrix::from_rows(&rows.iter().map(|r| r.0.as_slice()).collect::<Vec<_>>())?;
    let labels = Labels::Class(rows.iter().map(|r| r.1).collect());
    let flags = rows.iter().map(|r| r.2).collect();
    let ids = (0..cfg.n as u64).map(|i| i + id_offset).collect();
    Dataset::with_flags(features, labels, ids, Task::Classification(k), flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid(x: &[f64], means: &[Vec<f64>]) -> usize {
        let d = |m: &Vec<f64>| x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (0..means.len())
            .min_by(|&a, &b| d(&means[a]).total_cmp(&d(&means[b])))
            .unwrap()
    }

    #[test]
    fn zero_noise_limit_is_separable_by_centroids() {
        let cfg = ToyGaussianConfig {
            sigma_regular: 0.0,
            sigma_irregular: 1e-9,
            frac_regular: 1.0,
            frac_irregular: 0.0,
            frac_mislabeled: 0.0,
            n: 300,
            ..Default::default()
        };
        let (a, _) = gen_toy_gaussian(&cfg).unwrap();
        let means = cfg.class_means();
        let y = a.labels().classes().unwrap();
        let correct = a
            .features()
            .iter_rows()
            .zip(y)
            .filter(|(x, &c)| nearest_centroid(x, &means) == c)
            .count();
        assert_eq!(correct, a.len());
    }

    #[test]
    fn means_are_ten_dim_on_the_three_level_grid() {
        let cfg = ToyGaussianConfig {
            delta_mu: 0.7,
            ..Default::default()
        };
        for mu in cfg.class_means() {
            assert_eq!(mu.len(), 10);
            assert!(mu.iter().all(|&v| v == 0.0 || v == 0.7 || v == -0.7));
        }
    }

    #[test]
    fn mislabeled_fraction_is_exact_per_class() {
        let cfg = ToyGaussianConfig {
            num_classes: 3,
            frac_regular: 0.7,
            frac_irregular: 0.1,
            frac_mislabeled: 0.2,
            n: 300,
            ..Default::default()
        };
        let (a, b) = gen_toy_gaussian(&cfg).unwrap();
        for ds in [&a, &b] {
            let n_mis = ds
                .flags()
                .iter()
                .filter(|f| **f == SampleFlag::Mislabeled)
                .count();
            assert_eq!(n_mis, 60);
        }
        assert_eq!(a.ids()[0], 0);
        assert_eq!(b.ids()[0], 300);
        assert_ne!(a.features(), b.features());
    }

    #[test]
    fn mislabeled_labels_differ_from_generating_class() {
        let cfg = ToyGaussianConfig {
            sigma_regular: 0.0,
            sigma_irregular: 0.01,
            n: 600,
            ..Default::default()
        };
        let (a, _) = gen_toy_gaussian(&cfg).unwrap();
        let means = cfg.class_means();
        let y = a.labels().classes().unwrap();
        for ((x, &label), flag) in a.features().iter_rows().zip(y).zip(a.flags()) {
            let true_class = nearest_centroid(x, &means);
            assert_eq!(*flag == SampleFlag::Mislabeled, label != true_class);
        }
    }

    #[test]
    fn rejects_single_class_and_bad_fractions() {
        let mut cfg = ToyGaussianConfig {
            num_classes: 1,
            ..Default::default()
        };
        assert!(matches!(gen_toy_gaussian(&cfg), Err(Error::Config(_))));
        cfg.num_classes = 3;
        cfg.frac_regular = 0.5;
        assert!(matches!(gen_toy_gaussian(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = ToyGaussianConfig::default();
        assert_eq!(gen_toy_gaussian(&cfg).unwrap(), gen_toy_gaussian(&cfg).unwrap());
    }
}
