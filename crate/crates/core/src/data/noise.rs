//! Label and target corruption.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{Dataset, Labels, SampleFlag, Task};
use crate::rng::{rng_for, stream};
use crate::{Error, Result};

/// Replaces the labels of `floor(alpha * N / 100)` uniformly chosen samples
/// with a uniform draw over the other `K - 1` classes.
pub fn flip_labels(dataset: &Dataset, alpha_percent: f64, seed: u64) -> Result<Dataset> {
    let Task::Classification(k) = dataset.task() else {
        return Err(Error::TaskMismatch(
            "label flipping needs a classification dataset".into(),
        ));
    };
    if !(0.0..=100.0).contains(&alpha_percent) {
        return Err(Error::Config(format!(
            "flip percentage must lie in [0, 100], got {alpha_percent}"
        )));
    }
    let n = dataset.len();
    let count = ((alpha_percent * n as f64) / 100.0).floor() as usize;
    let mut rng = rng_for(seed, stream::FLIP);
    let mut labels = dataset
        .labels()
        .classes()
        .expect("classification labels")
        .to_vec();
    let mut flags = dataset.flags().to_vec();

    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let r = rng.random_range(0..k - 1);
        labels[i] = if r >= labels[i] { r + 1 } else { r };
        flags[i] = SampleFlag::Flipped;
    }

    let mut out = dataset.clone();
    out.replace_labels(Labels::Class(labels), flags);
    Ok(out)
}

/// One draw from the skew-normal with location 0, the given shape and
/// scale, via `delta*|Z0| + sqrt(1 - delta^2)*Z1` with
/// `delta = shape / sqrt(1 + shape^2)`.
pub fn skew_normal_sample<R: rand::Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let delta = shape / (1.0 + shape * shape).sqrt();
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    scale * (delta * z0.abs() + (1.0 - delta * delta).sqrt() * z1)
}

/// Adds skew-normal noise to every regression target.
pub fn add_skew_noise(dataset: &Dataset, skew: f64, scale: f64, seed: u64) -> Result<Dataset> {
    let Some(targets) = dataset.labels().values() else {
        return Err(Error::TaskMismatch(
            "skew noise needs a regression dataset".into(),
        ));
    };
    if !(0.0..=3.0).contains(&skew) {
        return Err(Error::Config(format!("skewness must lie in [0, 3], got {skew}")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!(
            "noise scale must be positive, got {scale}"
        )));
    }
    let mut rng = rng_for(seed, stream::SKEW);
    let noisy = targets
        .iter()
        .map(|&t| t + skew_normal_sample(&mut rng, skew, scale))
        .collect();
    let mut out = dataset.clone();
    out.replace_labels(Labels::Real(noisy), vec![SampleFlag::SkewNoised; dataset.len()]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;

    fn classes(n: usize, k: usize) -> Dataset {
        let x = Matrix::zeros(n, 1);
        let y = (0..n).map(|i| i % k).collect();
        Dataset::new(
            x,
            Labels::Class(y),
            (0..n as u64).collect(),
            Task::Classification(k),
        )
        .unwrap()
    }

    fn regression(n: usize) -> Dataset {
        let x = Matrix::zeros(n, 1);
        Dataset::new(
            x,
            Labels::Real(vec![0.0; n]),
            (0..n as u64).collect(),
            Task::Regression,
        )
        .unwrap()
    }

    #[test]
    fn alpha_zero_is_identity() {
        let ds = classes(50, 3);
        assert_eq!(flip_labels(&ds, 0.0, 1).unwrap(), ds);
    }

    #[test]
    fn alpha_hundred_binary_flips_everything() {
        let ds = classes(40, 2);
        let out = flip_labels(&ds, 100.0, 1).unwrap();
        let (a, b) = (ds.labels().classes().unwrap(), out.labels().classes().unwrap());
        assert!(a.iter().zip(b).all(|(x, y)| x + y == 1));
        assert!(out.flags().iter().all(|f| *f == SampleFlag::Flipped));
    }

    #[test]
    fn alpha_fifty_flips_floor_half_and_never_to_self() {
        let ds = classes(41, 4);
        let out = flip_labels(&ds, 50.0, 9).unwrap();
        let (a, b) = (ds.labels().classes().unwrap(), out.labels().classes().unwrap());
        let changed = a.iter().zip(b).filter(|(x, y)| x != y).count();
        assert_eq!(changed, 20);
        let flagged = out.flags().iter().filter(|f| f.is_corrupted()).count();
        assert_eq!(flagged, 20);
        assert_eq!(out.ids(), ds.ids());
    }

    #[test]
    fn task_mismatch_errors() {
        assert!(matches!(
            flip_labels(&regression(5), 10.0, 0),
            Err(Error::TaskMismatch(_))
        ));
        assert!(matches!(
            add_skew_noise(&classes(5, 2), 1.0, 1.0, 0),
            Err(Error::TaskMismatch(_))
        ));
    }

    #[test]
    fn symmetric_limit_has_zero_mean_and_unit_scale() {
        let n = 40_000;
        let out = add_skew_noise(&regression(n), 0.0, 2.0, 3).unwrap();
        let v = out.labels().values().unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let tol = 3.0 * 2.0 / (n as f64).sqrt();
        assert!(mean.abs() < tol, "mean {mean}");
        assert!((std - 2.0).abs() < tol, "std {std}");
    }

    #[test]
    fn positive_shape_gives_positive_skewness() {
        let n = 20_000;
        let out = add_skew_noise(&regression(n), 3.0, 1.0, 5).unwrap();
        let v = out.labels().values().unwrap();
        let mean = v.iter().sum::<f64>() / n as f64;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
        assert!(m3 / m2.powf(1.5) > 0.0);
    }

    #[test]
    fn corruption_is_deterministic() {
        let ds = classes(100, 5);
        assert_eq!(
            flip_labels(&ds, 30.0, 4).unwrap(),
            flip_labels(&ds, 30.0, 4).unwrap()
        );
        let r = regression(100);
        assert_eq!(
            add_skew_noise(&r, 1.5, 1.0, 4).unwrap(),
            add_skew_noise(&r, 1.5, 1.0, 4).unwrap()
        );
    }
}
