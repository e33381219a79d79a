use rand::seq::SliceRandom;

use super::Dataset;
use crate::rng::{rng_for, stream};
use crate::{Error, Result};

/// Splits into `(train, val)` with `floor(train_frac * N)` training rows.
///
/// Classification datasets are stratified: each class contributes
/// `floor(train_frac * n_k)` rows and the leftover training slots go to the
/// classes with the largest fractional remainders (lowest class index on
/// ties).
pub fn split(dataset: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(Error::Config(format!(
            "train_frac must lie in (0, 1], got {train_frac}"
        )));
    }
    let n = dataset.len();
    let n_train = (train_frac * n as f64).floor() as usize;
    let mut rng = rng_for(seed, stream::SPLIT);

    let mut groups = dataset
        .indices_by_class()
        .unwrap_or_else(|| vec![(0..n).collect()]);
    for g in &mut groups {
        g.shuffle(&mut rng);
    }

    let exact: Vec<f64> = groups.iter().map(|g| train_frac * g.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut missing = n_train.saturating_sub(take.iter().sum());
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &g in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if take[g] < groups[g].len() {
            take[g] += 1;
            missing -= 1;
        }
    }

    let mut train_idx = Vec::with_capacity(n_train);
    let mut val_idx = Vec::with_capacity(n - n_train);
    for (g, t) in groups.iter().zip(&take) {
        train_idx.extend_from_slice(&g[..*t]);
        val_idx.extend_from_slice(&g[*t..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    if val_idx.is_empty() {
        log::warn!("split with train_frac={train_frac} leaves an empty validation set");
    }
    Ok((dataset.subset(&train_idx), dataset.subset(&val_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Labels, Matrix, Task};
    use std::collections::HashSet;

    fn ds(n: usize, k: usize) -> Dataset {
        let x = Matrix::zeros(n, 2);
        let y = (0..n).map(|i| i % k).collect();
        Dataset::new(
            x,
            Labels::Class(y),
            (0..n as u64).collect(),
            Task::Classification(k),
        )
        .unwrap()
    }

    #[test]
    fn eighty_twenty() {
        let (tr, va) = split(&ds(100, 3), 0.8, 0).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
        let a: HashSet<_> = tr.ids().iter().collect();
        assert!(va.ids().iter().all(|i| !a.contains(i)));
    }

    #[test]
    fn stratified_counts() {
        let (tr, _) = split(&ds(100, 2), 0.8, 7).unwrap();
        let ones = tr.labels().classes().unwrap().iter().filter(|&&c| c == 1).count();
        assert_eq!(ones, 40);
    }

    #[test]
    fn full_train_fraction_leaves_empty_val() {
        let (tr, va) = split(&ds(10, 2), 1.0, 0).unwrap();
        assert_eq!(tr.len(), 10);
        assert!(va.is_empty());
    }

    #[test]
    fn odd_sizes_hit_the_exact_train_count() {
        for n in [7, 13, 29, 101] {
            let (tr, va) = split(&ds(n, 3), 0.8, 1).unwrap();
            assert_eq!(tr.len(), (0.8 * n as f64).floor() as usize);
            assert_eq!(tr.len() + va.len(), n);
        }
    }
}
