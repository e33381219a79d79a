//! Turns a data section into train/val/test splits for one run seed.

use floodlib_core::data::{add_skew_noise, flip_labels, gen_toy_gaussian, load_csv, split, TargetKind};
use floodlib_core::rng::derive_seed;
use floodlib_core::Dataset;

use crate::config::{CsvTask, DataSource, DataSpec, NoiseSpec};
use crate::Result;

/// Stream tag separating the test split from the train/val split.
const TEST_SPLIT: u64 = 0x7e57;

#[derive(Debug, Clone)]
pub struct Splits {
    /// Noised when the config asks for noise.
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// The two raw toy datasets, when the source is the toy generator.
    pub toy: Option<(Dataset, Dataset)>,
}

pub fn prepare(spec: &DataSpec, seed: u64) -> Result<Splits> {
    let (pool, test, toy) = match &spec.source {
        DataSource::ToyGaussian(cfg) => {
            let cfg = floodlib_core::data::ToyGaussianConfig {
                seed: cfg.seed.wrapping_add(seed),
                ..cfg.clone()
            };
            let (a, b) = gen_toy_gaussian(&cfg)?;
            (a.clone(), b.clone(), Some((a, b)))
        }
        DataSource::Csv(c) => {
            let kind = match c.task {
                CsvTask::Classification => TargetKind::Classification {
                    num_classes: c.num_classes,
                },
                CsvTask::Regression => TargetKind::Regression,
            };
            let full = load_csv(&c.path, &c.target, kind)?;
            match &c.test_path {
                Some(t) => {
                    let kind = match full.task() {
                        floodlib_core::Task::Classification(k) => {
                            TargetKind::Classification { num_classes: Some(k) }
                        }
                        floodlib_core::Task::Regression => TargetKind::Regression,
                    };
                    (full, load_csv(t, &c.target, kind)?, None)
                }
                None => {
                    let (pool, test) = split(&full, 1.0 - c.test_frac, derive_seed(seed, TEST_SPLIT))?;
                    (pool, test, None)
                }
            }
        }
    };
    let (train, val) = split(&pool, spec.train_frac, seed)?;
    let train = match &spec.noise {
        None => train,
        Some(NoiseSpec::FlipLabels { percent }) => flip_labels(&train, *percent, seed)?,
        Some(NoiseSpec::SkewNormal { shape, scale }) => add_skew_noise(&train, *shape, *scale, seed)?,
    };
    Ok(Splits {
        train,
        val,
        test,
        toy,
    })
}
