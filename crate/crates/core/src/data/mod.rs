//! Datasets and everything that builds or corrupts them.

mod csv_io;
mod noise;
mod split;
mod toy;

pub use csv_io::{load_csv, read_csv, write_csv, TargetKind, NOISE_FLAG_COLUMN, SAMPLE_ID_COLUMN};
pub use noise::{add_skew_noise, flip_labels, skew_normal_sample};
pub use split::split;
pub use toy::{gen_toy_gaussian, ToyGaussianConfig};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification(usize),
    Regression,
}

impl Task {
    pub fn num_outputs(self) -> usize {
        match self {
            Task::Classification(k) => k,
            Task::Regression => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Class(Vec<usize>),
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Labels::Class(v) => Labels::Class(idx.iter().map(|&i| v[i]).collect()),
            Labels::Real(v) => Labels::Real(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Labels::Class(v) => Some(v),
            Labels::Real(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match self {
            Labels::Real(v) => Some(v),
            Labels::Class(_) => None,
        }
    }
}

/// Per-sample provenance.
///
/// `Irregular` is a clean toy-Gaussian sample drawn with the larger spread;
/// it is not a corruption. The remaining non-clean flags are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    Clean,
    Irregular,
    Mislabeled,
    Flipped,
    SkewNoised,
}

impl SampleFlag {
    pub fn is_corrupted(self) -> bool {
        matches!(
            self,
            SampleFlag::Mislabeled | SampleFlag::Flipped | SampleFlag::SkewNoised
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SampleFlag::Clean => "clean",
            SampleFlag::Irregular => "irregular",
            SampleFlag::Mislabeled => "mislabeled",
            SampleFlag::Flipped => "flipped",
            SampleFlag::SkewNoised => "skew_noised",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "clean" | "" => SampleFlag::Clean,
            "irregular" => SampleFlag::Irregular,
            "mislabeled" => SampleFlag::Mislabeled,
            "flipped" => SampleFlag::Flipped,
            "skew_noised" => SampleFlag::SkewNoised,
            _ => return None,
        })
    }
}

/// Indexed feature/label pairs with stable sample IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Labels,
    ids: Vec<u64>,
    task: Task,
    flags: Vec<SampleFlag>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Labels, ids: Vec<u64>, task: Task) -> Result<Self> {
        let flags = vec![SampleFlag::Clean; ids.len()];
        Self::with_flags(features, labels, ids, task, flags)
    }

    pub fn with_flags(
        features: Matrix,
        labels: Labels,
        ids: Vec<u64>,
        task: Task,
        flags: Vec<SampleFlag>,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || ids.len() != n || flags.len() != n {
            return Err(Error::Shape(format!(
                "dataset parts disagree: {n} rows, {} labels, {} ids, {} flags",
                labels.len(),
                ids.len(),
                flags.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Schema(format!("duplicate sample id {dup}")));
        }
        match (task, &labels) {
            (Task::Classification(k), Labels::Class(y)) => {
                if k < 2 {
                    return Err(Error::Config(format!("need at least 2 classes, got {k}")));
                }
                if let Some(bad) = y.iter().find(|&&c| c >= k) {
                    return Err(Error::Schema(format!("label {bad} out of range for {k} classes")));
                }
            }
            (Task::Regression, Labels::Real(_)) => {}
            _ => return Err(Error::TaskMismatch("labels do not match task".into())),
        }
        Ok(Self {
            features,
            labels,
            ids,
            task,
            flags,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn flags(&self) -> &[SampleFlag] {
        &self.flags
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.task {
            Task::Classification(k) => Some(k),
            Task::Regression => None,
        }
    }

    /// Rows in the given order. IDs travel with their rows.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: self.labels.select(idx),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            task: self.task,
            flags: idx.iter().map(|&i| self.flags[i]).collect(),
        }
    }

    /// Same samples, new feature matrix (used to cache frozen-layer activations).
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(Error::Shape(format!(
                "replacement features have {} rows, dataset has {}",
                features.rows(),
                self.len()
            )));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    pub(crate) fn replace_labels(&mut self, labels: Labels, flags: Vec<SampleFlag>) {
        debug_assert_eq!(labels.len(), self.len());
        self.labels = labels;
        self.flags = flags;
    }

    /// Row indices grouped by class, classes in ascending order.
    pub fn indices_by_class(&self) -> Option<Vec<Vec<usize>>> {
        let k = self.num_classes()?;
        let y = self.labels.classes()?;
        let mut groups = vec![Vec::new(); k];
        for (i, &c) in y.iter().enumerate() {
            groups[c].push(i);
        }
        Some(groups)
    }
}
