//! Held-out auxiliary models and per-sample flood-level estimation.
//!
//! The training set is split into `n` folds. Auxiliary model `i` never trains
//! on fold `i` (scratch mode), or only reaches fold `i` through the frozen
//! layers of a base model trained on everything (fine-tune mode). Each
//! sample's flood level is then the corrected loss of the model that held
//! it out.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Labels};
use crate::flood::{correct_classification, theta_regression, FloodTable, Objective, TableProvenance};
use crate::metrics::spearman;
use crate::nn::{self, Head, LayerMask, MlpModel, TrainConfig, TrainLog};
use crate::rng::{derive_seed, rng_for, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    Scratch,
    FineTune,
}

impl AuxMode {
    pub fn name(self) -> &'static str {
        match self {
            AuxMode::Scratch => "scratch",
            AuxMode::FineTune => "fine_tune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxConfig {
    pub n_folds: usize,
    pub mode: AuxMode,
    /// Hidden layer widths; input and output sizes come from the data.
    pub hidden: Vec<usize>,
    /// Fine-tune mode re-initializes and retrains this many final layers.
    pub finetune_last_layers: usize,
    pub gamma: f64,
    /// Used for scratch fold models and for the fine-tune base model.
    pub train: TrainConfig,
    /// Fine-tuning schedule; defaults to `train`.
    pub finetune: Option<TrainConfig>,
    /// Drives fold assignment, initialization and shuffling. The seeds in
    /// the train configs are ignored.
    pub seed: u64,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            mode: AuxMode::Scratch,
            hidden: vec![64],
            finetune_last_layers: 1,
            gamma: 0.0,
            train: TrainConfig::default(),
            finetune: None,
            seed: 0,
        }
    }
}

impl AuxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::Config(format!(
                "n_folds must be at least 2, got {}",
                self.n_folds
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.mode == AuxMode::FineTune {
            LayerMask::last(self.hidden.len() + 1, self.finetune_last_layers)?;
        }
        self.train.validate()?;
        if let Some(ft) = &self.finetune {
            ft.validate()?;
        }
        Ok(())
    }

    pub fn layer_dims(&self, data: &Dataset) -> Vec<usize> {
        let mut dims = vec![data.dim()];
        dims.extend(&self.hidden);
        dims.push(data.task().num_outputs());
        dims
    }

    pub fn finetune_mask(&self) -> Result<LayerMask> {
        LayerMask::last(self.hidden.len() + 1, self.finetune_last_layers)
    }

    fn finetune_cfg(&self) -> &TrainConfig {
        self.finetune.as_ref().unwrap_or(&self.train)
    }
}

/// Fold index for every row of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    n_folds: usize,
    ids: Vec<u64>,
    folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn from_parts(n_folds: usize, ids: Vec<u64>, folds: Vec<usize>) -> Result<Self> {
        if ids.len() != folds.len() {
            return Err(Error::Shape(
                "fold assignment ids and folds differ in length".into(),
            ));
        }
        if let Some(bad) = folds.iter().find(|&&f| f >= n_folds) {
            return Err(Error::Validation(format!(
                "fold index {bad} out of range for {n_folds} folds"
            )));
        }
        Ok(Self { n_folds, ids, folds })
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn folds(&self) -> &[usize] {
        &self.folds
    }

    pub fn fold_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&i| i == id).map(|r| self.folds[r])
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_folds];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }

    /// Rows held out by model `fold`.
    pub fn held_out_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&r| self.folds[r] == fold).collect()
    }

    /// Rows model `fold` trains on.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&r| self.folds[r] != fold).collect()
    }

    fn check_matches(&self, data: &Dataset) -> Result<()> {
        if self.ids != data.ids() {
            return Err(Error::Validation(
                "fold assignment was built for a different dataset".into(),
            ));
        }
        Ok(())
    }

    /// Assignment restricted to the rows of `data`, which must be a subset
    /// (in any order) of the assigned samples.
    pub fn restrict_to(&self, data: &Dataset) -> Result<Self> {
        let lookup: HashMap<u64, usize> = self.ids.iter().copied().zip(self.folds.iter().copied()).collect();
        let folds = data
            .ids()
            .iter()
            .map(|id| {
                lookup
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("sample {id} has no fold")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(self.n_folds, data.ids().to_vec(), folds)
    }
}

/// Balanced `n`-way partition. Classification data is stratified: classes
/// are dealt round-robin across folds, continuing the rotation from one
/// class to the next, so fold sizes differ by at most one overall.
pub fn make_folds(data: &Dataset, n: usize, seed: u64) -> Result<FoldAssignment> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {n}")));
    }
    if n > data.len() {
        return Err(Error::Config(format!(
            "{n} folds requested for {} samples",
            data.len()
        )));
    }
    let mut rng = rng_for(seed, stream::FOLDS);
    let groups = data
        .indices_by_class()
        .unwrap_or_else(|| vec![(0..data.len()).collect()]);
    let mut folds = vec![0; data.len()];
    let mut next = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for r in g {
            folds[r] = next % n;
            next += 1;
        }
    }
    FoldAssignment::from_parts(n, data.ids().to_vec(), folds)
}

#[derive(Debug, Clone)]
pub struct AuxModels {
    pub mode: AuxMode,
    pub seed: u64,
    /// `models[i]` held out fold `i`.
    pub models: Vec<MlpModel>,
    /// Fine-tune mode only.
    pub base: Option<MlpModel>,
    pub logs: Vec<TrainLog>,
}

impl AuxModels {
    pub fn checkpoint_hashes(&self) -> Vec<String> {
        self.models
            .iter()
            .map(|m| hex::encode(Sha256::digest(m.to_checkpoint())))
            .collect()
    }
}

fn fold_train_cfg(base: &TrainConfig, seed: u64, fold: usize) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(derive_seed(seed, stream::AUX_FOLD), fold as u64),
        ..base.clone()
    }
}

fn tag(fold: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Fold {
        fold,
        source: Box::new(e),
    }
}

/// Trains one auxiliary model per fold.
///
/// `val` is only used for early stopping; it should be disjoint from `data`.
pub fn train_aux_models(
    data: &Dataset,
    folds: &FoldAssignment,
    cfg: &AuxConfig,
    val: Option<&Dataset>,
) -> Result<AuxModels> {
    cfg.validate()?;
    folds.check_matches(data)?;
    if folds.n_folds() != cfg.n_folds {
        return Err(Error::Config(format!(
            "fold assignment has {} folds, config asks for {}",
            folds.n_folds(),
            cfg.n_folds
        )));
    }
    let dims = cfg.layer_dims(data);
    let head = Head::for_task(data.task());

    match cfg.mode {
        AuxMode::Scratch => {
            let mut models = Vec::with_capacity(cfg.n_folds);
            let mut logs = Vec::with_capacity(cfg.n_folds);
            for fold in 0..cfg.n_folds {
                let train_cfg = fold_train_cfg(&cfg.train, cfg.seed, fold);
                let subset = data.subset(&folds.train_rows(fold));
                let init = MlpModel::new(&dims, head, train_cfg.seed).map_err(tag(fold))?;
                let out = nn::train(init, &subset, &train_cfg, &Objective::Unregularized, val)
                    .map_err(tag(fold))?;
                models.push(out.model);
                logs.push(out.log);
            }
            Ok(AuxModels {
                mode: AuxMode::Scratch,
                seed: cfg.seed,
                models,
                base: None,
                logs,
            })
        }
        AuxMode::FineTune => {
            let base_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, stream::AUX_BASE),
                ..cfg.train.clone()
            };
            let init = MlpModel::new(&dims, head, base_cfg.seed)?;
            let base_out = nn::train(init, data, &base_cfg, &Objective::Unregularized, val)?;
            let base = base_out.model;
            let mask = cfg.finetune_mask()?;
            let mut models = Vec::with_capacity(cfg.n_folds);
            let mut logs = vec![base_out.log];
            for fold in 0..cfg.n_folds {
                let ft_cfg = fold_train_cfg(cfg.finetune_cfg(), cfg.seed, fold);
                if ft_cfg.epochs == 0 {
                    // nothing to retrain: a fresh random head would only add noise
                    models.push(base.clone());
                    continue;
                }
                let subset = data.subset(&folds.train_rows(fold));
                let out = nn::reinit_and_finetune(&base, &mask, &subset, &ft_cfg, val).map_err(tag(fold))?;
                models.push(out.model);
                logs.push(out.log);
            }
            Ok(AuxModels {
                mode: AuxMode::FineTune,
                seed: cfg.seed,
                models,
                base: Some(base),
                logs,
            })
        }
    }
}

/// Head output of the held-out model for every row, in row order.
pub fn heldout_outputs(data: &Dataset, folds: &FoldAssignment, aux: &AuxModels) -> Result<Vec<Vec<f64>>> {
    folds.check_matches(data)?;
    if aux.models.len() != folds.n_folds() {
        return Err(Error::Validation(format!(
            "{} auxiliary models for {} folds",
            aux.models.len(),
            folds.n_folds()
        )));
    }
    let mut out = vec![Vec::new(); data.len()];
    for (fold, model) in aux.models.iter().enumerate() {
        let rows = folds.held_out_rows(fold);
        let preds = model
            .forward(&data.features().select_rows(&rows))
            .map_err(tag(fold))?;
        for (k, &r) in rows.iter().enumerate() {
            out[r] = preds.row(k).to_vec();
        }
    }
    Ok(out)
}

/// Flood level for every sample from the model that held it out.
pub fn compute_flood_table(
    data: &Dataset,
    folds: &FoldAssignment,
    aux: &AuxModels,
    gamma: f64,
) -> Result<FloodTable> {
    let outputs = heldout_outputs(data, folds, aux)?;
    let mut theta = BTreeMap::new();
    for (r, out) in outputs.iter().enumerate() {
        let t = match data.labels() {
            Labels::Class(y) => correct_classification(out, y[r], gamma),
            Labels::Real(y) => theta_regression(out[0], y[r], gamma),
        }
        .map_err(tag(folds.folds()[r]))?;
        theta.insert(data.ids()[r], t);
    }
    FloodTable::new(
        theta,
        TableProvenance {
            n_folds: folds.n_folds(),
            mode: aux.mode,
            gamma,
            seed: aux.seed,
            aux_checkpoint_hashes: aux.checkpoint_hashes(),
        },
    )
}

/// Spearman correlation between two tables over the same sample IDs.
pub fn validate_finetune(table_ft: &FloodTable, table_cv: &FloodTable) -> Result<f64> {
    if table_ft.ids() != table_cv.ids() {
        return Err(Error::Validation("flood tables cover different samples".into()));
    }
    spearman(&table_ft.values(), &table_cv.values())
}
