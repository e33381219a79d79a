//! Pieces shared by the subcommands: main-model training, evaluation and
//! the on-disk auxiliary artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use floodlib_core::auxiliary::{compute_flood_table, FoldAssignment};
use floodlib_core::metrics::{ece, nll, regression_metrics};
use floodlib_core::nn::{self, Head, TrainOutcome};
use floodlib_core::{AuxMode, AuxModels, Dataset, Error, FloodTable, MlpModel, Objective, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{read_json, write_bytes, write_json};
use crate::{CliError, Result};

pub const FLOOD_TABLE: &str = "flood_table.csv";
pub const AUX_DIR: &str = "aux";
const FOLDS_FILE: &str = "folds.csv";
const AUX_META: &str = "meta.json";

pub fn checkpoint_name(method: &str) -> String {
    format!("model_{method}.ckpt")
}

/// Held-out quality numbers for one split. Fields that do not apply to the
/// task, or are undefined on the split, are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub nll: Option<f64>,
    pub ece: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub r2: Option<f64>,
}

impl EvalMetrics {
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        [
            ("loss", self.loss),
            ("accuracy", self.accuracy),
            ("nll", self.nll),
            ("ece", self.ece),
            ("mse", self.mse),
            ("mae", self.mae),
            ("r2", self.r2),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_owned(), v)))
        .collect()
    }
}

pub fn evaluate(model: &MlpModel, data: &Dataset, bins: usize) -> Result<EvalMetrics> {
    let mut m = EvalMetrics {
        n: data.len(),
        loss: None,
        accuracy: None,
        nll: None,
        ece: None,
        mse: None,
        mae: None,
        r2: None,
    };
    if data.is_empty() {
        return Ok(m);
    }
    let (loss, acc) = nn::evaluate(model, data)?;
    m.loss = Some(loss);
    m.accuracy = acc;
    let out = model.forward(data.features())?;
    if let Some(y) = data.labels().classes() {
        m.nll = Some(nll(&out, y)?);
        m.ece = Some(ece(&out, y, bins)?.ece);
    }
    if let Some(t) = data.labels().values() {
        let preds: Vec<f64> = out.iter_rows().map(|r| r[0]).collect();
        if preds.len() >= 2 {
            match regression_metrics(&preds, t) {
                Ok(r) => {
                    m.mse = Some(r.mse);
                    m.mae = Some(r.mae);
                    m.r2 = Some(r.r2);
                }
                // constant targets: R^2 is undefined but the errors are not
                Err(Error::UndefinedMetric(_)) => {
                    m.mse =
                        Some(preds.iter().zip(t).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / t.len() as f64);
                    m.mae =
                        Some(preds.iter().zip(t).map(|(p, y)| (p - y).abs()).sum::<f64>() / t.len() as f64);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(m)
}

/// Validation score used to pick grid points; larger is better.
pub fn selection_score(m: &EvalMetrics) -> Option<f64> {
    match m.accuracy {
        Some(a) => Some(a),
        None => m.loss.map(|l| -l),
    }
}

pub fn selection_metric_name(data: &Dataset) -> &'static str {
    if data.labels().classes().is_some() {
        "val_accuracy"
    } else {
        "val_loss"
    }
}

pub fn main_dims(cfg: &ExperimentConfig, data: &Dataset) -> Vec<usize> {
    let mut dims = vec![data.dim()];
    dims.extend(&cfg.model.hidden);
    dims.push(data.task().num_outputs());
    dims
}

/// Trains the main model. Every method in a seed starts from the same
/// initialization and batch order.
pub fn train_main(
    cfg: &ExperimentConfig,
    seed: u64,
    train: &Dataset,
    val: &Dataset,
    objective: &Objective<'_>,
) -> Result<TrainOutcome> {
    let model = MlpModel::new(&main_dims(cfg, train), Head::for_task(train.task()), seed)?;
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    Ok(nn::train(model, train, &tc, objective, Some(val))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRef {
    /// Relative to the seed directory.
    pub path: String,
    pub content_hash: String,
    pub gamma: f64,
    pub mean_theta: f64,
}

impl TableRef {
    pub fn new(path: &str, table: &FloodTable) -> Self {
        Self {
            path: path.to_owned(),
            content_hash: table.content_hash(),
            gamma: table.created_by().gamma,
            mean_theta: table.mean(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AuxMeta {
    mode: AuxMode,
    seed: u64,
    n_folds: usize,
}

/// Writes fold checkpoints, the base checkpoint (fine-tune mode) and the
/// fold assignment under `<seed_dir>/aux/`.
pub fn save_aux(seed_dir: &Path, folds: &FoldAssignment, aux: &AuxModels) -> Result<()> {
    let dir = seed_dir.join(AUX_DIR);
    for (i, m) in aux.models.iter().enumerate() {
        write_bytes(&dir.join(format!("fold_{i}.ckpt")), &m.to_checkpoint())?;
    }
    let base = dir.join("base.ckpt");
    match &aux.base {
        Some(b) => write_bytes(&base, &b.to_checkpoint())?,
        None if base.exists() => std::fs::remove_file(&base).map_err(CliError::io(&base))?,
        None => {}
    }
    let mut csv = String::from("sample_id,fold\n");
    for (id, f) in folds.ids().iter().zip(folds.folds()) {
        csv.push_str(&format!("{id},{f}\n"));
    }
    write_bytes(&dir.join(FOLDS_FILE), csv.as_bytes())?;
    write_json(
        &dir.join(AUX_META),
        &AuxMeta {
            mode: aux.mode,
            seed: aux.seed,
            n_folds: folds.n_folds(),
        },
    )
}

/// Fold models and assignment saved by `train-aux`, aligned to `train`.
pub struct AuxArtifacts {
    pub folds: FoldAssignment,
    pub models: AuxModels,
}

impl AuxArtifacts {
    pub fn load(seed_dir: &Path, train: &Dataset) -> Result<Self> {
        let dir = seed_dir.join(AUX_DIR);
        let meta_path = dir.join(AUX_META);
        if !meta_path.exists() {
            return Err(CliError::Config(format!(
                "no auxiliary models under {}; run `floodlib train-aux` with this config first",
                dir.display()
            )));
        }
        let meta: AuxMeta = read_json(&meta_path)?;
        let folds_path = dir.join(FOLDS_FILE);
        let text = std::fs::read_to_string(&folds_path).map_err(CliError::io(&folds_path))?;
        let mut ids = Vec::new();
        let mut fold_of = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let parsed = line
                .split_once(',')
                .and_then(|(a, b)| Some((a.parse::<u64>().ok()?, b.parse::<usize>().ok()?)));
            let Some((id, f)) = parsed else {
                return Err(CliError::Config(format!(
                    "{}: bad line {}",
                    folds_path.display(),
                    i + 1
                )));
            };
            ids.push(id);
            fold_of.push(f);
        }
        let all = FoldAssignment::from_parts(meta.n_folds, ids, fold_of)?;
        let folds = all.restrict_to(train).map_err(|_| {
            CliError::Config(format!(
                "auxiliary models in {} were trained on different data; rerun `floodlib train-aux`",
                dir.display()
            ))
        })?;
        if folds.ids().len() != all.ids().len() {
            return Err(CliError::Config(format!(
                "auxiliary models in {} were trained on different data; rerun `floodlib train-aux`",
                dir.display()
            )));
        }
        let models = (0..meta.n_folds)
            .map(|i| MlpModel::load(dir.join(format!("fold_{i}.ckpt"))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let base_path = dir.join("base.ckpt");
        let base = if meta.mode == AuxMode::FineTune && base_path.exists() {
            Some(MlpModel::load(base_path)?)
        } else {
            None
        };
        Ok(Self {
            folds,
            models: AuxModels {
                mode: meta.mode,
                seed: meta.seed,
                models,
                base,
                logs: vec![],
            },
        })
    }

    pub fn table(&self, train: &Dataset, gamma: f64) -> Result<FloodTable> {
        Ok(compute_flood_table(train, &self.folds, &self.models, gamma)?)
    }
}

/// Where AdaFlood levels come from for one seed.
pub enum TableSource {
    Fixed(PathBuf, Box<FloodTable>),
    Artifacts(Box<AuxArtifacts>),
}

impl TableSource {
    pub fn resolve(cfg: &ExperimentConfig, seed: u64, train: &Dataset) -> Result<Self> {
        let aux = cfg.aux()?;
        if let Some(path) = &aux.flood_table {
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "flood table {} does not exist",
                    path.display()
                )));
            }
            let table = FloodTable::load(path)?;
            table.check_covers(train.ids())?;
            return Ok(TableSource::Fixed(path.clone(), Box::new(table)));
        }
        Ok(TableSource::Artifacts(Box::new(AuxArtifacts::load(
            &cfg.seed_dir(seed),
            train,
        )?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Flood-level summary per sample flag (regular, irregular, mislabeled...).
pub fn theta_by_flag(data: &Dataset, table: &FloodTable) -> BTreeMap<String, FlagStats> {
    let mut groups: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for (id, flag) in data.ids().iter().zip(data.flags()) {
        if let Some(t) = table.get(*id) {
            groups.entry(flag.as_str()).or_default().push(t);
        }
    }
    groups
        .into_iter()
        .map(|(k, mut v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let stats = FlagStats {
                count: v.len(),
                mean,
                median: median(&mut v),
            };
            (k.to_owned(), stats)
        })
        .collect()
}
