//! Re-evaluates saved main-model checkpoints on every split.

use std::collections::BTreeMap;

use floodlib_core::MlpModel;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::write_json;
use crate::par::par_map;
use crate::pipeline::{checkpoint_name, evaluate, EvalMetrics};
use crate::prep::prepare;
use crate::stats::SeedStat;
use crate::{CliError, Result};

/// Loads the checkpoint `train` wrote for `method`, with an error naming
/// the command to run when it is missing.
pub fn load_checkpoint(cfg: &ExperimentConfig, seed: u64, method: &str) -> Result<MlpModel> {
    let path = cfg.seed_dir(seed).join(checkpoint_name(method));
    if !path.exists() {
        return Err(CliError::Config(format!(
            "missing checkpoint {}; run `floodlib train` with this config first",
            path.display()
        )));
    }
    Ok(MlpModel::load(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: EvalMetrics,
    pub val: EvalMetrics,
    pub test: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEvaluation {
    pub seed: u64,
    pub methods: BTreeMap<String, SplitMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub command: String,
    pub config: ExperimentConfig,
    /// Test-split metrics per method, over seeds.
    pub methods: BTreeMap<String, BTreeMap<String, SeedStat>>,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedEvaluation> {
    let splits = prepare(cfg.data()?, seed)?;
    let bins = cfg.calibration.bins;
    let mut methods = BTreeMap::new();
    for m in cfg.methods() {
        let label = m.label();
        let model = load_checkpoint(cfg, seed, &label)?;
        let metrics = SplitMetrics {
            train: evaluate(&model, &splits.train, bins)?,
            val: evaluate(&model, &splits.val, bins)?,
            test: evaluate(&model, &splits.test, bins)?,
        };
        methods.insert(label, metrics);
    }
    let report = SeedEvaluation { seed, methods };
    write_json(&cfg.seed_dir(seed).join("evaluation.json"), &report)?;
    Ok(report)
}

pub fn run(cfg: &ExperimentConfig) -> Result<EvaluationSummary> {
    let per_seed = par_map(&cfg.seeds, |&s| run_seed(cfg, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut methods = BTreeMap::new();
    for m in cfg.methods() {
        let label = m.label();
        let maps: Vec<_> = per_seed.iter().map(|s| s.methods[&label].test.as_map()).collect();
        let mut stats = BTreeMap::new();
        for key in maps[0].keys() {
            if maps.iter().all(|v| v.contains_key(key)) {
                stats.insert(
                    key.clone(),
                    SeedStat::from_values(maps.iter().map(|v| v[key]).collect()),
                );
            }
        }
        methods.insert(label, stats);
    }
    let summary = EvaluationSummary {
        command: "evaluate".into(),
        config: cfg.clone(),
        methods,
    };
    write_json(&cfg.exp_dir().join("evaluation_summary.json"), &summary)?;
    Ok(summary)
}
