//! Folds, auxiliary models and the flood table for every seed.

use std::collections::BTreeMap;
use std::time::Instant;

use floodlib_core::auxiliary::{compute_flood_table, make_folds, train_aux_models};
use floodlib_core::nn::TrainLog;
use floodlib_core::AuxMode;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::write_json;
use crate::par::par_map;
use crate::pipeline::{save_aux, theta_by_flag, FlagStats, TableRef, AUX_DIR, FLOOD_TABLE};
use crate::prep::prepare;
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub final_train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainAuxSeed {
    pub seed: u64,
    pub mode: AuxMode,
    pub n_folds: usize,
    pub fold_sizes: Vec<usize>,
    pub table: TableRef,
    pub theta_by_flag: BTreeMap<String, FlagStats>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainAuxSummary {
    pub command: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<TrainAuxSeed>,
}

fn summarize(mode: AuxMode, logs: &[TrainLog]) -> Vec<RunSummary> {
    let labels = logs.iter().enumerate().map(|(i, _)| match mode {
        AuxMode::Scratch => format!("fold_{i}"),
        AuxMode::FineTune if i == 0 => "base".to_owned(),
        AuxMode::FineTune => format!("fold_{}", i - 1),
    });
    labels
        .zip(logs)
        .map(|(label, log)| RunSummary {
            label,
            epochs_run: log.epochs.len(),
            best_epoch: log.best_epoch,
            final_train_loss: log.epochs.last().map(|e| e.train_loss),
        })
        .collect()
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(TrainAuxSeed, f64)> {
    let spec = cfg.aux()?;
    if spec.flood_table.is_some() {
        return Err(CliError::Config(
            "aux.flood_table is set, so there are no auxiliary models to train".into(),
        ));
    }
    let splits = prepare(cfg.data()?, seed)?;
    let aux_cfg = cfg.aux_config(seed)?;
    let folds = make_folds(&splits.train, aux_cfg.n_folds, seed)?;
    let start = Instant::now();
    let models = train_aux_models(&splits.train, &folds, &aux_cfg, Some(&splits.val))?;
    let seconds = start.elapsed().as_secs_f64();
    let table = compute_flood_table(&splits.train, &folds, &models, aux_cfg.gamma)?;

    let dir = cfg.seed_dir(seed);
    save_aux(&dir, &folds, &models)?;
    table.save(dir.join(FLOOD_TABLE))?;
    let report = TrainAuxSeed {
        seed,
        mode: aux_cfg.mode,
        n_folds: aux_cfg.n_folds,
        fold_sizes: folds.sizes(),
        table: TableRef::new(FLOOD_TABLE, &table),
        theta_by_flag: theta_by_flag(&splits.train, &table),
        runs: summarize(aux_cfg.mode, &models.logs),
    };
    write_json(&dir.join(AUX_DIR).join("train_aux.json"), &report)?;
    Ok((report, seconds))
}

pub fn run(cfg: &ExperimentConfig) -> Result<TrainAuxSummary> {
    cfg.aux()?;
    let results = par_map(&cfg.seeds, |&s| run_seed(cfg, s));
    let mut seeds = Vec::new();
    let mut timings = BTreeMap::new();
    for r in results {
        let (report, secs) = r?;
        log::info!(
            "seed {}: flood table {} (mean theta {:.4})",
            report.seed,
            report.table.content_hash,
            report.table.mean_theta
        );
        timings.insert(report.seed.to_string(), secs);
        seeds.push(report);
    }
    let summary = TrainAuxSummary {
        command: "train-aux".into(),
        config: cfg.clone(),
        seeds,
    };
    write_json(&cfg.exp_dir().join("train_aux_summary.json"), &summary)?;
    write_json(&cfg.exp_dir().join("train_aux_timings.json"), &timings)?;
    Ok(summary)
}
