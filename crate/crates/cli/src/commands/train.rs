//! Main-model training for every configured method and seed.

use std::collections::BTreeMap;
use std::time::Instant;

use floodlib_core::nn::{TrainLog, TrainOutcome};
use floodlib_core::{FloodTable, FloodVariant, Objective};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MethodSpec};
use crate::output::{write_bytes, write_json};
use crate::par::par_map;
use crate::pipeline::{
    checkpoint_name, evaluate, selection_metric_name, selection_score, train_main, EvalMetrics, TableRef,
    TableSource,
};
use crate::prep::{prepare, Splits};
use crate::stats::SeedStat;
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: f64,
    pub val_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// `b` or `gamma`.
    pub parameter: String,
    pub metric: String,
    pub candidates: Vec<Candidate>,
    pub chosen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub variant: FloodVariant,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
    pub selection: Option<Selection>,
    pub flood_table: Option<TableRef>,
    pub val: EvalMetrics,
    pub test: EvalMetrics,
    pub checkpoint: String,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub methods: Vec<MethodRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub variant: FloodVariant,
    pub test: BTreeMap<String, SeedStat>,
    pub val: BTreeMap<String, SeedStat>,
    /// Selected b or gamma per seed, when a grid was searched.
    pub chosen: Option<SeedStat>,
}

/// Result record for a `train` run; the embedded config is enough to
/// rerun it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub command: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub methods: BTreeMap<String, MethodSummary>,
    /// Per-seed files with epoch logs, relative to the experiment directory.
    pub seed_metrics: Vec<String>,
    pub timings: String,
}

struct Trained {
    outcome: TrainOutcome,
    val: EvalMetrics,
    /// The table trained against, when it was computed for this method.
    table: Option<FloodTable>,
}

fn objective_for<'a>(variant: FloodVariant, b: f64, table: Option<&'a FloodTable>) -> Objective<'a> {
    match variant {
        FloodVariant::Unregularized => Objective::Unregularized,
        FloodVariant::Flood => Objective::Flood { b },
        FloodVariant::IFlood => Objective::IFlood { b },
        FloodVariant::AdaFlood => Objective::AdaFlood(table.expect("adaflood needs a table")),
    }
}

/// Trains every candidate and keeps the best on validation; ties keep the
/// earlier grid point.
fn sweep<F>(values: &[f64], mut fit: F) -> Result<(Trained, Vec<Candidate>, f64)>
where
    F: FnMut(f64) -> Result<Trained>,
{
    let mut best: Option<(Trained, f64, Option<f64>)> = None;
    let mut candidates = Vec::with_capacity(values.len());
    for &v in values {
        let t = fit(v)?;
        let score = selection_score(&t.val);
        candidates.push(Candidate {
            value: v,
            val_score: score,
        });
        let better = match (&best, score) {
            (None, _) => true,
            (Some((_, _, Some(b))), Some(s)) => s > *b,
            (Some((_, _, None)), Some(_)) => true,
            _ => false,
        };
        if better {
            best = Some((t, v, score));
        }
    }
    let (t, v, _) = best.expect("non-empty grid");
    Ok((t, candidates, v))
}

fn run_method(
    cfg: &ExperimentConfig,
    seed: u64,
    m: &MethodSpec,
    splits: &Splits,
    tables: Option<&TableSource>,
) -> Result<MethodRun> {
    let (train, val, test) = (&splits.train, &splits.val, &splits.test);
    let bins = cfg.calibration.bins;
    let fit = |objective: &Objective<'_>| -> Result<(TrainOutcome, EvalMetrics)> {
        let out = train_main(cfg, seed, train, val, objective)?;
        let v = evaluate(&out.model, val, bins)?;
        Ok((out, v))
    };
    let grid_needs_val = |grid: &[f64]| -> Result<()> {
        if grid.len() > 1 && val.is_empty() {
            return Err(CliError::Config(format!(
                "method {}: a hyperparameter grid needs a validation split",
                m.label()
            )));
        }
        Ok(())
    };

    let (trained, selection, b, gamma) = match m.variant {
        FloodVariant::Unregularized => {
            let (outcome, v) = fit(&Objective::Unregularized)?;
            (
                Trained {
                    outcome,
                    val: v,
                    table: None,
                },
                None,
                None,
                None,
            )
        }
        FloodVariant::Flood | FloodVariant::IFlood => {
            let grid = if m.b_grid.is_empty() {
                vec![m.b]
            } else {
                m.b_grid.clone()
            };
            grid_needs_val(&grid)?;
            let (t, cands, chosen) = sweep(&grid, |b| {
                let (outcome, v) = fit(&objective_for(m.variant, b, None))?;
                Ok(Trained {
                    outcome,
                    val: v,
                    table: None,
                })
            })?;
            let sel = (!m.b_grid.is_empty()).then(|| Selection {
                parameter: "b".into(),
                metric: selection_metric_name(val).into(),
                candidates: cands,
                chosen,
            });
            (t, sel, Some(chosen), None)
        }
        FloodVariant::AdaFlood => match tables.expect("resolved for adaflood") {
            TableSource::Fixed(_, table) => {
                let (outcome, v) = fit(&Objective::AdaFlood(table))?;
                let g = table.created_by().gamma;
                (
                    Trained {
                        outcome,
                        val: v,
                        table: None,
                    },
                    None,
                    None,
                    Some(g),
                )
            }
            TableSource::Artifacts(art) => {
                let default_gamma = m.gamma.unwrap_or(cfg.aux()?.gamma);
                let grid = if m.gamma_grid.is_empty() {
                    vec![default_gamma]
                } else {
                    m.gamma_grid.clone()
                };
                grid_needs_val(&grid)?;
                let (t, cands, chosen) = sweep(&grid, |g| {
                    let table = art.table(train, g)?;
                    let (outcome, v) = fit(&Objective::AdaFlood(&table))?;
                    Ok(Trained {
                        outcome,
                        val: v,
                        table: Some(table),
                    })
                })?;
                let sel = (!m.gamma_grid.is_empty()).then(|| Selection {
                    parameter: "gamma".into(),
                    metric: selection_metric_name(val).into(),
                    candidates: cands,
                    chosen,
                });
                (t, sel, None, Some(chosen))
            }
        },
    };

    let label = m.label();
    let dir = cfg.seed_dir(seed);
    let flood_table = match (&trained.table, tables) {
        (Some(t), _) => {
            let rel = format!("tables/{label}.csv");
            t.save(dir.join(&rel))?;
            Some(TableRef::new(&rel, t))
        }
        (None, Some(TableSource::Fixed(path, t))) if m.variant == FloodVariant::AdaFlood => {
            Some(TableRef::new(&path.display().to_string(), t))
        }
        _ => None,
    };
    let checkpoint = checkpoint_name(&label);
    write_bytes(&dir.join(&checkpoint), &trained.outcome.model.to_checkpoint())?;
    Ok(MethodRun {
        method: label,
        variant: m.variant,
        b,
        gamma,
        selection,
        flood_table,
        val: trained.val,
        test: evaluate(&trained.outcome.model, test, bins)?,
        checkpoint,
        log: trained.outcome.log,
    })
}

pub const SEED_METRICS: &str = "metrics.json";

/// Trains every method for one seed; returns the metrics and per-method
/// wall-clock seconds.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(SeedMetrics, BTreeMap<String, f64>)> {
    let methods = cfg.methods();
    let splits = prepare(cfg.data()?, seed)?;
    let tables = if methods.iter().any(|m| m.variant == FloodVariant::AdaFlood) {
        Some(TableSource::resolve(cfg, seed, &splits.train)?)
    } else {
        None
    };
    let mut runs = Vec::with_capacity(methods.len());
    let mut timings = BTreeMap::new();
    for m in &methods {
        let start = Instant::now();
        let run = run_method(cfg, seed, m, &splits, tables.as_ref())?;
        timings.insert(run.method.clone(), start.elapsed().as_secs_f64());
        log::info!("seed {seed} {}: test {:?}", run.method, run.test.as_map());
        runs.push(run);
    }
    let metrics = SeedMetrics { seed, methods: runs };
    write_json(&cfg.seed_dir(seed).join(SEED_METRICS), &metrics)?;
    Ok((metrics, timings))
}

fn stats_by_metric(values: &[BTreeMap<String, f64>]) -> BTreeMap<String, SeedStat> {
    let mut out = BTreeMap::new();
    if let Some(first) = values.first() {
        for key in first.keys() {
            if values.iter().all(|v| v.contains_key(key)) {
                out.insert(
                    key.clone(),
                    SeedStat::from_values(values.iter().map(|v| v[key]).collect()),
                );
            }
        }
    }
    out
}

pub fn summarize(cfg: &ExperimentConfig, per_seed: &[SeedMetrics]) -> BTreeMap<String, MethodSummary> {
    let mut out = BTreeMap::new();
    for m in cfg.methods() {
        let label = m.label();
        let runs: Vec<&MethodRun> = per_seed
            .iter()
            .filter_map(|s| s.methods.iter().find(|r| r.method == label))
            .collect();
        let test: Vec<_> = runs.iter().map(|r| r.test.as_map()).collect();
        let val: Vec<_> = runs.iter().map(|r| r.val.as_map()).collect();
        let chosen: Option<Vec<f64>> = runs
            .iter()
            .map(|r| r.selection.as_ref().map(|s| s.chosen))
            .collect();
        out.insert(
            label,
            MethodSummary {
                variant: m.variant,
                test: stats_by_metric(&test),
                val: stats_by_metric(&val),
                chosen: chosen.filter(|c| !c.is_empty()).map(SeedStat::from_values),
            },
        );
    }
    out
}

pub const SUMMARY: &str = "summary.json";
pub const TIMINGS: &str = "timings.json";

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let results = par_map(&cfg.seeds, |&s| run_seed(cfg, s));
    let mut per_seed = Vec::new();
    let mut timings = BTreeMap::new();
    for r in results {
        let (metrics, t) = r?;
        timings.insert(metrics.seed.to_string(), t);
        per_seed.push(metrics);
    }
    let result = ExperimentResult {
        command: "train".into(),
        config: cfg.clone(),
        seeds: cfg.seeds.clone(),
        methods: summarize(cfg, &per_seed),
        seed_metrics: cfg.seeds.iter().map(|s| format!("{s}/{SEED_METRICS}")).collect(),
        timings: TIMINGS.into(),
    };
    write_json(&cfg.exp_dir().join(SUMMARY), &result)?;
    write_json(&cfg.exp_dir().join(TIMINGS), &timings)?;
    Ok(result)
}
