//! Scratch versus fine-tuned auxiliary models: cost, agreement of the
//! resulting flood tables, and downstream AdaFlood quality.

use std::collections::BTreeMap;
use std::time::Instant;

use floodlib_core::auxiliary::{compute_flood_table, make_folds, train_aux_models, validate_finetune};
use floodlib_core::{AuxConfig, AuxMode, FloodTable, Objective};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::write_json;
use crate::pipeline::{evaluate, train_main, EvalMetrics, TableRef};
use crate::prep::{prepare, Splits};
use crate::stats::SeedStat;
use crate::Result;

const DIR: &str = "ablation";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    /// `scratch` or `finetune_<k>` for k retrained trailing layers.
    pub label: String,
    pub mode: AuxMode,
    pub finetune_last_layers: Option<usize>,
    pub table: TableRef,
    /// Spearman correlation with the scratch table; absent for scratch.
    pub spearman_vs_scratch: Option<f64>,
    /// Test metrics of an AdaFlood main model trained on this table.
    pub downstream_test: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAblation {
    pub seed: u64,
    pub n_folds: usize,
    pub gamma: f64,
    pub modes: Vec<ModeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub spearman_vs_scratch: Option<SeedStat>,
    pub downstream_test: BTreeMap<String, SeedStat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationSummary {
    pub command: String,
    pub config: ExperimentConfig,
    pub modes: BTreeMap<String, ModeSummary>,
    pub timings: String,
}

/// Wall-clock seconds of auxiliary training per mode label. Kept out of
/// the metric files so those stay byte-identical across reruns.
pub type ModeTimings = BTreeMap<String, f64>;

fn variants(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(String, AuxConfig)>> {
    let base = cfg.aux_config(seed)?;
    let mut out = vec![(
        "scratch".to_owned(),
        AuxConfig {
            mode: AuxMode::Scratch,
            ..base.clone()
        },
    )];
    for &k in &cfg.ablation.finetune_layers {
        let c = AuxConfig {
            mode: AuxMode::FineTune,
            finetune_last_layers: k,
            ..base.clone()
        };
        c.validate()?;
        out.push((format!("finetune_{k}"), c));
    }
    Ok(out)
}

fn downstream(cfg: &ExperimentConfig, seed: u64, splits: &Splits, table: &FloodTable) -> Result<EvalMetrics> {
    let out = train_main(cfg, seed, &splits.train, &splits.val, &Objective::AdaFlood(table))?;
    evaluate(&out.model, &splits.test, cfg.calibration.bins)
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(SeedAblation, ModeTimings)> {
    let splits = prepare(cfg.data()?, seed)?;
    let variants = variants(cfg, seed)?;
    let n_folds = variants[0].1.n_folds;
    let gamma = variants[0].1.gamma;
    // identical folds for every mode
    let folds = make_folds(&splits.train, n_folds, seed)?;
    let dir = cfg.seed_dir(seed).join(DIR);

    let mut timings = ModeTimings::new();
    let mut tables: Vec<(String, AuxConfig, FloodTable)> = Vec::new();
    for (label, aux_cfg) in variants {
        let start = Instant::now();
        let models = train_aux_models(&splits.train, &folds, &aux_cfg, Some(&splits.val))?;
        timings.insert(label.clone(), start.elapsed().as_secs_f64());
        let table = compute_flood_table(&splits.train, &folds, &models, gamma)?;
        table.save(dir.join(format!("table_{label}.csv")))?;
        tables.push((label, aux_cfg, table));
    }

    let scratch = tables[0].2.clone();
    let mut modes = Vec::new();
    for (label, aux_cfg, table) in &tables {
        let ft = aux_cfg.mode == AuxMode::FineTune;
        modes.push(ModeResult {
            label: label.clone(),
            mode: aux_cfg.mode,
            finetune_last_layers: ft.then_some(aux_cfg.finetune_last_layers),
            table: TableRef::new(&format!("{DIR}/table_{label}.csv"), table),
            spearman_vs_scratch: if ft {
                Some(validate_finetune(table, &scratch)?)
            } else {
                None
            },
            downstream_test: downstream(cfg, seed, &splits, table)?,
        });
    }
    let report = SeedAblation {
        seed,
        n_folds,
        gamma,
        modes,
    };
    write_json(&dir.join("ablation.json"), &report)?;
    write_json(&dir.join("timings.json"), &timings)?;
    Ok((report, timings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub seconds: BTreeMap<String, SeedStat>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<AblationSummary> {
    cfg.aux()?;
    // sequential: the comparison is about wall-clock time, so runs must not
    // compete for cores
    let mut per_seed = Vec::new();
    let mut timings = Vec::new();
    for &s in &cfg.seeds {
        let (r, t) = run_seed(cfg, s)?;
        per_seed.push(r);
        timings.push(t);
    }
    let mut modes = BTreeMap::new();
    for (i, m) in per_seed[0].modes.iter().enumerate() {
        let rhos: Option<Vec<f64>> = per_seed.iter().map(|s| s.modes[i].spearman_vs_scratch).collect();
        let maps: Vec<_> = per_seed
            .iter()
            .map(|s| s.modes[i].downstream_test.as_map())
            .collect();
        let mut downstream_test = BTreeMap::new();
        for key in maps[0].keys() {
            if maps.iter().all(|v| v.contains_key(key)) {
                downstream_test.insert(
                    key.clone(),
                    SeedStat::from_values(maps.iter().map(|v| v[key]).collect()),
                );
            }
        }
        modes.insert(
            m.label.clone(),
            ModeSummary {
                spearman_vs_scratch: rhos.map(SeedStat::from_values),
                downstream_test,
            },
        );
    }
    let seconds = per_seed[0]
        .modes
        .iter()
        .map(|m| {
            let v = timings.iter().map(|t| t[&m.label]).collect();
            (m.label.clone(), SeedStat::from_values(v))
        })
        .collect();
    let summary = AblationSummary {
        command: "ablate-finetune".into(),
        config: cfg.clone(),
        modes,
        timings: "ablation_timings.json".into(),
    };
    write_json(&cfg.exp_dir().join("ablation_summary.json"), &summary)?;
    write_json(
        &cfg.exp_dir().join("ablation_timings.json"),
        &TimingSummary { seconds },
    )?;
    Ok(summary)
}
