//! Reliability data and ECE on the test split for every trained method.

use floodlib_core::metrics::{ece, CalibrationReport};
use serde::{Deserialize, Serialize};

use crate::commands::evaluate::load_checkpoint;
use crate::config::ExperimentConfig;
use crate::output::write_json;
use crate::prep::prepare;
use crate::stats::SeedStat;
use crate::{CliError, Result};

pub fn report_name(method: &str) -> String {
    format!("calibration_{method}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCalibration {
    pub seed: u64,
    pub method: String,
    pub n: usize,
    pub report: CalibrationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub method: String,
    pub ece: SeedStat,
    /// Per-seed report files, relative to the experiment directory.
    pub reports: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub command: String,
    pub config: ExperimentConfig,
    pub bins: usize,
    /// Ascending mean ECE; ties keep config order.
    pub methods: Vec<CalibrationEntry>,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<MethodCalibration>> {
    let splits = prepare(cfg.data()?, seed)?;
    let Some(labels) = splits.test.labels().classes() else {
        return Err(CliError::Config(
            "calibration needs a classification dataset".into(),
        ));
    };
    let mut out = Vec::new();
    for m in cfg.methods() {
        let label = m.label();
        let model = load_checkpoint(cfg, seed, &label)?;
        let probs = model.forward(splits.test.features())?;
        let rep = MethodCalibration {
            seed,
            method: label.clone(),
            n: labels.len(),
            report: ece(&probs, labels, cfg.calibration.bins)?,
        };
        write_json(&cfg.seed_dir(seed).join(report_name(&label)), &rep)?;
        out.push(rep);
    }
    Ok(out)
}

pub fn run(cfg: &ExperimentConfig) -> Result<CalibrationSummary> {
    if cfg.is_regression() {
        return Err(CliError::Config(
            "calibration needs a classification dataset".into(),
        ));
    }
    let per_seed = crate::par::par_map(&cfg.seeds, |&s| run_seed(cfg, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut methods: Vec<CalibrationEntry> = cfg
        .methods()
        .iter()
        .enumerate()
        .map(|(i, m)| CalibrationEntry {
            method: m.label(),
            ece: SeedStat::from_values(per_seed.iter().map(|s| s[i].report.ece).collect()),
            reports: cfg
                .seeds
                .iter()
                .map(|s| format!("{s}/{}", report_name(&m.label())))
                .collect(),
        })
        .collect();
    methods.sort_by(|a, b| a.ece.mean.total_cmp(&b.ece.mean));
    let summary = CalibrationSummary {
        command: "calibrate".into(),
        config: cfg.clone(),
        bins: cfg.calibration.bins,
        methods,
    };
    write_json(&cfg.exp_dir().join("calibration_summary.json"), &summary)?;
    Ok(summary)
}
