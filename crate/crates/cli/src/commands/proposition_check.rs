//! Runs the proposition check once per seed.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::write_json;
use crate::proposition::{failures, run_check, PropositionReport};
use crate::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropositionSummary {
    pub command: String,
    pub config: ExperimentConfig,
    pub reports: Vec<PropositionReport>,
    pub passed: bool,
}

pub fn run(cfg: &ExperimentConfig) -> Result<PropositionSummary> {
    let pcfg = cfg.proposition.clone().unwrap_or_default();
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let r = run_check(&pcfg, seed)?;
        write_json(&cfg.seed_dir(seed).join("proposition.json"), &r)?;
        reports.push(r);
    }
    let failed = failures(&reports);
    let summary = PropositionSummary {
        command: "proposition-check".into(),
        config: cfg.clone(),
        passed: failed.is_empty(),
        reports,
    };
    write_json(&cfg.exp_dir().join("proposition_summary.json"), &summary)?;
    if !failed.is_empty() {
        return Err(CliError::CheckFailed(format!("{failed:?}")));
    }
    Ok(summary)
}
