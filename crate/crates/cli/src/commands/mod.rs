//! One module per subcommand. Each `run` takes a validated config, writes
//! its outputs under `<out_dir>/<name>/` and returns the summary it wrote.

pub mod ablate;
pub mod calibrate;
pub mod evaluate;
pub mod gen_data;
pub mod proposition_check;
pub mod train;
pub mod train_aux;

use crate::config::ExperimentConfig;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    TrainAux,
    Train,
    Evaluate,
    Calibrate,
    PropositionCheck,
    AblateFinetune,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainAux => "train-aux",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Calibrate => "calibrate",
            Command::PropositionCheck => "proposition-check",
            Command::AblateFinetune => "ablate-finetune",
        }
    }

    /// Runs the command; the returned path is the summary file.
    pub fn run(self, cfg: &ExperimentConfig) -> Result<std::path::PathBuf> {
        let dir = cfg.exp_dir();
        Ok(match self {
            Command::GenData => {
                gen_data::run(cfg)?;
                dir.join("gen_data_summary.json")
            }
            Command::TrainAux => {
                train_aux::run(cfg)?;
                dir.join("train_aux_summary.json")
            }
            Command::Train => {
                train::run(cfg)?;
                dir.join(train::SUMMARY)
            }
            Command::Evaluate => {
                evaluate::run(cfg)?;
                dir.join("evaluation_summary.json")
            }
            Command::Calibrate => {
                calibrate::run(cfg)?;
                dir.join("calibration_summary.json")
            }
            Command::PropositionCheck => {
                proposition_check::run(cfg)?;
                dir.join("proposition_summary.json")
            }
            Command::AblateFinetune => {
                ablate::run(cfg)?;
                dir.join("ablation_summary.json")
            }
        })
    }
}
