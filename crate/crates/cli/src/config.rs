//! Experiment configuration: one JSON document per experiment.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use floodlib_core::data::ToyGaussianConfig;
use floodlib_core::{AuxConfig, AuxMode, FloodConfig, FloodVariant, Task, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::proposition::PropositionConfig;
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Methods trained side by side; defaults to a single unregularized run.
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub aux: Option<AuxSpec>,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub ablation: AblationSpec,
    #[serde(default)]
    pub proposition: Option<PropositionConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub source: DataSource,
    /// Share of the non-test data used for training; the rest validates.
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    /// Applied to the training split only.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

fn default_train_frac() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Dataset A is split into train/val, dataset B is the test set. The
    /// generator seed is offset by the run seed.
    ToyGaussian(ToyGaussianConfig),
    Csv(CsvSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvTask {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
    pub target: String,
    pub task: CsvTask,
    #[serde(default)]
    pub num_classes: Option<usize>,
    /// Separate test file; without one, `test_frac` of the rows are held out.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
}

fn default_test_frac() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    FlipLabels { percent: f64 },
    SkewNormal { shape: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![64] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub variant: FloodVariant,
    /// Label used in file names and reports; defaults to the variant name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub b: f64,
    /// Candidate flood levels, selected on validation performance.
    #[serde(default)]
    pub b_grid: Vec<f64>,
    /// Defaults to `aux.gamma`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
}

impl MethodSpec {
    pub fn unregularized() -> Self {
        Self {
            variant: FloodVariant::Unregularized,
            name: None,
            b: 0.0,
            b_grid: vec![],
            gamma: None,
            gamma_grid: vec![],
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.variant.name().to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxSpec {
    pub n_folds: usize,
    pub mode: AuxMode,
    /// Defaults to the main model's hidden layers.
    pub hidden: Option<Vec<usize>>,
    pub finetune_last_layers: usize,
    pub gamma: f64,
    /// Defaults to the main training config.
    pub train: Option<TrainConfig>,
    pub finetune: Option<TrainConfig>,
    /// Use this table instead of one produced by `train-aux`.
    pub flood_table: Option<PathBuf>,
}

impl Default for AuxSpec {
    fn default() -> Self {
        Self {
            n_folds: 5,
            mode: AuxMode::Scratch,
            hidden: None,
            finetune_last_layers: 1,
            gamma: 0.0,
            train: None,
            finetune: None,
            flood_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    pub bins: usize,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self { bins: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    /// Fine-tune variants to compare, as numbers of trailing layers.
    pub finetune_layers: Vec<usize>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            finetune_layers: vec![1],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(DataSpec {
            source: DataSource::Csv(csv),
            ..
        }) = &mut self.data
        {
            fix(&mut csv.path);
            if let Some(t) = &mut csv.test_path {
                fix(t);
            }
        }
        if let Some(t) = self.aux.as_mut().and_then(|a| a.flood_table.as_mut()) {
            fix(t);
        }
    }

    pub fn methods(&self) -> Vec<MethodSpec> {
        if self.methods.is_empty() {
            vec![MethodSpec::unregularized()]
        } else {
            self.methods.clone()
        }
    }

    pub fn exp_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.exp_dir().join(seed.to_string())
    }

    pub fn data(&self) -> Result<&DataSpec> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a `data` section".into()))
    }

    pub fn aux(&self) -> Result<&AuxSpec> {
        self.aux
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs an `aux` section".into()))
    }

    /// Task implied by the data section, when it can be known up front.
    pub fn task_hint(&self) -> Option<Task> {
        match &self.data.as_ref()?.source {
            DataSource::ToyGaussian(t) => Some(Task::Classification(t.num_classes)),
            DataSource::Csv(c) => match c.task {
                CsvTask::Regression => Some(Task::Regression),
                CsvTask::Classification => c.num_classes.map(Task::Classification),
            },
        }
    }

    pub fn is_regression(&self) -> bool {
        matches!(&self.data, Some(DataSpec { source: DataSource::Csv(c), .. }) if c.task == CsvTask::Regression)
    }

    /// Core auxiliary config for one run seed.
    pub fn aux_config(&self, seed: u64) -> Result<AuxConfig> {
        let a = self.aux()?;
        Ok(AuxConfig {
            n_folds: a.n_folds,
            mode: a.mode,
            hidden: a.hidden.clone().unwrap_or_else(|| self.model.hidden.clone()),
            finetune_last_layers: a.finetune_last_layers,
            gamma: a.gamma,
            train: a.train.clone().unwrap_or_else(|| self.train.clone()),
            finetune: a.finetune.clone(),
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == ".." {
            return bad(format!("invalid experiment name {:?}", self.name));
        }
        if self.seeds.is_empty() {
            return bad("`seeds` must not be empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("`seeds` contains duplicates".into());
        }
        if self.model.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        self.train.validate()?;
        if let Some(d) = &self.data {
            if !(d.train_frac > 0.0 && d.train_frac <= 1.0) {
                return bad(format!(
                    "data.train_frac must lie in (0, 1], got {}",
                    d.train_frac
                ));
            }
            match &d.source {
                DataSource::ToyGaussian(t) => t.validate()?,
                DataSource::Csv(c) => {
                    if c.test_path.is_none() && !(c.test_frac > 0.0 && c.test_frac < 1.0) {
                        return bad(format!("csv.test_frac must lie in (0, 1), got {}", c.test_frac));
                    }
                }
            }
            match (&d.noise, self.is_regression()) {
                (Some(NoiseSpec::FlipLabels { .. }), true) => {
                    return bad("label flipping needs a classification dataset".into())
                }
                (Some(NoiseSpec::SkewNormal { .. }), false) => {
                    return bad("skew-normal noise needs a regression dataset".into())
                }
                _ => {}
            }
        }

        let methods = self.methods();
        let mut labels = BTreeSet::new();
        for m in &methods {
            let label = m.label();
            if label.is_empty()
                || !label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return bad(format!("method name {label:?} must be alphanumeric, `_` or `-`"));
            }
            if !labels.insert(label.clone()) {
                return bad(format!("method name {label:?} appears twice"));
            }
            let gamma = m.gamma.or(self.aux.as_ref().map(|a| a.gamma)).unwrap_or(0.0);
            FloodConfig {
                variant: m.variant,
                b: m.b,
                gamma,
            }
            .validate()?;
            let flood_like = matches!(m.variant, FloodVariant::Flood | FloodVariant::IFlood);
            if !m.b_grid.is_empty() && !flood_like {
                return bad(format!("method {label}: b_grid only applies to flood and iflood"));
            }
            if m.b_grid.iter().any(|b| !b.is_finite()) {
                return bad(format!("method {label}: b_grid values must be finite"));
            }
            if m.variant == FloodVariant::AdaFlood {
                if m.gamma_grid
                    .iter()
                    .chain(&m.gamma)
                    .any(|g| !(0.0..=1.0).contains(g))
                {
                    return bad(format!("method {label}: gamma values must lie in [0, 1]"));
                }
                let Some(aux) = &self.aux else {
                    return bad(format!(
                        "method {label} is adaflood but there is no `aux` section (auxiliary settings or a flood_table path)"
                    ));
                };
                if aux.flood_table.is_some() && (!m.gamma_grid.is_empty() || m.gamma.is_some()) {
                    return bad(format!(
                        "method {label}: a fixed aux.flood_table cannot be re-corrected; drop gamma/gamma_grid"
                    ));
                }
            } else if !m.gamma_grid.is_empty() || m.gamma.is_some() {
                return bad(format!("method {label}: gamma only applies to adaflood"));
            }
        }

        if let Some(a) = &self.aux {
            if a.flood_table.is_none() {
                let cfg = self.aux_config(0)?;
                cfg.validate()?;
            }
        }
        if self.calibration.bins == 0 {
            return bad("calibration.bins must be at least 1".into());
        }
        if self.ablation.finetune_layers.is_empty() {
            return bad("ablation.finetune_layers must not be empty".into());
        }
        if let Some(p) = &self.proposition {
            p.validate()?;
        }
        Ok(())
    }
}
