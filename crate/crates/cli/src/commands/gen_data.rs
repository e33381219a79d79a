//! Materializes the prepared splits as CSV files with a hash manifest.

use std::collections::BTreeMap;

use floodlib_core::data::write_csv;
use floodlib_core::Dataset;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{sha256_hex, write_bytes, write_json};
use crate::par::par_map;
use crate::prep::prepare;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub rows: usize,
    pub sha256: String,
    pub flags: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub seed: u64,
    pub files: BTreeMap<String, FileEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenDataSummary {
    pub command: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<DataManifest>,
}

fn csv_bytes(data: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(data, &mut buf)?;
    Ok(buf)
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<DataManifest> {
    let splits = prepare(cfg.data()?, seed)?;
    let mut sets: Vec<(&str, &Dataset)> = vec![
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
    ];
    if let Some((a, b)) = &splits.toy {
        sets.push(("toy_a", a));
        sets.push(("toy_b", b));
    }
    let dir = cfg.seed_dir(seed).join("data");
    let mut files = BTreeMap::new();
    for (name, data) in sets {
        let bytes = csv_bytes(data)?;
        let file = format!("{name}.csv");
        write_bytes(&dir.join(&file), &bytes)?;
        let mut flags = BTreeMap::new();
        for f in data.flags() {
            *flags.entry(f.as_str().to_owned()).or_insert(0) += 1;
        }
        files.insert(
            name.to_owned(),
            FileEntry {
                path: format!("data/{file}"),
                rows: data.len(),
                sha256: sha256_hex(&bytes),
                flags,
            },
        );
    }
    let manifest = DataManifest { seed, files };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn run(cfg: &ExperimentConfig) -> Result<GenDataSummary> {
    let seeds = par_map(&cfg.seeds, |&s| run_seed(cfg, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summary = GenDataSummary {
        command: "gen-data".into(),
        config: cfg.clone(),
        seeds,
    };
    write_json(&cfg.exp_dir().join("gen_data_summary.json"), &summary)?;
    Ok(summary)
}
