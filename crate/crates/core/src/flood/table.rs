//! Persisted per-sample flood levels.
//!
//! On disk a table is a CSV `sample_id,theta` plus a JSON sidecar with the
//! metadata of the auxiliary run that produced it.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auxiliary::AuxMode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub n_folds: usize,
    pub mode: AuxMode,
    pub gamma: f64,
    pub seed: u64,
    /// sha256 of each fold checkpoint, in fold order.
    #[serde(default)]
    pub aux_checkpoint_hashes: Vec<String>,
}

/// Immutable map from sample ID to its flood level.
#[derive(Debug, Clone, PartialEq)]
pub struct FloodTable {
    theta: BTreeMap<u64, f64>,
    created_by: TableProvenance,
}

impl FloodTable {
    pub fn new(theta: BTreeMap<u64, f64>, created_by: TableProvenance) -> Result<Self> {
        if let Some((id, t)) = theta.iter().find(|(_, t)| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Validation(format!(
                "flood level for sample {id} must be finite and nonnegative, got {t}"
            )));
        }
        Ok(Self { theta, created_by })
    }

    /// A table with the same level for every id.
    pub fn constant(ids: &[u64], level: f64, created_by: TableProvenance) -> Result<Self> {
        Self::new(ids.iter().map(|&i| (i, level)).collect(), created_by)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<f64> {
        self.theta.get(&id).copied()
    }

    pub fn lookup(&self, ids: &[u64]) -> Result<Vec<f64>> {
        ids.iter()
            .map(|&id| self.get(id).ok_or(Error::MissingTheta(id)))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.theta.iter().map(|(&k, &v)| (k, v))
    }

    pub fn ids(&self) -> Vec<u64> {
        self.theta.keys().copied().collect()
    }

    /// Levels in ascending sample-ID order.
    pub fn values(&self) -> Vec<f64> {
        self.theta.values().copied().collect()
    }

    pub fn mean(&self) -> f64 {
        self.theta.values().sum::<f64>() / self.theta.len().max(1) as f64
    }

    pub fn created_by(&self) -> &TableProvenance {
        &self.created_by
    }

    /// Checks that every id in `ids` has a level.
    pub fn check_covers(&self, ids: &[u64]) -> Result<()> {
        match ids.iter().find(|id| !self.theta.contains_key(id)) {
            Some(&id) => Err(Error::MissingTheta(id)),
            None => Ok(()),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sample_id", "theta"])?;
        for (id, t) in &self.theta {
            w.write_record([id.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_csv<R: Read>(reader: R, created_by: TableProvenance) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() != 2 || &header[0] != "sample_id" || &header[1] != "theta" {
            return Err(Error::Schema(
                "flood table header must be `sample_id,theta`".into(),
            ));
        }
        let mut theta = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |column: &str, message: String| Error::Parse {
                row: i + 2,
                column: column.into(),
                message,
            };
            let id: u64 = rec[0]
                .parse()
                .map_err(|e| parse_err("sample_id", format!("{e}")))?;
            let t: f64 = rec[1].parse().map_err(|e| parse_err("theta", format!("{e}")))?;
            if theta.insert(id, t).is_some() {
                return Err(Error::Validation(format!(
                    "sample {id} appears twice in flood table"
                )));
            }
        }
        Self::new(theta, created_by)
    }

    /// sha256 of the CSV serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_bytes()))
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the CSV and its JSON sidecar next to it, creating the parent
    /// directory if needed.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(csv_path, self.to_csv_bytes())?;
        let mut json = serde_json::to_vec_pretty(&self.created_by)?;
        json.push(b'\n');
        std::fs::write(Self::sidecar_path(csv_path), json)?;
        Ok(())
    }

    pub fn load(csv_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let sidecar = std::fs::read(Self::sidecar_path(csv_path))?;
        let created_by: TableProvenance = serde_json::from_slice(&sidecar)?;
        let file = std::fs::File::open(csv_path)?;
        Self::read_csv(file, created_by)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> TableProvenance {
        TableProvenance {
            n_folds: 2,
            mode: AuxMode::Scratch,
            gamma: 0.5,
            seed: 1,
            aux_checkpoint_hashes: vec![],
        }
    }

    #[test]
    fn rejects_negative_and_nonfinite() {
        let t: BTreeMap<u64, f64> = [(1, -0.1)].into();
        assert!(FloodTable::new(t, prov()).is_err());
        let t: BTreeMap<u64, f64> = [(1, f64::INFINITY)].into();
        assert!(FloodTable::new(t, prov()).is_err());
    }

    #[test]
    fn lookup_reports_missing_id() {
        let t = FloodTable::constant(&[1, 2, 3], 0.2, prov()).unwrap();
        assert_eq!(t.lookup(&[3, 1]).unwrap(), vec![0.2, 0.2]);
        assert!(matches!(t.lookup(&[4]), Err(Error::MissingTheta(4))));
    }

    #[test]
    fn csv_round_trip_and_stable_hash() {
        let t: BTreeMap<u64, f64> = [(5, 0.1 + 0.2), (2, 1e-300), (9, 3.0)].into();
        let table = FloodTable::new(t, prov()).unwrap();
        let bytes = table.to_csv_bytes();
        assert!(bytes.starts_with(b"sample_id,theta\n2,"));
        let back = FloodTable::read_csv(bytes.as_slice(), prov()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.content_hash(), table.content_hash());
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flood_table.csv");
        let table = FloodTable::constant(&[0, 1], 0.7, prov()).unwrap();
        table.save(&path).unwrap();
        assert!(dir.path().join("flood_table.json").exists());
        assert_eq!(FloodTable::load(&path).unwrap(), table);
    }
}
