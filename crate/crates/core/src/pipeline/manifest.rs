use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub bce: f64,
    pub iou: f64,
    pub total: f64,
}

/// Provenance written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub config: RunConfig,
    #[serde(default)]
    pub frozen_checksums_before: BTreeMap<String, String>,
    #[serde(default)]
    pub frozen_checksums_after: BTreeMap<String, String>,
    #[serde(default)]
    pub loss_curve: Vec<LossRecord>,
    /// Output name → path relative to the run directory.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub details: serde_json::Value,
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical invocations.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            frozen_checksums_before: BTreeMap::new(),
            frozen_checksums_after: BTreeMap::new(),
            loss_curve: Vec::new(),
            outputs: BTreeMap::new(),
            details: serde_json::Value::Null,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn write_loss_csv(path: &Path, losses: &[LossRecord]) -> Result<()> {
    let mut text = String::from("step,bce,iou,total\n");
    for r in losses {
        text.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            r.step, r.bce, r.iou, r.total
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |line: usize| Error::Corrupt {
        path: path.to_path_buf(),
        message: format!("bad loss row at line {line}"),
    };
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(corrupt(i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| corrupt(i + 1));
            Ok(LossRecord {
                step: f[0].parse().map_err(|_| corrupt(i + 1))?,
                bce: num(f[1])?,
                iou: num(f[2])?,
                total: num(f[3])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let rows = vec![
            LossRecord {
                step: 1,
                bce: 0.1 + 0.2,
                iou: 1.0 / 3.0,
                total: 0.3 + 1.0 / 3.0,
            },
            LossRecord {
                step: 2,
                bce: 1e-9,
                iou: 0.0,
                total: 1e-9,
            },
        ];
        write_loss_csv(&path, &rows).unwrap();
        assert_eq!(read_loss_csv(&path).unwrap(), rows);
    }
}
