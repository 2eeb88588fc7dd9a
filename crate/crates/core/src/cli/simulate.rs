//! `simulate`: write a synthetic dataset to a directory.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::io::{write_json, write_matrix};
use super::manifest::{anchor, parse_config, RunManifest};
use crate::error::{invalid, Result};
use crate::synth::{generate_dataset, SynthConfig, SynthDataset};

pub const BOLD_BIN: &str = "bold.bin";
pub const BOLD_CSV: &str = "bold.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_voxels: usize,
    pub data: SynthConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_voxels: 10,
            data: SynthConfig::default(),
        }
    }
}

impl SimulateConfig {
    /// Parses and validates, reporting problems against lines of `text`.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_config(text)?;
        cfg.validate().map_err(|e| anchor(text, e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_voxels == 0 {
            return invalid("n_voxels must be positive");
        }
        self.data.validate()
    }
}

/// Ground truth as written next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub tr: f64,
    pub hrf_dt: f64,
    /// One row per voxel.
    pub betas: Vec<Vec<f64>>,
    /// One row per voxel, unit peak.
    pub hrfs: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Truth {
    pub fn from_dataset(config: &SynthConfig, d: &SynthDataset) -> Self {
        Self {
            tr: config.tr,
            hrf_dt: config.hrf_dt(),
            betas: d.truths.iter().map(|t| t.beta.clone()).collect(),
            hrfs: d.truths.iter().map(|t| t.hrf.samples.clone()).collect(),
            features: d.features.as_ref().map(rows),
        }
    }
}

/// Generates the dataset and writes the signal, events, truth and manifest
/// into `dir`.
pub fn simulate(config: &SimulateConfig, dir: &Path, csv: bool) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(dir)?;
    let start = Instant::now();
    let data = generate_dataset(&config.data, config.n_voxels)?;
    let generated = start.elapsed().as_secs_f64();

    let bold = if csv { BOLD_CSV } else { BOLD_BIN };
    write_matrix(&dir.join(bold), &data.y, csv)?;
    let mut events = Vec::new();
    data.events.write_csv(&mut events)?;
    fs::write(dir.join(EVENTS_FILE), events)?;
    write_json(
        &dir.join(TRUTH_FILE),
        &Truth::from_dataset(&config.data, &data),
    )?;

    let mut manifest = RunManifest::new("simulate", config, Some(config.data.seed))?;
    manifest.timings.insert("generate".into(), generated);
    manifest
        .timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    for name in [bold, EVENTS_FILE, TRUTH_FILE] {
        manifest.record_output(dir, name)?;
    }
    manifest.write(dir)?;
    Ok(manifest)
}
