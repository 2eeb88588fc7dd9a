//! `fit`: estimate betas and responses for every voxel of a dataset.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::io::{read_matrix, write_json, write_matrix};
use super::manifest::{RunManifest, MANIFEST_FILE};
use super::simulate::{BOLD_BIN, BOLD_CSV, EVENTS_FILE};
use crate::design::{build_drift, build_run_designs, concat_runs, EventTable};
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    fit_volume, Method, MethodSpec, RankOneConfig, VolumeConfig, VolumeDesign, VolumeFit,
    VoxelDiagnostics,
};
use crate::hrf_basis::{make_basis, BasisKind, DEFAULT_HRF_DURATION};

pub const BETAS_FILE: &str = "betas.csv";
pub const HRFS_FILE: &str = "hrfs.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: Method,
    pub basis: BasisKind,
    pub fir_length: usize,
    pub qr: bool,
    pub jobs: usize,
    pub drift_order: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            method: Method::R1glm,
            basis: BasisKind::ThreeHrf,
            fir_length: 20,
            qr: true,
            jobs: 0,
            drift_order: 3,
        }
    }
}

impl FitOptions {
    pub fn spec(&self) -> MethodSpec {
        MethodSpec::new(self.method, self.basis)
    }
}

/// Signal, events and acquisition layout of a dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `n x V`, runs stacked.
    pub y: DMatrix<f64>,
    pub events: EventTable,
    pub tr: f64,
    pub n_runs: usize,
}

impl Dataset {
    /// Reads `bold.bin` (or `bold.csv`) and `events.csv`. The TR comes from
    /// `tr` if given, else from the directory's simulate manifest.
    pub fn load(dir: &Path, tr: Option<f64>) -> Result<Self> {
        let bold = [BOLD_BIN, BOLD_CSV]
            .iter()
            .map(|f| dir.join(f))
            .find(|p| p.exists())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no {BOLD_BIN} or {BOLD_CSV} in {}", dir.display()))
            })?;
        let y = read_matrix(&bold)?;
        let events = EventTable::from_csv_path(&dir.join(EVENTS_FILE))?;
        let manifest = dir
            .join(MANIFEST_FILE)
            .exists()
            .then(|| RunManifest::read(dir))
            .transpose()?;
        let from_manifest = |key: &str| {
            manifest
                .as_ref()
                .and_then(|m| m.config["data"][key].as_f64())
        };
        let tr = match tr.or_else(|| from_manifest("tr")) {
            Some(tr) if tr > 0.0 && tr.is_finite() => tr,
            Some(tr) => return invalid(format!("tr must be positive, got {tr}")),
            None => return invalid("no TR given and no manifest to read it from"),
        };
        let n_runs = match from_manifest("n_runs") {
            Some(r) => r as usize,
            None => events
                .events()
                .iter()
                .map(|e| e.run.unwrap_or(0) + 1)
                .max()
                .unwrap_or(1),
        };
        if n_runs == 0 || y.nrows() % n_runs != 0 {
            return invalid(format!(
                "{} scans do not split into {n_runs} equal runs",
                y.nrows()
            ));
        }
        Ok(Self {
            y,
            events,
            tr,
            n_runs,
        })
    }

    pub fn scans_per_run(&self) -> usize {
        self.y.nrows() / self.n_runs
    }

    /// Design, block-diagonal drift and basis for `options`.
    pub fn volume_design(&self, options: &FitOptions) -> Result<VolumeDesign> {
        let basis = make_basis(
            options.basis,
            self.tr,
            DEFAULT_HRF_DURATION,
            options.fir_length,
        )?;
        let n = self.scans_per_run();
        let designs = build_run_designs(&self.events, &basis, self.tr, n, self.n_runs)?;
        let drifts = (0..self.n_runs)
            .map(|_| build_drift(n, options.drift_order))
            .collect::<Result<Vec<_>>>()?;
        let (design, drift) = concat_runs(&designs, &drifts)?;
        Ok(VolumeDesign {
            design,
            drift,
            basis,
        })
    }

    pub fn fit(&self, options: &FitOptions) -> Result<VolumeFit> {
        options.spec().validate()?;
        let inputs = self.volume_design(options)?;
        let config = VolumeConfig {
            rank_one: RankOneConfig {
                qr: options.qr,
                ..Default::default()
            },
            jobs: options.jobs,
        };
        fit_volume(&self.y, options.spec(), &inputs, &config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub n_voxels: usize,
    pub converged: usize,
    pub flagged: usize,
    pub failed: usize,
    pub wall_time_s: f64,
    pub voxels: Vec<VoxelDiagnostics>,
}

/// Fits the dataset in `data_dir` and writes betas, responses, diagnostics
/// and a manifest into `out`.
pub fn fit(
    data_dir: &Path,
    out: &Path,
    options: &FitOptions,
    tr: Option<f64>,
) -> Result<FitReport> {
    options.spec().validate()?;
    let dataset = Dataset::load(data_dir, tr)?;
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let result = dataset.fit(options)?;
    let wall = start.elapsed().as_secs_f64();

    write_matrix(&out.join(BETAS_FILE), &result.betas.matrix, true)?;
    write_matrix(&out.join(HRFS_FILE), &result.hrfs, true)?;
    let d = &result.diagnostics;
    let report = FitReport {
        method: options.spec().to_string(),
        n_voxels: d.len(),
        converged: d.iter().filter(|v| v.converged).count(),
        flagged: d.iter().filter(|v| v.flagged).count(),
        failed: d.iter().filter(|v| v.error.is_some()).count(),
        wall_time_s: wall,
        voxels: d.clone(),
    };
    write_json(&out.join(DIAGNOSTICS_FILE), &report)?;

    let mut manifest = RunManifest::new(
        "fit",
        &FitManifestConfig {
            options: *options,
            tr: dataset.tr,
        },
        None,
    )?;
    manifest.method_grid = vec![options.spec().to_string()];
    manifest.timings.insert("fit".into(), wall);
    for name in [BETAS_FILE, HRFS_FILE] {
        manifest.record_output(out, name)?;
    }
    manifest.write(out)?;
    Ok(report)
}

#[derive(Serialize)]
struct FitManifestConfig {
    #[serde(flatten)]
    options: FitOptions,
    tr: f64,
}
