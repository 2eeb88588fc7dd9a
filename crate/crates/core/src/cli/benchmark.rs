//! `benchmark`: the ten-method comparison with leave-one-run-out folds.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::io::write_json;
use super::manifest::{anchor, parse_config, RunManifest};
use crate::design::{build_drift, build_run_designs, concat_runs, DesignMatrix, NuisanceMatrix};
use crate::error::{invalid, Result};
use crate::estimators::{fit_volume, MethodSpec, RankOneConfig, VolumeConfig, VolumeDesign};
use crate::eval::{
    default_lambda_grid, encoding_score, identify_images, ridge_gcv_centered, EncodingProblem,
    ScoreReport,
};
use crate::hrf_basis::{make_basis, make_fir_basis, BasisKind, BasisSet, DEFAULT_HRF_DURATION};
use crate::synth::{generate_dataset, Schedule, SynthConfig, SynthDataset};

pub const ENCODING_JSON: &str = "encoding.json";
pub const ENCODING_CSV: &str = "encoding.csv";
pub const IDENTIFICATION_JSON: &str = "identification.json";
pub const IDENTIFICATION_CSV: &str = "identification.csv";
pub const PARTIAL_FILE: &str = "partial.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_voxels: usize,
    /// Every run is held out once; betas are linear in the condition features.
    pub data: SynthConfig,
    pub fir_length: usize,
    /// Polynomial drift order used by the estimators.
    pub drift_order: usize,
    pub qr: bool,
    pub lambda_grid: Vec<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_voxels: 30,
            data: SynthConfig {
                n_scans: 300,
                tr: 1.0,
                n_runs: 5,
                n_conditions: 8,
                events_per_condition: 4,
                schedule: Schedule::Random,
                peak_range: Some([3.5, 6.5]),
                n_features: 6,
                noise_sigma: 1.0,
                ..SynthConfig::default()
            },
            fir_length: 20,
            drift_order: 3,
            qr: true,
            lambda_grid: default_lambda_grid(),
        }
    }
}

impl BenchmarkConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_config(text)?;
        cfg.validate().map_err(|e| anchor(text, e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.n_voxels == 0 {
            return invalid("n_voxels must be positive");
        }
        if self.data.n_runs < 2 {
            return invalid("n_runs must be at least 2 for leave-one-run-out folds");
        }
        if self.data.n_conditions < 2 {
            return invalid("n_conditions must be at least 2 to identify images");
        }
        if self.data.n_features == 0 {
            return invalid("n_features must be positive: encoding predicts betas from features");
        }
        if self.fir_length < 2 {
            return invalid("fir_length must be at least 2");
        }
        if self.lambda_grid.is_empty()
            || self
                .lambda_grid
                .iter()
                .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            return invalid("lambda_grid must hold positive values");
        }
        Ok(())
    }
}

/// Scores of one method on one held-out run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub method: String,
    pub fold: usize,
    /// Mean encoding score over voxels.
    pub encoding: f64,
    pub identification: f64,
    pub undefined_scores: usize,
    pub failed_voxels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub encoding: ScoreReport,
    pub identification: ScoreReport,
    pub folds: Vec<FoldScore>,
    /// Seconds per method, summed over folds. Not part of the report files.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchmarkOutcome {
    Complete(BenchmarkResult),
    /// A method failed; `completed` holds everything scored before it.
    Partial {
        completed: Vec<FoldScore>,
        failed: String,
        error: String,
    },
}

/// Per-basis designs for every run, before condition selection.
struct RunDesigns {
    basis: BasisSet,
    runs: Vec<DesignMatrix>,
}

struct Context<'a> {
    config: &'a BenchmarkConfig,
    data: SynthDataset,
    features: DMatrix<f64>,
    bases: BTreeMap<&'static str, RunDesigns>,
    /// FIR run designs keyed by response length, for synthesizing predictions.
    fir: BTreeMap<usize, Vec<DesignMatrix>>,
    drift: NuisanceMatrix,
    volume: VolumeConfig,
}

impl Context<'_> {
    fn run_conditions(&self, run: usize) -> Vec<usize> {
        let k = self.config.data.n_conditions;
        (run * k..(run + 1) * k).collect()
    }

    fn run_rows(&self, run: usize) -> std::ops::Range<usize> {
        let n = self.config.data.n_scans;
        run * n..(run + 1) * n
    }

    fn score(&self, spec: MethodSpec, fold: usize) -> Result<FoldScore> {
        let cfg = &self.config.data;
        let designs = &self.bases[spec.basis.name()];
        let train_runs: Vec<usize> = (0..cfg.n_runs).filter(|r| *r != fold).collect();
        let train_conds: Vec<usize> = train_runs
            .iter()
            .flat_map(|r| self.run_conditions(*r))
            .collect();
        let test_conds = self.run_conditions(fold);

        let x: Vec<DesignMatrix> = train_runs
            .iter()
            .map(|r| designs.runs[*r].select_conditions(&train_conds))
            .collect();
        let z = vec![self.drift.clone(); train_runs.len()];
        let (design, drift) = concat_runs(&x, &z)?;
        let mut y = DMatrix::zeros(design.n_scans(), self.data.y.ncols());
        for (slot, r) in train_runs.iter().enumerate() {
            let n = cfg.n_scans;
            y.rows_mut(slot * n, n)
                .copy_from(&self.data.y.rows_range(self.run_rows(*r)));
        }
        let inputs = VolumeDesign {
            design,
            drift,
            basis: designs.basis.clone(),
        };
        let train = fit_volume(&y, spec, &inputs, &self.volume)?;

        let test_y = self.data.y.rows_range(self.run_rows(fold)).clone_owned();
        let select = |m: &DMatrix<f64>, rows: &[usize]| {
            DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
        };
        let train_features = select(&self.features, &train_conds);
        let test_features = select(&self.features, &test_conds);
        let test_design = self.fir[&designs.basis.len()][fold].select_conditions(&test_conds);
        let enc = encoding_score(&EncodingProblem {
            train_betas: &train.betas.matrix,
            train_features: &train_features,
            test_features: &test_features,
            test_design: &test_design,
            hrfs: &train.hrfs,
            test_y: &test_y,
            nuisance: Some(&self.drift),
            lambda_grid: &self.config.lambda_grid,
        })?;

        // measured patterns: the same estimator on the held-out run alone
        let held_out = VolumeDesign {
            design: designs.runs[fold].select_conditions(&test_conds),
            drift: self.drift.clone(),
            basis: designs.basis.clone(),
        };
        let measured = fit_volume(&test_y, spec, &held_out, &self.volume)?;
        let model = ridge_gcv_centered(
            &train_features,
            &train.betas.matrix.transpose(),
            &self.config.lambda_grid,
        )?;
        let predicted = model.predict(&test_features)?;
        let id = identify_images(&predicted, &measured.betas.matrix.transpose())?;

        Ok(FoldScore {
            method: spec.to_string(),
            fold,
            encoding: enc.mean(),
            identification: id.accuracy,
            undefined_scores: enc.undefined,
            failed_voxels: train
                .diagnostics
                .iter()
                .filter(|d| d.error.is_some())
                .count(),
        })
    }
}

/// Simulates the configured data and scores every method of the grid on
/// every held-out run. Results do not depend on `jobs`.
pub fn run_benchmark(config: &BenchmarkConfig, jobs: usize) -> Result<BenchmarkOutcome> {
    config.validate()?;
    let data = generate_dataset(&config.data, config.n_voxels)?;
    let features = data
        .features
        .clone()
        .expect("features are enabled by validation");
    let cfg = &config.data;
    let mut bases = BTreeMap::new();
    let mut fir = BTreeMap::new();
    for kind in [BasisKind::Fixed, BasisKind::ThreeHrf, BasisKind::Fir] {
        let basis = make_basis(kind, cfg.tr, DEFAULT_HRF_DURATION, config.fir_length)?;
        let runs = build_run_designs(&data.events, &basis, cfg.tr, cfg.n_scans, cfg.n_runs)?;
        if let std::collections::btree_map::Entry::Vacant(e) = fir.entry(basis.len()) {
            let grid = make_fir_basis(basis.len(), basis.dt)?;
            e.insert(build_run_designs(
                &data.events,
                &grid,
                cfg.tr,
                cfg.n_scans,
                cfg.n_runs,
            )?);
        }
        bases.insert(kind.name(), RunDesigns { basis, runs });
    }
    let ctx = Context {
        config,
        data,
        features,
        bases,
        fir,
        drift: build_drift(cfg.n_scans, config.drift_order)?,
        volume: VolumeConfig {
            rank_one: RankOneConfig {
                qr: config.qr,
                ..Default::default()
            },
            jobs,
        },
    };

    let grid = MethodSpec::grid();
    let mut folds = Vec::with_capacity(grid.len() * cfg.n_runs);
    let mut timings = BTreeMap::new();
    for fold in 0..cfg.n_runs {
        for spec in &grid {
            let start = Instant::now();
            match ctx.score(*spec, fold) {
                Ok(s) => folds.push(s),
                Err(e) => {
                    return Ok(BenchmarkOutcome::Partial {
                        completed: folds,
                        failed: format!("{spec} (fold {fold})"),
                        error: e.to_string(),
                    })
                }
            }
            *timings.entry(spec.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        }
    }

    let table = |pick: fn(&FoldScore) -> f64| -> Vec<(String, Vec<f64>)> {
        grid.iter()
            .map(|spec| {
                let name = spec.to_string();
                let scores = folds
                    .iter()
                    .filter(|f| f.method == name)
                    .map(pick)
                    .collect();
                (name, scores)
            })
            .collect()
    };
    let encoding = ScoreReport::new("encoding", table(|f| f.encoding))?;
    let identification = ScoreReport::new("identification", table(|f| f.identification))?;
    Ok(BenchmarkOutcome::Complete(BenchmarkResult {
        encoding,
        identification,
        folds,
        timings,
    }))
}

#[derive(Serialize)]
struct PartialReport<'a> {
    failed: &'a str,
    error: &'a str,
    completed: &'a [FoldScore],
}

/// Runs the benchmark and writes the report files. Returns `false` when a
/// method failed and only `partial.json` was written.
pub fn benchmark(config: &BenchmarkConfig, out: &Path, jobs: usize) -> Result<(bool, RunManifest)> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let outcome = run_benchmark(config, jobs)?;
    let mut manifest = RunManifest::new("benchmark", config, Some(config.data.seed))?;
    manifest.method_grid = MethodSpec::grid().iter().map(|s| s.to_string()).collect();
    let complete = match &outcome {
        BenchmarkOutcome::Complete(r) => {
            fs::write(out.join(ENCODING_JSON), r.encoding.to_json()? + "\n")?;
            fs::write(
                out.join(IDENTIFICATION_JSON),
                r.identification.to_json()? + "\n",
            )?;
            r.encoding
                .write_csv(fs::File::create(out.join(ENCODING_CSV))?)?;
            r.identification
                .write_csv(fs::File::create(out.join(IDENTIFICATION_CSV))?)?;
            for name in [
                ENCODING_JSON,
                ENCODING_CSV,
                IDENTIFICATION_JSON,
                IDENTIFICATION_CSV,
            ] {
                manifest.record_output(out, name)?;
            }
            manifest
                .timings
                .extend(r.timings.iter().map(|(k, v)| (format!("fit/{k}"), *v)));
            true
        }
        BenchmarkOutcome::Partial {
            completed,
            failed,
            error,
        } => {
            write_json(
                &out.join(PARTIAL_FILE),
                &PartialReport {
                    failed,
                    error,
                    completed,
                },
            )?;
            manifest.record_output(out, PARTIAL_FILE)?;
            false
        }
    };
    manifest
        .timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok((complete, manifest))
}
