//! Synthetic BOLD data with known responses and activations.

mod savgol;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{
    build_drift, build_run_designs, concat_runs, DesignMatrix, Event, EventTable, NuisanceMatrix,
};
use crate::error::{invalid, Result};
use crate::estimators::{finalize, predicted_signal, VoxelFit};
use crate::hrf_basis::{
    grid_len, make_basis, make_fir_basis, max_abs, BasisKind, BasisSet, DoubleGamma,
};

pub use savgol::{savgol_detrend, savgol_smooth};

/// Ground-truth response shared by (or jittered across) voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrueHrf {
    Canonical,
    /// Double gamma with the given delays and unit dispersions.
    Delays {
        peak_delay: f64,
        undershoot_delay: f64,
    },
    /// `B c` for a basis built on the truth grid.
    Basis {
        basis: BasisKind,
        coefficients: Vec<f64>,
    },
}

/// How events are laid out in each run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Uniform onsets; responses may overlap.
    Random,
    /// One event per slot of one response length, so responses never overlap.
    Spaced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Scans per run.
    pub n_scans: usize,
    pub tr: f64,
    pub n_runs: usize,
    /// Conditions per run. Runs never share conditions.
    pub n_conditions: usize,
    /// Ignored by the spaced schedule, which fills every slot.
    pub events_per_condition: usize,
    pub schedule: Schedule,
    pub hrf: TrueHrf,
    /// Sampling step of the true response; defaults to the TR.
    pub hrf_dt: Option<f64>,
    pub hrf_duration: f64,
    /// Per-voxel time-to-peak interval in seconds (canonical and delay truths).
    pub peak_range: Option<[f64; 2]>,
    pub beta_range: [f64; 2],
    /// When positive, betas are a voxel-level mean activation (drawn from
    /// `beta_range`) plus a linear function of this many random features.
    pub n_features: usize,
    pub noise_sigma: f64,
    pub drift_order: usize,
    pub drift_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_scans: 200,
            tr: 1.0,
            n_runs: 1,
            n_conditions: 5,
            events_per_condition: 8,
            schedule: Schedule::Random,
            hrf: TrueHrf::Canonical,
            hrf_dt: None,
            hrf_duration: 32.0,
            peak_range: None,
            beta_range: [0.5, 2.0],
            n_features: 0,
            noise_sigma: 0.5,
            drift_order: 2,
            drift_amplitude: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn hrf_dt(&self) -> f64 {
        self.hrf_dt.unwrap_or(self.tr)
    }

    pub fn total_conditions(&self) -> usize {
        self.n_runs * self.n_conditions
    }

    pub fn total_scans(&self) -> usize {
        self.n_runs * self.n_scans
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tr > 0.0 && self.tr.is_finite()) {
            return invalid(format!("tr must be positive, got {}", self.tr));
        }
        if self.n_scans < 2 || self.n_runs == 0 || self.n_conditions == 0 {
            return invalid("n_scans >= 2, n_runs >= 1 and n_conditions >= 1 are required");
        }
        if let Some(dt) = self.hrf_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return invalid(format!("hrf_dt must be positive, got {dt}"));
            }
        }
        if !(self.hrf_duration >= 2.0 * self.hrf_dt()) {
            return invalid("hrf_duration must cover at least two samples");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            ));
        }
        if !(self.drift_amplitude >= 0.0 && self.drift_amplitude.is_finite()) {
            return invalid("drift_amplitude must be non-negative");
        }
        let [lo, hi] = self.beta_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return invalid("beta_range must be a non-decreasing pair");
        }
        if let Some([a, b]) = self.peak_range {
            if !(a > 0.0 && a <= b && b.is_finite()) {
                return invalid("peak_range must be an increasing pair of positive times");
            }
            if matches!(self.hrf, TrueHrf::Basis { .. }) {
                return invalid("peak_range needs a canonical or delay-parameterized truth");
            }
        }
        if self.drift_order >= self.n_scans {
            return invalid("drift_order must be below n_scans");
        }
        Ok(())
    }

    /// FIR basis on the truth grid.
    pub fn truth_grid(&self) -> Result<BasisSet> {
        let dt = self.hrf_dt();
        make_fir_basis(grid_len(dt, self.hrf_duration), dt)
    }
}

/// A simulated dataset: `y` is `total_scans x V`.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub y: DMatrix<f64>,
    pub truths: Vec<VoxelFit>,
    pub events: EventTable,
    /// `total_conditions x n_features`, when features were requested.
    pub features: Option<DMatrix<f64>>,
}

/// Shared, seed-determined parts of a dataset.
struct Shared {
    events: EventTable,
    features: Option<DMatrix<f64>>,
    grid: BasisSet,
    design: DesignMatrix,
    drift: NuisanceMatrix,
    base_shape: Vec<f64>,
    truth_basis: Option<(BasisSet, Vec<f64>)>,
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn schedule_events(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<EventTable> {
    let k = config.n_conditions;
    let acquisition = config.n_scans as f64 * config.tr;
    let span = config.hrf_duration;
    let mut events = Vec::new();
    for run in 0..config.n_runs {
        let first = run * k;
        match config.schedule {
            Schedule::Random => {
                let needed = k * config.events_per_condition;
                if needed == 0 {
                    return invalid("events_per_condition must be positive");
                }
                // at most one event per scan on average
                if needed > config.n_scans {
                    return invalid(format!(
                        "{needed} events per run do not fit into {} scans",
                        config.n_scans
                    ));
                }
                let latest = (acquisition - span).max(acquisition * 0.5);
                for c in 0..k {
                    for _ in 0..config.events_per_condition {
                        let onset = (rng.random_range(0.0..latest) / config.tr).round() * config.tr;
                        events.push(Event {
                            onset,
                            condition: first + c,
                            run: Some(run),
                        });
                    }
                }
            }
            Schedule::Spaced => {
                let gap = (span / config.tr).ceil() * config.tr;
                let slots = ((acquisition - span) / gap).floor() as usize + 1;
                if acquisition < span || slots < k {
                    return invalid(format!(
                        "{k} non-overlapping events of {span} s do not fit into {acquisition} s"
                    ));
                }
                for s in 0..slots {
                    let c = if s < k { s } else { rng.random_range(0..k) };
                    events.push(Event {
                        onset: s as f64 * gap,
                        condition: first + c,
                        run: Some(run),
                    });
                }
            }
        }
    }
    EventTable::new(events, config.total_conditions())
}

fn shared(config: &SynthConfig) -> Result<Shared> {
    config.validate()?;
    let mut rng = stream(config.seed, 0);
    let events = schedule_events(config, &mut rng)?;
    let features = (config.n_features > 0).then(|| {
        DMatrix::from_fn(config.total_conditions(), config.n_features, |_, _| {
            StandardNormal.sample(&mut rng)
        })
    });
    let grid = config.truth_grid()?;
    let designs = build_run_designs(&events, &grid, config.tr, config.n_scans, config.n_runs)?;
    let drifts = (0..config.n_runs)
        .map(|_| build_drift(config.n_scans, config.drift_order))
        .collect::<Result<Vec<_>>>()?;
    let (design, drift) = concat_runs(&designs, &drifts)?;
    let dt = config.hrf_dt();
    let len = grid.len();
    let (base_shape, truth_basis) = match &config.hrf {
        TrueHrf::Canonical => (DoubleGamma::canonical().sample(dt, len), None),
        TrueHrf::Delays {
            peak_delay,
            undershoot_delay,
        } => {
            let g = DoubleGamma {
                peak_delay: *peak_delay,
                undershoot_delay: *undershoot_delay,
                ..DoubleGamma::canonical()
            };
            (g.sample(dt, len), None)
        }
        TrueHrf::Basis {
            basis,
            coefficients,
        } => {
            let b = make_basis(*basis, dt, config.hrf_duration, len)?;
            if b.len() != len {
                return invalid("truth basis does not match the truth grid");
            }
            if coefficients.len() != b.size() {
                return invalid(format!(
                    "{} coefficients given for a basis of size {}",
                    coefficients.len(),
                    b.size()
                ));
            }
            let peak = max_abs(&b.reconstruct(coefficients).samples);
            if peak == 0.0 {
                return invalid("truth coefficients give a zero response");
            }
            let c: Vec<f64> = coefficients.iter().map(|v| v / peak).collect();
            (b.reconstruct(&c).samples, Some((b, c)))
        }
    };
    let base_shape = unit_peak(base_shape);
    Ok(Shared {
        events,
        features,
        grid,
        design,
        drift,
        base_shape,
        truth_basis,
    })
}

fn unit_peak(v: Vec<f64>) -> Vec<f64> {
    let peak = max_abs(&v);
    v.into_iter().map(|x| x / peak).collect()
}

fn voxel(config: &SynthConfig, sh: &Shared, index: usize) -> (DVector<f64>, VoxelFit) {
    let mut rng = stream(config.seed, index as u64 + 1);
    let k = config.total_conditions();
    let beta: Vec<f64> = match &sh.features {
        Some(f) => {
            let [lo, hi] = config.beta_range;
            let mean = if lo < hi {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            let p = f.ncols();
            let w = DVector::from_fn(p, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / (p as f64).sqrt()
            });
            (f * w).iter().map(|b| b + mean).collect()
        }
        None => {
            let [lo, hi] = config.beta_range;
            (0..k)
                .map(|_| {
                    if lo < hi {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                })
                .collect()
        }
    };
    let shape = match (config.peak_range, &config.hrf) {
        (Some([a, b]), hrf) => {
            let target = if a < b { rng.random_range(a..b) } else { a };
            let base = match hrf {
                TrueHrf::Delays {
                    peak_delay,
                    undershoot_delay,
                } => DoubleGamma {
                    peak_delay: *peak_delay,
                    undershoot_delay: *undershoot_delay,
                    ..DoubleGamma::canonical()
                },
                _ => DoubleGamma::canonical(),
            };
            // dilate time so the mode sits at `target`
            let s = target / (base.peak_delay - base.peak_dispersion);
            let g = DoubleGamma {
                peak_delay: base.peak_delay * s,
                undershoot_delay: base.undershoot_delay * s,
                peak_dispersion: base.peak_dispersion * s,
                undershoot_dispersion: base.undershoot_dispersion * s,
                ..base
            };
            unit_peak(g.sample(sh.grid.dt, sh.grid.len()))
        }
        (None, _) => sh.base_shape.clone(),
    };
    let truth = match &sh.truth_basis {
        Some((b, c)) if config.peak_range.is_none() => finalize(b, c.clone(), beta, vec![], None),
        _ => finalize(&sh.grid, shape, beta, vec![], None),
    };
    // the signal always goes through the truth grid
    let on_grid = if truth.h.len() == sh.grid.size() {
        truth.clone()
    } else {
        VoxelFit {
            h: truth.hrf.samples.clone(),
            ..truth.clone()
        }
    };
    let q = sh.drift.n_columns();
    let amp = config.drift_amplitude * (config.n_scans as f64).sqrt();
    let omega: Vec<f64> = (0..q).map(|_| rng.random_range(-amp..=amp)).collect();
    let mut y = predicted_signal(&sh.design, &on_grid)
        + &sh.drift.matrix * DVector::from_column_slice(&omega);
    if config.noise_sigma > 0.0 {
        for v in y.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += config.noise_sigma * e;
        }
    }
    (y, VoxelFit { omega, ..truth })
}

/// One voxel of signal, its truth, and the event table it was drawn with.
pub fn generate_voxel(config: &SynthConfig) -> Result<(DVector<f64>, VoxelFit, EventTable)> {
    let sh = shared(config)?;
    let (y, truth) = voxel(config, &sh, 0);
    Ok((y, truth, sh.events))
}

/// `n_voxels` voxels sharing one event schedule. Voxel `v` draws from its own
/// seed stream, so any voxel is reproducible on its own.
pub fn generate_dataset(config: &SynthConfig, n_voxels: usize) -> Result<SynthDataset> {
    if n_voxels == 0 {
        return invalid("at least one voxel is required");
    }
    let sh = shared(config)?;
    let mut y = DMatrix::zeros(config.total_scans(), n_voxels);
    let mut truths = Vec::with_capacity(n_voxels);
    for v in 0..n_voxels {
        let (yv, t) = voxel(config, &sh, v);
        y.set_column(v, &yv);
        truths.push(t);
    }
    Ok(SynthDataset {
        y,
        truths,
        events: sh.events,
        features: sh.features,
    })
}

/// The drift the generator used: block-diagonal polynomials per run.
pub fn generator_drift(config: &SynthConfig) -> Result<NuisanceMatrix> {
    Ok(shared(config)?.drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::build_design;

    fn quiet() -> SynthConfig {
        SynthConfig {
            noise_sigma: 0.0,
            drift_amplitude: 0.0,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_unit_beta_is_the_condition_regressor() {
        let mut cfg = quiet();
        cfg.beta_range = [1.0, 1.0];
        let (y, truth, events) = generate_voxel(&cfg).unwrap();
        let grid = cfg.truth_grid().unwrap();
        let x = build_design(&events, &grid, cfg.tr, cfg.n_scans).unwrap();
        let hv = DVector::from_column_slice(&truth.hrf.samples);
        let expected: DVector<f64> = (0..cfg.n_conditions).map(|j| x.block(j) * &hv).sum();
        assert!((y - expected).amax() < 1e-12);
    }

    #[test]
    fn truths_are_canonical() {
        let d = generate_dataset(
            &SynthConfig {
                peak_range: Some([4.0, 6.0]),
                ..quiet()
            },
            20,
        )
        .unwrap();
        for t in &d.truths {
            let peak = t.hrf.samples.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
            assert!(t.hrf.samples.iter().cloned().fold(f64::MIN, f64::max) == 1.0);
        }
    }

    #[test]
    fn generation_is_additive_in_beta() {
        let cfg = quiet();
        let sh = shared(&cfg).unwrap();
        let h = sh.base_shape.clone();
        let gen = |b: Vec<f64>| {
            predicted_signal(&sh.design, &finalize(&sh.grid, h.clone(), b, vec![], None))
        };
        let a = vec![1.0, 0.5, -0.3, 2.0, 0.1];
        let b = vec![-0.4, 1.5, 0.3, 0.2, 1.0];
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        assert!((gen(a) + gen(b) - gen(ab)).amax() < 1e-12);
    }

    #[test]
    fn noise_level_matches_sigma() {
        let cfg = SynthConfig {
            n_scans: 10_000,
            noise_sigma: 0.7,
            events_per_condition: 40,
            seed: 9,
            ..Default::default()
        };
        let (y, truth, _) = generate_voxel(&cfg).unwrap();
        let sh = shared(&cfg).unwrap();
        let clean = predicted_signal(&sh.design, &truth)
            + &sh.drift.matrix * DVector::from_column_slice(&truth.omega);
        let rms = ((y - clean).norm_squared() / 10_000.0).sqrt();
        assert!((rms / 0.7 - 1.0).abs() < 0.05, "rms {rms}");
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = SynthConfig {
            seed: 11,
            ..Default::default()
        };
        let a = generate_dataset(&cfg, 4).unwrap();
        let b = generate_dataset(&cfg, 4).unwrap();
        assert_eq!(a.y, b.y);
        let (y0, t0, e0) = generate_voxel(&cfg).unwrap();
        assert_eq!(a.y.column(0), y0.column(0));
        assert_eq!(a.truths[0], t0);
        assert_eq!(a.events, e0);
    }

    #[test]
    fn jittered_peaks_stay_in_range() {
        let cfg = SynthConfig {
            peak_range: Some([4.5, 5.5]),
            hrf_dt: Some(0.1),
            ..quiet()
        };
        let d = generate_dataset(&cfg, 50).unwrap();
        let mut spread = (f64::MAX, f64::MIN);
        for t in &d.truths {
            let p = t.hrf.time_to_peak();
            assert!((4.5..=5.5).contains(&p), "peak {p}");
            spread = (spread.0.min(p), spread.1.max(p));
        }
        assert!(spread.1 - spread.0 > 0.5);
    }

    #[test]
    fn spaced_schedule_never_overlaps() {
        let cfg = SynthConfig {
            schedule: Schedule::Spaced,
            hrf_duration: 20.0,
            ..quiet()
        };
        let (_, _, events) = generate_voxel(&cfg).unwrap();
        let onsets: Vec<f64> = events.events().iter().map(|e| e.onset).collect();
        assert_eq!(onsets.len(), 10);
        assert!(onsets.windows(2).all(|w| w[1] - w[0] >= 20.0));
        assert!((0..5).all(|c| !events.onsets_of(c).is_empty()));
    }

    #[test]
    fn runs_use_disjoint_conditions() {
        let cfg = SynthConfig {
            n_runs: 3,
            n_conditions: 4,
            events_per_condition: 3,
            ..quiet()
        };
        let d = generate_dataset(&cfg, 2).unwrap();
        assert_eq!(d.y.nrows(), 600);
        assert_eq!(d.truths[0].beta.len(), 12);
        for e in d.events.events() {
            assert_eq!(e.condition / 4, e.run.unwrap());
        }
    }

    #[test]
    fn feature_driven_betas_are_linear() {
        let cfg = SynthConfig {
            n_features: 3,
            n_conditions: 8,
            ..quiet()
        };
        let d = generate_dataset(&cfg, 3).unwrap();
        let f = d.features.unwrap();
        let with_mean = f.clone().insert_column(0, 1.0);
        for t in &d.truths {
            let b = DVector::from_column_slice(&t.beta);
            let w = with_mean.clone().svd(true, true).solve(&b, 1e-12).unwrap();
            assert!((&with_mean * &w - &b).amax() < 1e-10);
            assert!((0.5..2.0).contains(&w[0]));
            // without the mean the betas are no longer in the span of the features
            let w0 = f.clone().svd(true, true).solve(&b, 1e-12).unwrap();
            assert!((&f * w0 - b).amax() > 1e-3);
        }
    }

    #[test]
    fn basis_truth_keeps_its_coefficients() {
        let cfg = SynthConfig {
            hrf: TrueHrf::Basis {
                basis: BasisKind::ThreeHrf,
                coefficients: vec![1.0, 0.5, -0.2],
            },
            ..quiet()
        };
        let (_, t, _) = generate_voxel(&cfg).unwrap();
        assert_eq!(t.h.len(), 3);
        assert!((t.h[1] / t.h[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SynthConfig {
                tr: 0.0,
                ..Default::default()
            },
            SynthConfig {
                noise_sigma: -1.0,
                ..Default::default()
            },
            SynthConfig {
                events_per_condition: 100,
                ..Default::default()
            },
            SynthConfig {
                schedule: Schedule::Spaced,
                n_scans: 40,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(generate_voxel(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn smaller_noise_gives_better_betas() {
        let err = |sigma: f64| {
            let cfg = SynthConfig {
                noise_sigma: sigma,
                seed: 5,
                ..Default::default()
            };
            let d = generate_dataset(&cfg, 30).unwrap();
            let sh = shared(&cfg).unwrap();
            let solver = crate::estimators::GlmSolver::new(&sh.design, &sh.drift).unwrap();
            let mut total = 0.0_f64;
            for (v, t) in d.truths.iter().enumerate() {
                // one FIR slice per condition; read the amplitude against the truth shape
                let fit = solver.fit(&d.y.column(v).clone_owned());
                let len = t.hrf.len();
                for (j, b) in t.beta.iter().enumerate() {
                    let slice = &fit.coefficients[j * len..(j + 1) * len];
                    let est = slice
                        .iter()
                        .zip(&t.hrf.samples)
                        .map(|(a, h)| a * h)
                        .sum::<f64>()
                        / t.hrf.samples.iter().map(|h| h * h).sum::<f64>();
                    total += (est - b).powi(2);
                }
            }
            total.sqrt()
        };
        assert!(err(0.5) / err(0.05) >= 3.0);
    }
}
