//! Rank-1 GLM fits (shared design and separate designs).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::glm::{GlmsFit, GlmsSolver};
use super::objective::{Layout, RankOneObjective, SeparateObjective};
use super::VoxelFit;
use crate::design::{separate_from_design, DesignMatrix, NuisanceMatrix, SeparateDesigns};
use crate::error::{invalid, Result};
use crate::hrf_basis::{hrf_peak_amplitude, max_abs, BasisSet, SampledHrf};
use crate::linalg::dot;
use crate::solver::{lbfgs_box_minimize, QrReducer, SolverConfig};

/// Below this `|B h|_inf` a finalized fit is treated as having no response.
pub const DEGENERATE_HRF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankOneConfig {
    pub solver: SolverConfig,
    /// Weight of the `-|B(:,1) h_1|^2` term that keeps `h` off the origin.
    pub penalty_weight: f64,
    /// Solve on the thin-QR reduced system.
    pub qr: bool,
}

impl Default for RankOneConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            penalty_weight: 1.0,
            qr: true,
        }
    }
}

/// Rank-1 problem prepared once for a design and reused across voxels.
#[derive(Debug, Clone)]
pub struct RankOneProblem {
    design: DesignMatrix,
    drift: NuisanceMatrix,
    basis: BasisSet,
    separate: bool,
    glms: GlmsSolver,
    reducer: Option<QrReducer>,
    config: RankOneConfig,
}

/// Starting point in the packed layout's terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneStart {
    pub h: Vec<f64>,
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    pub rest: Vec<f64>,
}

impl RankOneProblem {
    pub fn new(
        design: &DesignMatrix,
        drift: &NuisanceMatrix,
        basis: &BasisSet,
        separate: bool,
        config: RankOneConfig,
    ) -> Result<Self> {
        config.solver.validate()?;
        if design.basis_size != basis.size() {
            return invalid(format!(
                "design was built with {} basis elements, basis has {}",
                design.basis_size,
                basis.size()
            ));
        }
        if drift.matrix.nrows() != design.n_scans() {
            return invalid("design and drift must have the same number of rows");
        }
        let (n, d, k, q) = (
            design.n_scans(),
            basis.size(),
            design.n_conditions,
            drift.n_columns(),
        );
        let params = d + k + q + if separate { k } else { 0 };
        if n < d + k + q {
            return invalid(format!(
                "{n} scans cannot identify {params} rank-1 parameters"
            ));
        }
        let glms = GlmsSolver::new(&separate_from_design(design), drift)?;
        let reducer = if config.qr {
            QrReducer::new(design, drift)
        } else {
            None
        };
        Ok(Self {
            design: design.clone(),
            drift: drift.clone(),
            basis: basis.clone(),
            separate,
            glms,
            reducer,
            config,
        })
    }

    pub fn is_reduced(&self) -> bool {
        self.reducer.is_some()
    }

    pub fn layout(&self) -> Layout {
        Layout {
            d: self.basis.size(),
            k: self.design.n_conditions,
            q: self.drift.n_columns(),
            separate: self.separate,
        }
    }

    pub fn glms_fit(&self, y: &DVector<f64>) -> GlmsFit {
        self.glms.fit(y)
    }

    /// Collapses the `k` GLMS responses into one shared start.
    pub fn start_from_glms(&self, glms: &GlmsFit) -> RankOneStart {
        let d = self.basis.size();
        let mut h = vec![0.0; d];
        let mut beta = Vec::with_capacity(glms.slices.len());
        let mut used = 0usize;
        for slice in &glms.slices {
            let amp = hrf_peak_amplitude(&self.basis.reconstruct(slice).samples).unwrap_or(0.0);
            beta.push(amp);
            if amp != 0.0 {
                for (hv, s) in h.iter_mut().zip(slice) {
                    *hv += s / amp;
                }
                used += 1;
            }
        }
        let rest = glms
            .rest
            .iter()
            .map(|s| hrf_peak_amplitude(&self.basis.reconstruct(s).samples).unwrap_or(0.0))
            .collect();
        let bh = self.basis.reconstruct(&h);
        let scale = max_abs(&bh.samples);
        if used == 0 || scale < DEGENERATE_HRF {
            h = self.reference_coefficients();
        } else {
            let sign = if dot(&bh.samples, &self.basis.reference.samples) < 0.0 {
                -1.0
            } else {
                1.0
            };
            for v in h.iter_mut() {
                *v *= sign / scale;
            }
        }
        RankOneStart {
            h,
            beta,
            omega: glms.omega.clone(),
            rest,
        }
    }

    /// Coefficients whose reconstruction best matches the reference response.
    fn reference_coefficients(&self) -> Vec<f64> {
        let b = &self.basis.matrix;
        let r = DVector::from_column_slice(&self.basis.reference.samples);
        let coef = b
            .clone()
            .svd(true, true)
            .solve(&r, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(b.ncols()));
        let scale = max_abs(&self.basis.reconstruct(coef.as_slice()).samples);
        coef.iter()
            .map(|v| v / scale.max(f64::MIN_POSITIVE))
            .collect()
    }

    /// Fits one voxel, starting from `start` or from the GLMS solution.
    pub fn fit(&self, y: &DVector<f64>, start: Option<&RankOneStart>) -> Result<VoxelFit> {
        if y.len() != self.design.n_scans() {
            return invalid("signal length does not match the design");
        }
        let layout = self.layout();
        if y.iter().all(|&v| v == 0.0) {
            return Ok(self.zero_fit());
        }
        // the penalty weight is meaningful against a unit-RMS signal
        let scale = (y.norm_squared() / y.len() as f64).sqrt();
        let y = &(y / scale);
        let start = match start {
            Some(s) => RankOneStart {
                h: s.h.clone(),
                beta: s.beta.iter().map(|v| v / scale).collect(),
                omega: s.omega.iter().map(|v| v / scale).collect(),
                rest: s.rest.iter().map(|v| v / scale).collect(),
            },
            None => self.start_from_glms(&self.glms.fit(y)),
        };
        if start.h.len() != layout.d
            || start.beta.len() != layout.k
            || start.omega.len() != layout.q
        {
            return invalid("start point does not match the problem layout");
        }
        if self.separate && start.rest.len() != layout.k {
            return invalid("start point does not match the problem layout");
        }
        // saturate the box: scale h so that |h|_inf = 1
        let hs = max_abs(&start.h).max(f64::MIN_POSITIVE);
        let h0: Vec<f64> = start.h.iter().map(|v| v / hs).collect();
        let b0: Vec<f64> = start.beta.iter().map(|v| v * hs).collect();
        let r0: Vec<f64> = start.rest.iter().map(|v| v * hs).collect();
        let z0 = layout.pack(
            &h0,
            &b0,
            &start.omega,
            self.separate.then_some(r0.as_slice()),
        );

        let mut lower = vec![f64::NEG_INFINITY; layout.len()];
        let mut upper = vec![f64::INFINITY; layout.len()];
        for i in 0..layout.d {
            lower[i] = -1.0;
            upper[i] = 1.0;
        }
        let b1 = self.basis.matrix.column(0).norm_squared();
        let penalty = self.config.penalty_weight * b1;

        let (xs, zs, ys, offset) = match &self.reducer {
            Some(red) => {
                let (yr, off) = red.reduce(y);
                (&red.x.matrix, &red.z.matrix, yr, off)
            }
            None => (&self.design.matrix, &self.drift.matrix, y.clone(), 0.0),
        };

        let k = layout.k;
        let (min, data_value) = if self.separate {
            let mut obj = SeparateObjective::new(xs, zs, &ys, k, penalty)?.with_offset(offset);
            let min = lbfgs_box_minimize(
                |z, g| obj.value_grad(z, g),
                &z0,
                &lower,
                &upper,
                &self.config.solver,
            )?;
            let v = obj.data_value(&min.x);
            (min, v)
        } else {
            let mut obj = RankOneObjective::new(xs, zs, &ys, k, penalty)?.with_offset(offset);
            let min = lbfgs_box_minimize(
                |z, g| obj.value_grad(z, g),
                &z0,
                &lower,
                &upper,
                &self.config.solver,
            )?;
            let v = obj.data_value(&min.x);
            (min, v)
        };

        let h = layout.h(&min.x).to_vec();
        let unscale = |v: &[f64]| v.iter().map(|x| x * scale).collect::<Vec<_>>();
        let beta = unscale(layout.beta(&min.x));
        let omega = unscale(layout.omega(&min.x));
        let rest = self.separate.then(|| unscale(layout.rest(&min.x)));
        let mut fit = finalize(&self.basis, h, beta, omega, rest);
        let s2 = scale * scale;
        fit.objective = (data_value * s2).max(0.0);
        fit.iterations = min.iterations;
        fit.converged = min.converged() && !fit.flagged;
        fit.initial_value = min.trace.first().map(|v| v * s2);
        fit.final_value = Some(min.value * s2);
        Ok(fit)
    }

    fn zero_fit(&self) -> VoxelFit {
        let l = self.layout();
        let h = self.reference_coefficients();
        let hrf = self.basis.reconstruct(&h);
        VoxelFit {
            h,
            hrf,
            beta: vec![0.0; l.k],
            omega: vec![0.0; l.q],
            r: self.separate.then(|| vec![0.0; l.k]),
            hrf_params: None,
            objective: 0.0,
            iterations: 0,
            converged: true,
            flagged: false,
            initial_value: None,
            final_value: None,
        }
    }
}

/// Rescales `(h, beta)` so that `|B h|_inf = 1` and `<B h, h_ref> > 0`.
///
/// A response with `|B h|_inf` below [`DEGENERATE_HRF`] yields zero betas and
/// a flagged fit.
pub fn finalize(
    basis: &BasisSet,
    mut h: Vec<f64>,
    mut beta: Vec<f64>,
    omega: Vec<f64>,
    mut rest: Option<Vec<f64>>,
) -> VoxelFit {
    let bh = basis.reconstruct(&h);
    let peak = max_abs(&bh.samples);
    let flagged = peak < DEGENERATE_HRF;
    let hrf = if flagged {
        beta.iter_mut().for_each(|b| *b = 0.0);
        if let Some(r) = rest.as_mut() {
            r.iter_mut().for_each(|v| *v = 0.0);
        }
        SampledHrf::new(vec![0.0; basis.len()], basis.dt)
    } else {
        let sign = if dot(&bh.samples, &basis.reference.samples) < 0.0 {
            -1.0
        } else {
            1.0
        };
        let q = peak * sign;
        h.iter_mut().for_each(|v| *v /= q);
        beta.iter_mut().for_each(|v| *v *= q);
        if let Some(r) = rest.as_mut() {
            r.iter_mut().for_each(|v| *v *= q);
        }
        SampledHrf::new(bh.samples.iter().map(|s| s / q).collect(), basis.dt)
    };
    VoxelFit {
        h,
        hrf,
        beta,
        omega,
        r: rest,
        hrf_params: None,
        objective: 0.0,
        iterations: 0,
        converged: !flagged,
        flagged,
        initial_value: None,
        final_value: None,
    }
}

/// Rank-1 GLM on a single voxel.
pub fn r1glm_fit(
    x: &DesignMatrix,
    y: &DVector<f64>,
    z: &NuisanceMatrix,
    basis: &BasisSet,
    config: &RankOneConfig,
    init: Option<&VoxelFit>,
) -> Result<VoxelFit> {
    let problem = RankOneProblem::new(x, z, basis, false, *config)?;
    let start = init.map(start_from_fit);
    problem.fit(y, start.as_ref())
}

/// Rank-1 GLM with separate designs on a single voxel.
pub fn r1glms_fit(
    s: &SeparateDesigns,
    y: &DVector<f64>,
    z: &NuisanceMatrix,
    basis: &BasisSet,
    config: &RankOneConfig,
    init: Option<&VoxelFit>,
) -> Result<VoxelFit> {
    let problem = RankOneProblem::new(&s.to_design(), z, basis, true, *config)?;
    let start = init.map(start_from_fit);
    problem.fit(y, start.as_ref())
}

fn start_from_fit(fit: &VoxelFit) -> RankOneStart {
    RankOneStart {
        h: fit.h.clone(),
        beta: fit.beta.clone(),
        omega: fit.omega.clone(),
        rest: fit.r.clone().unwrap_or_else(|| vec![0.0; fit.beta.len()]),
    }
}

/// Predicted signal `X (beta ⊗ h)` of a fit, without drift.
pub fn predicted_signal(x: &DesignMatrix, fit: &VoxelFit) -> DVector<f64> {
    &x.matrix * super::objective::kron_vec(&fit.beta, &fit.h)
}
