//! Independent per-voxel fitting over a whole volume.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::glm::{extract_betas_and_hrfs, GlmSolver, GlmsSolver};
use super::parametric::{r1glm_parametric_fit, DelayModel};
use super::rank_one::{RankOneConfig, RankOneProblem};
use crate::design::{separate_from_design, DesignMatrix, NuisanceMatrix};
use crate::error::{invalid, Error, Result};
use crate::hrf_basis::{BasisKind, BasisSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Glm,
    Glms,
    R1glm,
    R1glms,
    R1param,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Glm => "glm",
            Method::Glms => "glms",
            Method::R1glm => "r1glm",
            Method::R1glms => "r1glms",
            Method::R1param => "r1param",
        }
    }

    pub fn is_rank_one(self) -> bool {
        matches!(self, Method::R1glm | Method::R1glms | Method::R1param)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "glm" => Ok(Method::Glm),
            "glms" => Ok(Method::Glms),
            "r1glm" => Ok(Method::R1glm),
            "r1glms" => Ok(Method::R1glms),
            "r1param" => Ok(Method::R1param),
            _ => invalid(format!("unknown method `{s}`")),
        }
    }
}

/// An estimator paired with a basis kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub basis: BasisKind,
}

impl MethodSpec {
    pub const fn new(method: Method, basis: BasisKind) -> Self {
        Self { method, basis }
    }

    /// The ten-method comparison grid: GLM and GLMS on every basis, the two
    /// rank-1 estimators on the bases that leave a shape to learn.
    pub fn grid() -> Vec<MethodSpec> {
        use BasisKind::*;
        use Method::*;
        let mut out = Vec::with_capacity(10);
        for m in [Glm, Glms] {
            for b in [Fixed, ThreeHrf, Fir] {
                out.push(MethodSpec::new(m, b));
            }
        }
        for m in [R1glm, R1glms] {
            for b in [ThreeHrf, Fir] {
                out.push(MethodSpec::new(m, b));
            }
        }
        out
    }

    /// Rank-1 estimators on the fixed basis only rescale the GLM solution.
    pub fn validate(&self) -> Result<()> {
        if self.method.is_rank_one() && self.basis == BasisKind::Fixed {
            return invalid(format!(
                "{} with the fixed basis has no shape to learn; use glm with the fixed basis",
                self.method.name()
            ));
        }
        if self.method == Method::R1param && self.basis != BasisKind::Fir {
            return invalid("r1param needs the fir basis");
        }
        Ok(())
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.method.name(), self.basis.name())
    }
}

/// Design, drift and basis shared by every voxel.
#[derive(Debug, Clone)]
pub struct VolumeDesign {
    pub design: DesignMatrix,
    pub drift: NuisanceMatrix,
    pub basis: BasisSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeConfig {
    pub rank_one: RankOneConfig,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self {
            rank_one: RankOneConfig::default(),
            jobs: 0,
        }
    }
}

/// `V x k` activation coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMap {
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub flagged: bool,
    pub rank_deficient: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct VolumeFit {
    pub betas: BetaMap,
    /// `V x L` response per voxel: the shared response for rank-1 methods,
    /// the mean over conditions otherwise.
    pub hrfs: DMatrix<f64>,
    pub diagnostics: Vec<VoxelDiagnostics>,
}

struct VoxelOutput {
    beta: Vec<f64>,
    hrf: Vec<f64>,
    diag: VoxelDiagnostics,
}

enum Prepared {
    Glm(GlmSolver),
    Glms(GlmsSolver),
    RankOne(RankOneProblem),
    Parametric(DelayModel),
}

/// Fits every column of `y` (`n x V`) independently. Output does not depend
/// on the worker count.
pub fn fit_volume(
    y: &DMatrix<f64>,
    spec: MethodSpec,
    inputs: &VolumeDesign,
    config: &VolumeConfig,
) -> Result<VolumeFit> {
    let VolumeDesign {
        design,
        drift,
        basis,
    } = inputs;
    if y.ncols() == 0 {
        return invalid("the volume has no voxels");
    }
    if y.nrows() != design.n_scans() {
        return invalid(format!(
            "signal has {} rows, design has {}",
            y.nrows(),
            design.n_scans()
        ));
    }
    if basis.kind != spec.basis {
        return invalid(format!(
            "basis is {}, method asks for {}",
            basis.kind.name(),
            spec.basis.name()
        ));
    }
    if spec.method == Method::R1param && basis.kind != BasisKind::Fir {
        return invalid("r1param needs the fir basis");
    }
    let prepared = match spec.method {
        Method::Glm => Prepared::Glm(GlmSolver::new(design, drift)?),
        Method::Glms => Prepared::Glms(GlmsSolver::new(&separate_from_design(design), drift)?),
        Method::R1glm | Method::R1glms => Prepared::RankOne(RankOneProblem::new(
            design,
            drift,
            basis,
            spec.method == Method::R1glms,
            config.rank_one,
        )?),
        Method::R1param => Prepared::Parametric(DelayModel::new(basis.dt, basis.size())),
    };
    let k = design.n_conditions;
    let len = basis.len();

    let fit_one = |v: usize| -> VoxelOutput {
        let yv: DVector<f64> = y.column(v).clone_owned();
        let result: Result<(Vec<f64>, Vec<f64>, VoxelDiagnostics)> = (|| match &prepared {
            _ if yv.iter().any(|v| !v.is_finite()) => invalid("signal has non-finite samples"),
            Prepared::Glm(s) => {
                let fit = s.fit(&yv);
                let r = extract_betas_and_hrfs(&fit.coefficients, basis)?;
                Ok((
                    r.betas,
                    r.mean_hrf.samples,
                    closed_form_diag(fit.rank_deficient),
                ))
            }
            Prepared::Glms(s) => {
                let fit = s.fit(&yv);
                let r = extract_betas_and_hrfs(&fit.coefficients(), basis)?;
                Ok((
                    r.betas,
                    r.mean_hrf.samples,
                    closed_form_diag(fit.rank_deficient),
                ))
            }
            Prepared::RankOne(p) => {
                let fit = p.fit(&yv, None)?;
                Ok((
                    fit.beta,
                    fit.hrf.samples,
                    iterative_diag(fit.iterations, fit.converged, fit.flagged),
                ))
            }
            Prepared::Parametric(model) => {
                let fit = r1glm_parametric_fit(model, design, &yv, drift, &config.rank_one)?;
                Ok((
                    fit.beta,
                    fit.hrf.samples,
                    iterative_diag(fit.iterations, fit.converged, fit.flagged),
                ))
            }
        })();
        match result {
            Ok((beta, hrf, diag)) => VoxelOutput { beta, hrf, diag },
            Err(e) => VoxelOutput {
                beta: vec![0.0; k],
                hrf: vec![0.0; len],
                diag: VoxelDiagnostics {
                    iterations: 0,
                    converged: false,
                    flagged: true,
                    rank_deficient: false,
                    error: Some(e.to_string()),
                },
            },
        }
    };

    let outputs: Vec<VoxelOutput> = if config.jobs == 1 {
        (0..y.ncols()).map(fit_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..y.ncols()).into_par_iter().map(fit_one).collect())
    };

    let nv = outputs.len();
    let mut betas = DMatrix::zeros(nv, k);
    let mut hrfs = DMatrix::zeros(nv, len);
    let mut diagnostics = Vec::with_capacity(nv);
    for (v, out) in outputs.into_iter().enumerate() {
        for (j, b) in out.beta.iter().enumerate() {
            betas[(v, j)] = *b;
        }
        for (i, h) in out.hrf.iter().enumerate() {
            hrfs[(v, i)] = *h;
        }
        diagnostics.push(out.diag);
    }
    Ok(VolumeFit {
        betas: BetaMap { matrix: betas },
        hrfs,
        diagnostics,
    })
}

fn closed_form_diag(rank_deficient: bool) -> VoxelDiagnostics {
    VoxelDiagnostics {
        iterations: 0,
        converged: true,
        flagged: false,
        rank_deficient,
        error: None,
    }
}

fn iterative_diag(iterations: usize, converged: bool, flagged: bool) -> VoxelDiagnostics {
    VoxelDiagnostics {
        iterations,
        converged,
        flagged,
        rank_deficient: false,
        error: None,
    }
}
