//! The estimator families: GLM, GLM with separate designs, and their rank-1
//! counterparts (including a parametric-response variant).

mod glm;
mod objective;
mod parametric;
mod rank_one;
mod volume;

use serde::{Deserialize, Serialize};

pub use glm::{
    extract_betas_and_hrfs, glm_fit, glms_fit, ConditionResponses, GlmFit, GlmSolver, GlmsFit,
    GlmsSolver,
};
pub use objective::{kron_residuals, kron_vec, Layout, RankOneObjective, SeparateObjective};
pub use parametric::{
    forward_jacobian, r1glm_parametric_fit, DelayModel, HrfModel, ParametricObjective,
};
pub use rank_one::{
    finalize, predicted_signal, r1glm_fit, r1glms_fit, RankOneConfig, RankOneProblem, RankOneStart,
    DEGENERATE_HRF,
};
pub use volume::{
    fit_volume, BetaMap, Method, MethodSpec, VolumeConfig, VolumeDesign, VolumeFit,
    VoxelDiagnostics,
};

use crate::hrf_basis::SampledHrf;

/// Result of fitting one voxel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelFit {
    /// Basis coefficients (response samples for the parametric model).
    pub h: Vec<f64>,
    /// Reconstructed response `B h`.
    pub hrf: SampledHrf,
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    /// Activation of all other conditions (separate designs only).
    pub r: Option<Vec<f64>>,
    /// Fitted parameters of a parametric response.
    pub hrf_params: Option<Vec<f64>>,
    /// Unpenalized least-squares objective at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the response collapsed to zero and betas were zeroed.
    pub flagged: bool,
    /// Penalized solver objective at the start point.
    pub initial_value: Option<f64>,
    /// Penalized solver objective at the returned point.
    pub final_value: Option<f64>,
}
