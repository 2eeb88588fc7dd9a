//! Rank-1 GLM with a parametric response `h(alpha)` on an FIR design.

use nalgebra::{DMatrix, DVector};

use super::objective::RankOneObjective;
use super::rank_one::RankOneConfig;
use super::VoxelFit;
use crate::design::{DesignMatrix, NuisanceMatrix};
use crate::error::{invalid, Result};
use crate::hrf_basis::{max_abs, reference_of_len, DoubleGamma, SampledHrf};
use crate::linalg::{dot, hstack, LeastSquares};
use crate::solver::{lbfgs_box_minimize, QrReducer};

/// A response shape driven by a few parameters, sampled on the FIR grid.
pub trait HrfModel: Sync {
    fn n_params(&self) -> usize;

    /// Samples of `h(alpha)`; the length fixes the FIR size.
    fn eval(&self, params: &[f64]) -> Vec<f64>;

    fn dt(&self) -> f64;

    fn initial(&self) -> Vec<f64>;

    fn bounds(&self) -> (Vec<f64>, Vec<f64>);

    /// `L x p` Jacobian of [`eval`](Self::eval). The default uses forward differences.
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64> {
        forward_jacobian(self, params)
    }
}

/// Forward-difference Jacobian of any model.
pub fn forward_jacobian<M: HrfModel + ?Sized>(model: &M, params: &[f64]) -> DMatrix<f64> {
    let base = model.eval(params);
    let mut jac = DMatrix::zeros(base.len(), params.len());
    let mut p = params.to_vec();
    for c in 0..params.len() {
        let step = 1e-7 * params[c].abs().max(1.0);
        p[c] = params[c] + step;
        let up = model.eval(&p);
        p[c] = params[c];
        for (r, (u, b)) in up.iter().zip(&base).enumerate() {
            jac[(r, c)] = (u - b) / step;
        }
    }
    jac
}

/// Double-gamma response with free peak and undershoot delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    pub dt: f64,
    pub len: usize,
    pub start: [f64; 2],
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl DelayModel {
    pub fn new(dt: f64, len: usize) -> Self {
        Self {
            dt,
            len,
            start: [6.0, 16.0],
            lower: [2.0, 8.0],
            upper: [12.0, 26.0],
        }
    }

    fn shape(&self, params: &[f64]) -> DoubleGamma {
        DoubleGamma {
            peak_delay: params[0],
            undershoot_delay: params[1],
            ..DoubleGamma::canonical()
        }
    }
}

impl HrfModel for DelayModel {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, params: &[f64]) -> Vec<f64> {
        self.shape(params).sample(self.dt, self.len)
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn initial(&self) -> Vec<f64> {
        self.start.to_vec()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.to_vec(), self.upper.to_vec())
    }

    fn jacobian(&self, params: &[f64]) -> DMatrix<f64> {
        let g = self.shape(params);
        let mut jac = DMatrix::zeros(self.len, 2);
        for i in 0..self.len {
            let d = g.delay_gradient(i as f64 * self.dt);
            jac[(i, 0)] = d[0];
            jac[(i, 1)] = d[1];
        }
        jac
    }
}

/// `F_R1(h(alpha), beta, omega)` over the packed vector `[alpha, beta, omega]`.
pub struct ParametricObjective<'a, M: HrfModel + ?Sized> {
    model: &'a M,
    inner: RankOneObjective<'a>,
    p: usize,
    k: usize,
    q: usize,
}

impl<'a, M: HrfModel + ?Sized> ParametricObjective<'a, M> {
    pub fn new(
        model: &'a M,
        x: &'a DMatrix<f64>,
        z: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        k: usize,
    ) -> Result<Self> {
        let inner = RankOneObjective::new(x, z, y, k, 0.0)?;
        let l = inner.layout();
        let probe = model.eval(&model.initial());
        if probe.len() != l.d {
            return invalid(format!(
                "model yields {} samples, FIR design expects {}",
                probe.len(),
                l.d
            ));
        }
        Ok(Self {
            model,
            inner,
            p: model.n_params(),
            k,
            q: l.q,
        })
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.inner = self.inner.with_offset(offset);
        self
    }

    pub fn len(&self) -> usize {
        self.p + self.k + self.q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn inner_point(&self, z: &[f64]) -> Vec<f64> {
        let mut packed = self.model.eval(&z[..self.p]);
        packed.extend_from_slice(&z[self.p..]);
        packed
    }

    pub fn value(&mut self, z: &[f64]) -> f64 {
        let packed = self.inner_point(z);
        self.inner.data_value(&packed)
    }

    pub fn value_grad(&mut self, z: &[f64], grad: &mut [f64]) -> f64 {
        let packed = self.inner_point(z);
        let d = packed.len() - self.k - self.q;
        let mut g = vec![0.0; packed.len()];
        let value = self.inner.value_grad(&packed, &mut g);
        let jac = self.model.jacobian(&z[..self.p]);
        let gh = DVector::from_column_slice(&g[..d]);
        let ga = jac.tr_mul(&gh);
        grad[..self.p].copy_from_slice(ga.as_slice());
        grad[self.p..].copy_from_slice(&g[d..]);
        value
    }
}

/// Rank-1 fit over `(alpha, beta, omega)`; `x` must be built with an FIR basis
/// whose size equals the model's sample count.
pub fn r1glm_parametric_fit<M: HrfModel + ?Sized>(
    model: &M,
    x: &DesignMatrix,
    y: &DVector<f64>,
    z: &NuisanceMatrix,
    config: &RankOneConfig,
) -> Result<VoxelFit> {
    config.solver.validate()?;
    if model.n_params() == 0 {
        return invalid("the response model needs at least one parameter");
    }
    if y.len() != x.n_scans() || z.matrix.nrows() != x.n_scans() {
        return invalid("signal, design and drift lengths differ");
    }
    let k = x.n_conditions;
    let alpha0 = model.initial();
    let h0 = model.eval(&alpha0);
    let len = h0.len();
    if len != x.basis_size {
        return invalid(format!(
            "model yields {len} samples, FIR design expects {}",
            x.basis_size
        ));
    }

    // betas and drift for the starting shape by ordinary least squares
    let mut xh = DMatrix::zeros(x.n_scans(), k);
    let hv = DVector::from_column_slice(&h0);
    for j in 0..k {
        xh.set_column(j, &(x.matrix.columns(j * len, len) * &hv));
    }
    let sol = LeastSquares::new(&hstack(&xh, &z.matrix)).solve(y);
    let mut z0 = alpha0.clone();
    z0.extend(sol.iter());

    let (plo, phi) = model.bounds();
    let mut lower = vec![f64::NEG_INFINITY; z0.len()];
    let mut upper = vec![f64::INFINITY; z0.len()];
    lower[..plo.len()].copy_from_slice(&plo);
    upper[..phi.len()].copy_from_slice(&phi);

    let reducer = if config.qr {
        QrReducer::new(x, z)
    } else {
        None
    };
    let (xs, zs, ys, offset) = match &reducer {
        Some(r) => {
            let (yr, off) = r.reduce(y);
            (&r.x.matrix, &r.z.matrix, yr, off)
        }
        None => (&x.matrix, &z.matrix, y.clone(), 0.0),
    };
    let mut obj = ParametricObjective::new(model, xs, zs, &ys, k)?.with_offset(offset);
    let min = lbfgs_box_minimize(
        |v, g| obj.value_grad(v, g),
        &z0,
        &lower,
        &upper,
        &config.solver,
    )?;

    let p = model.n_params();
    let alpha = min.x[..p].to_vec();
    let mut h = model.eval(&alpha);
    let mut beta = min.x[p..p + k].to_vec();
    let omega = min.x[p + k..].to_vec();
    let reference = reference_of_len(model.dt(), len);
    let peak = max_abs(&h);
    let flagged = peak < super::rank_one::DEGENERATE_HRF;
    if flagged {
        beta.iter_mut().for_each(|b| *b = 0.0);
    } else {
        let sign = if dot(&h, &reference.samples) < 0.0 {
            -1.0
        } else {
            1.0
        };
        let scale = peak * sign;
        h.iter_mut().for_each(|v| *v /= scale);
        beta.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(VoxelFit {
        hrf: SampledHrf::new(h.clone(), model.dt()),
        h,
        beta,
        omega,
        r: None,
        hrf_params: Some(alpha),
        objective: min.value.max(0.0),
        iterations: min.iterations,
        converged: min.converged() && !flagged,
        flagged,
        initial_value: min.trace.first().copied(),
        final_value: Some(min.value),
    })
}
