//! Rank-1 objectives and their gradients.
//!
//! The coefficient vector `vec(h beta^T) = beta ⊗ h` is never multiplied
//! against an explicit Kronecker factor: `X (beta ⊗ h)` is formed from the
//! length-`dk` vector directly, and `(beta^T ⊗ I) X^T r`, `(I ⊗ h^T) X^T r`
//! are read off `X^T r` reshaped as a `d x k` matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Packed variable layout `[h (d), beta (k), omega (q), r (k, separate designs only)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
    pub k: usize,
    pub q: usize,
    pub separate: bool,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.d + self.k + self.q + if self.separate { self.k } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[..self.d]
    }

    pub fn beta<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[self.d..self.d + self.k]
    }

    pub fn omega<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[self.d + self.k..self.d + self.k + self.q]
    }

    pub fn rest<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        assert!(self.separate);
        &z[self.d + self.k + self.q..]
    }

    pub fn pack(&self, h: &[f64], beta: &[f64], omega: &[f64], rest: Option<&[f64]>) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.len());
        z.extend_from_slice(h);
        z.extend_from_slice(beta);
        z.extend_from_slice(omega);
        if self.separate {
            z.extend_from_slice(rest.expect("separate layout needs rest activations"));
        }
        debug_assert_eq!(z.len(), self.len());
        z
    }
}

/// `beta ⊗ h` as a length `d k` vector (condition-major).
pub fn kron_vec(beta: &[f64], h: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        beta.len() * h.len(),
        beta.iter().flat_map(|b| h.iter().map(move |v| b * v)),
    )
}

/// Residual of the three equivalent factorizations of the rank-1 model.
/// Returns `(y - X(beta⊗h) - Zw, y - X(I⊗h)beta - Zw, y - X(beta⊗I)h - Zw)`.
pub fn kron_residuals(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &[f64],
    beta: &[f64],
    omega: &[f64],
) -> [DVector<f64>; 3] {
    let (d, k) = (h.len(), beta.len());
    let zw = z * DVector::from_column_slice(omega);
    let direct = y - x * kron_vec(beta, h) - &zw;

    // X (I ⊗ h): column j is X_j h
    let mut xh = DMatrix::zeros(x.nrows(), k);
    for j in 0..k {
        xh.set_column(j, &(x.columns(j * d, d) * DVector::from_column_slice(h)));
    }
    let via_beta = y - xh * DVector::from_column_slice(beta) - &zw;

    // X (beta ⊗ I): sum_j beta_j X_j
    let mut xb = DMatrix::zeros(x.nrows(), d);
    for (j, &b) in beta.iter().enumerate() {
        xb += x.columns(j * d, d) * b;
    }
    let via_h = y - xb * DVector::from_column_slice(h) - &zw;
    [direct, via_beta, via_h]
}

/// Penalized rank-1 least squares on a shared design:
/// `1/2 |y - X(beta⊗h) - Z w|^2 - weight |B(:,1) h_1|^2 + offset`.
#[derive(Debug, Clone)]
pub struct RankOneObjective<'a> {
    x: &'a DMatrix<f64>,
    z: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    layout: Layout,
    /// `weight * |B(:,1)|^2`.
    penalty: f64,
    offset: f64,
    w: DVector<f64>,
    resid: DVector<f64>,
    xtr: DVector<f64>,
}

impl<'a> RankOneObjective<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        z: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        k: usize,
        penalty: f64,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n {
            return invalid("design, drift and signal must share their row count");
        }
        if k == 0 || x.ncols() % k != 0 {
            return invalid(format!(
                "{} design columns cannot hold {k} conditions",
                x.ncols()
            ));
        }
        let layout = Layout {
            d: x.ncols() / k,
            k,
            q: z.ncols(),
            separate: false,
        };
        Ok(Self {
            x,
            z,
            y,
            layout,
            penalty,
            offset: 0.0,
            w: DVector::zeros(x.ncols()),
            resid: DVector::zeros(n),
            xtr: DVector::zeros(x.ncols()),
        })
    }

    /// Constant added to every value (the QR reduction remainder).
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    fn residual(&mut self, z: &[f64]) {
        let l = self.layout;
        let (h, beta, omega) = (l.h(z), l.beta(z), l.omega(z));
        for (j, &b) in beta.iter().enumerate() {
            for (m, &hv) in h.iter().enumerate() {
                self.w[j * l.d + m] = b * hv;
            }
        }
        self.resid.copy_from(self.y);
        self.resid.gemv(-1.0, self.x, &self.w, 1.0);
        if l.q > 0 {
            self.resid
                .gemv(-1.0, self.z, &DVector::from_column_slice(omega), 1.0);
        }
    }

    /// Data term plus offset, without the penalty.
    pub fn data_value(&mut self, z: &[f64]) -> f64 {
        self.residual(z);
        0.5 * self.resid.norm_squared() + self.offset
    }

    /// Penalized value; writes the gradient into `grad`.
    pub fn value_grad(&mut self, z: &[f64], grad: &mut [f64]) -> f64 {
        assert_eq!(z.len(), self.layout.len());
        let l = self.layout;
        self.residual(z);
        let h1 = z[0];
        let value = 0.5 * self.resid.norm_squared() + self.offset - self.penalty * h1 * h1;

        self.xtr.gemv_tr(1.0, self.x, &self.resid, 0.0);
        let (h, beta) = (l.h(z), l.beta(z));
        // X^T r reshaped as d x k: T[m, j] = xtr[j d + m]
        for m in 0..l.d {
            grad[m] = -(0..l.k)
                .map(|j| self.xtr[j * l.d + m] * beta[j])
                .sum::<f64>();
        }
        for j in 0..l.k {
            grad[l.d + j] = -(0..l.d).map(|m| self.xtr[j * l.d + m] * h[m]).sum::<f64>();
        }
        for c in 0..l.q {
            grad[l.d + l.k + c] = -self.z.column(c).dot(&self.resid);
        }
        grad[0] -= 2.0 * self.penalty * h1;
        value
    }
}

/// Penalized separate-design objective
/// `1/2 sum_i |y - beta_i X0_i h - r_i X1_i h - Z w|^2 - weight |B(:,1) h_1|^2 + k offset`.
///
/// `X1_i h` is formed as `(sum_j X0_j) h - X0_i h`, so one pass over the
/// design serves all `k` terms.
#[derive(Debug, Clone)]
pub struct SeparateObjective<'a> {
    x: &'a DMatrix<f64>,
    z: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    x_sum: DMatrix<f64>,
    layout: Layout,
    penalty: f64,
    offset: f64,
    u: DMatrix<f64>,
}

impl<'a> SeparateObjective<'a> {
    /// `x` is the condition-major design whose blocks are the `X0_i`.
    pub fn new(
        x: &'a DMatrix<f64>,
        z: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        k: usize,
        penalty: f64,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n {
            return invalid("design, drift and signal must share their row count");
        }
        if k == 0 || x.ncols() % k != 0 {
            return invalid(format!(
                "{} design columns cannot hold {k} conditions",
                x.ncols()
            ));
        }
        let d = x.ncols() / k;
        let mut x_sum = DMatrix::zeros(n, d);
        for j in 0..k {
            x_sum += x.columns(j * d, d);
        }
        Ok(Self {
            x,
            z,
            y,
            x_sum,
            layout: Layout {
                d,
                k,
                q: z.ncols(),
                separate: true,
            },
            penalty,
            offset: 0.0,
            u: DMatrix::zeros(n, k),
        })
    }

    /// Per-term remainder of the QR reduction; multiplied by `k` internally.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset * self.layout.k as f64;
        self
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    fn eval(&mut self, z: &[f64], grad: Option<&mut [f64]>) -> (f64, f64) {
        assert_eq!(z.len(), self.layout.len());
        let l = self.layout;
        let n = self.y.len();
        let (h, beta, omega, rest) = (l.h(z), l.beta(z), l.omega(z), l.rest(z));
        let hv = DVector::from_column_slice(h);
        for j in 0..l.k {
            let col = self.x.columns(j * l.d, l.d) * &hv;
            self.u.set_column(j, &col);
        }
        let s = &self.x_sum * &hv;
        let mut base = self.y.clone_owned();
        if l.q > 0 {
            base.gemv(-1.0, self.z, &DVector::from_column_slice(omega), 1.0);
        }

        let mut data = 0.0;
        let mut sum_res = DVector::zeros(n);
        let mut sum_rres = DVector::zeros(n);
        let mut grad = grad;
        let mut gh = DVector::zeros(l.d);
        let mut res = DVector::zeros(n);
        for i in 0..l.k {
            let ui = self.u.column(i);
            // res_i = base - beta_i u_i - r_i (s - u_i)
            res.copy_from(&base);
            res.axpy(-(beta[i] - rest[i]), &ui, 1.0);
            res.axpy(-rest[i], &s, 1.0);
            data += 0.5 * res.norm_squared();
            if let Some(g) = grad.as_deref_mut() {
                let ur = ui.dot(&res);
                let sr = s.dot(&res);
                g[l.d + i] = -ur;
                g[l.d + l.k + l.q + i] = -(sr - ur);
                sum_res += &res;
                sum_rres.axpy(rest[i], &res, 1.0);
                // (beta_i X0_i + r_i X1_i)^T res = (beta_i - r_i) X0_i^T res + r_i Xsum^T res
                gh.gemv_tr(
                    -(beta[i] - rest[i]),
                    &self.x.columns(i * l.d, l.d),
                    &res,
                    1.0,
                );
            }
        }
        let penalized = data + self.offset - self.penalty * h[0] * h[0];
        if let Some(g) = grad {
            gh.gemv_tr(-1.0, &self.x_sum, &sum_rres, 1.0);
            g[..l.d].copy_from_slice(gh.as_slice());
            g[0] -= 2.0 * self.penalty * h[0];
            for c in 0..l.q {
                g[l.d + l.k + c] = -self.z.column(c).dot(&sum_res);
            }
        }
        (penalized, data + self.offset)
    }

    pub fn data_value(&mut self, z: &[f64]) -> f64 {
        self.eval(z, None).1
    }

    pub fn value_grad(&mut self, z: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(z, Some(grad)).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::check_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_point_value_and_drift_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 30, 6);
        let z = random(&mut rng, 30, 2);
        let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let mut obj = RankOneObjective::new(&x, &z, &y, 3, 0.0).unwrap();
        let zero = vec![0.0; obj.layout().len()];
        let mut g = vec![0.0; zero.len()];
        let v = obj.value_grad(&zero, &mut g);
        assert!((v - 0.5 * y.norm_squared()).abs() < 1e-12);
        let zty = -(z.transpose() * &y);
        for c in 0..2 {
            assert!((g[5 + c] - zty[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_model_has_zero_value_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 40, 8);
        let z = random(&mut rng, 40, 2);
        let h = [0.5, -1.0];
        let beta = [1.0, 2.0, -0.5, 0.3];
        let w = [0.7, -0.2];
        let y = &x * kron_vec(&beta, &h) + &z * DVector::from_column_slice(&w);
        let mut obj = RankOneObjective::new(&x, &z, &y, 4, 0.0).unwrap();
        let p = obj.layout().pack(&h, &beta, &w, None);
        let mut g = vec![0.0; p.len()];
        let v = obj.value_grad(&p, &mut g);
        assert!(v.abs() < 1e-24);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn three_factorizations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, k, d, q) in &[(20, 2, 3, 1), (50, 5, 4, 2), (35, 7, 1, 0)] {
            let x = random(&mut rng, n, k * d);
            let z = random(&mut rng, n, q);
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let h: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
            let [a, bb, c] = kron_residuals(&x, &z, &y, &h, &b, &w);
            assert!((&a - &bb).amax() < 1e-12);
            assert!((&a - &c).amax() < 1e-12);
        }
    }

    #[test]
    fn rank_one_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, k, d, q) = (50, 4, 3, 2);
        let x = random(&mut rng, n, k * d);
        let z = random(&mut rng, n, q);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut obj = RankOneObjective::new(&x, &z, &y, k, 0.7).unwrap();
        let p: Vec<f64> = (0..obj.layout().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let err = check_gradient(|v, g| obj.value_grad(v, g), &p, 1e-6);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn separate_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, k, d, q) = (60, 5, 3, 2);
        let x = random(&mut rng, n, k * d);
        let z = random(&mut rng, n, q);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut obj = SeparateObjective::new(&x, &z, &y, k, 0.4).unwrap();
        let p: Vec<f64> = (0..obj.layout().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let err = check_gradient(|v, g| obj.value_grad(v, g), &p, 1e-6);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn separate_value_matches_explicit_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (n, k, d, q) = (25, 3, 2, 1);
        let x = random(&mut rng, n, k * d);
        let z = random(&mut rng, n, q);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut obj = SeparateObjective::new(&x, &z, &y, k, 0.0).unwrap();
        let p: Vec<f64> = (0..obj.layout().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let l = obj.layout();
        let h = DVector::from_column_slice(l.h(&p));
        let zw = &z * DVector::from_column_slice(l.omega(&p));
        let mut expected = 0.0;
        for i in 0..k {
            let x0 = x.columns(i * d, d).clone_owned();
            let mut x1 = DMatrix::zeros(n, d);
            for j in (0..k).filter(|&j| j != i) {
                x1 += x.columns(j * d, d);
            }
            let r = &y - &x0 * &h * l.beta(&p)[i] - &x1 * &h * l.rest(&p)[i] - &zw;
            expected += 0.5 * r.norm_squared();
        }
        assert!((obj.data_value(&p) - expected).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = DMatrix::zeros(10, 6);
        let z = DMatrix::zeros(9, 1);
        let y = DVector::zeros(10);
        assert!(RankOneObjective::new(&x, &z, &y, 2, 0.0).is_err());
        let z = DMatrix::zeros(10, 1);
        assert!(RankOneObjective::new(&x, &z, &y, 4, 0.0).is_err());
        assert!(SeparateObjective::new(&x, &z, &y, 0, 0.0).is_err());
    }
}
