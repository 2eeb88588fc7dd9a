//! Dense least-squares helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-10;

/// A pseudo-inverse computed once and applied to many right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pinv: DMatrix<f64>,
    pub rank: usize,
    pub cols: usize,
}

impl LeastSquares {
    /// Factorizes `a` (n x p) through its SVD, discarding singular values
    /// below `PINV_RCOND * sigma_max`.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let cols = a.ncols();
        if cols == 0 {
            return Self {
                pinv: DMatrix::zeros(0, a.nrows()),
                rank: 0,
                cols,
            };
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cutoff = PINV_RCOND * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let mut pinv = DMatrix::zeros(cols, a.nrows());
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s > cutoff {
                // pinv += v_i u_i^T / s
                let v = vt.row(i).transpose();
                let ui = u.column(i);
                pinv.ger(1.0 / s, &v, &ui, 1.0);
            }
        }
        Self { pinv, rank, cols }
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.cols
    }

    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.pinv * y
    }

    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }
}

/// Horizontal concatenation `[a b]`.
pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Thin QR factor `Q` (orthonormal columns) of a full-column-rank matrix, or
/// `None` when the matrix is numerically rank deficient.
pub fn thin_q(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (n, p) = a.shape();
    if p == 0 || n < p {
        return None;
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= PINV_RCOND * diag_max) {
        return None;
    }
    Some(qr.q())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_full_rank_matches_normal_equations() {
        let a = DMatrix::from_fn(12, 4, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 + 0.1 * (i as f64) - j as f64
        });
        let y = DVector::from_fn(12, |i, _| (i as f64).sin());
        let ls = LeastSquares::new(&a);
        assert_eq!(ls.rank, 4);
        let x = ls.solve(&y);
        let ata = a.transpose() * &a;
        let expected = ata.lu().solve(&(a.transpose() * &y)).unwrap();
        assert!((x - expected).norm() < 1e-10);
    }

    #[test]
    fn pinv_flags_rank_deficiency() {
        let mut a = DMatrix::from_fn(8, 3, |i, j| (i + j * j) as f64);
        let c0 = a.column(0).clone_owned();
        a.set_column(2, &(c0 * 2.0));
        let ls = LeastSquares::new(&a);
        assert!(ls.is_rank_deficient());
        assert!(thin_q(&a).is_none());
    }
}
