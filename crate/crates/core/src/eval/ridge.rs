//! Ridge regression with the penalty picked by generalized cross-validation.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// 30 log-spaced penalties in `[1e-3, 1e3]`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..30)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 29.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub lambda: f64,
    pub weights: DVector<f64>,
    /// GCV score per grid entry; `None` where the score is undefined.
    pub scores: Vec<Option<f64>>,
}

/// One SVD of the feature matrix, reused for every penalty and target.
#[derive(Debug, Clone)]
pub struct RidgeSpectrum {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v_t: DMatrix<f64>,
    n: usize,
}

impl RidgeSpectrum {
    pub fn new(features: &DMatrix<f64>) -> Result<Self> {
        if features.ncols() == 0 || features.nrows() == 0 {
            return invalid("feature matrix must be non-empty");
        }
        let n = features.nrows();
        let svd = features.clone().svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return invalid("SVD of the feature matrix failed");
        };
        Ok(Self {
            u,
            s: svd.singular_values,
            v_t,
            n,
        })
    }

    /// GCV score `n |(I - H) t|^2 / tr(I - H)^2` at `lambda`.
    pub fn gcv(&self, target: &DVector<f64>, lambda: f64) -> Option<f64> {
        let c = self.u.tr_mul(target);
        let outside = (target.norm_squared() - c.norm_squared()).max(0.0);
        let mut rss = outside;
        let mut trace = self.n as f64;
        for (ci, si) in c.iter().zip(self.s.iter()) {
            let f = si * si / (si * si + lambda);
            rss += ((1.0 - f) * ci).powi(2);
            trace -= f;
        }
        (trace > 1e-10 * self.n as f64).then(|| self.n as f64 * rss / (trace * trace))
    }

    pub fn weights(&self, target: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let c = self.u.tr_mul(target);
        let shrunk = DVector::from_iterator(
            c.len(),
            c.iter()
                .zip(self.s.iter())
                .map(|(ci, si)| ci * si / (si * si + lambda)),
        );
        self.v_t.tr_mul(&shrunk)
    }

    /// Best penalty on `grid` for `target`, with its weights.
    pub fn fit(&self, target: &DVector<f64>, grid: &[f64]) -> Result<RidgeFit> {
        check_grid(grid)?;
        if target.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} targets for {} feature rows",
                target.len(),
                self.n
            )));
        }
        let scores: Vec<Option<f64>> = grid.iter().map(|&l| self.gcv(target, l)).collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in scores.iter().enumerate() {
            match s {
                Some(v) if best.is_none_or(|(_, b)| *v < b) => best = Some((i, *v)),
                None => log::warn!("GCV undefined at lambda {}; skipped", grid[i]),
                _ => {}
            }
        }
        let (i, _) =
            best.ok_or_else(|| Error::UndefinedScore("GCV undefined on the whole grid".into()))?;
        Ok(RidgeFit {
            lambda: grid[i],
            weights: self.weights(target, grid[i]),
            scores,
        })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return invalid("the penalty grid is empty");
    }
    if grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return invalid("penalties must be positive and finite");
    }
    Ok(())
}

/// Ridge weights from `features` (`n x p`) to `target`, penalty by GCV.
pub fn ridge_gcv(features: &DMatrix<f64>, target: &DVector<f64>, grid: &[f64]) -> Result<RidgeFit> {
    RidgeSpectrum::new(features)?.fit(target, grid)
}

/// Independent GCV fits for each column of `targets` (`n x m`), sharing one
/// SVD. Returns the `p x m` weights and the chosen penalties.
pub fn ridge_gcv_multi(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    grid: &[f64],
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let spec = RidgeSpectrum::new(features)?;
    let mut w = DMatrix::zeros(features.ncols(), targets.ncols());
    let mut lambdas = Vec::with_capacity(targets.ncols());
    for (j, col) in targets.column_iter().enumerate() {
        let fit = spec.fit(&col.clone_owned(), grid)?;
        w.set_column(j, &fit.weights);
        lambdas.push(fit.lambda);
    }
    Ok((w, lambdas))
}

/// Ridge with an unpenalized intercept per target.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredRidge {
    /// `p x m`.
    pub weights: DMatrix<f64>,
    pub feature_mean: DVector<f64>,
    pub intercept: DVector<f64>,
    pub lambdas: Vec<f64>,
}

impl CenteredRidge {
    /// `features` is `n x p`; returns `n x m`.
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.feature_mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature columns, the model has {}",
                features.ncols(),
                self.feature_mean.len()
            )));
        }
        let mut out = center(features, &self.feature_mean) * &self.weights;
        for mut row in out.row_iter_mut() {
            row += self.intercept.transpose();
        }
        Ok(out)
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()))
}

fn center(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mean[j])
}

/// [`ridge_gcv_multi`] on centered features and targets, so a per-target
/// offset is fitted without being penalized.
pub fn ridge_gcv_centered(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    grid: &[f64],
) -> Result<CenteredRidge> {
    if features.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows, {} target rows",
            features.nrows(),
            targets.nrows()
        )));
    }
    if features.nrows() < 2 {
        return invalid("at least two samples are needed to fit an intercept");
    }
    let feature_mean = column_means(features);
    let intercept = column_means(targets);
    let (weights, lambdas) = ridge_gcv_multi(
        &center(features, &feature_mean),
        &center(targets, &intercept),
        grid,
    )?;
    Ok(CenteredRidge {
        weights,
        feature_mean,
        intercept,
        lambdas,
    })
}
