//! Encoding scores: predict held-out BOLD from stimulus features.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ridge::ridge_gcv_centered;
use super::stats::pearson_r;
use crate::design::{DesignMatrix, NuisanceMatrix};
use crate::error::{Error, Result};
use crate::linalg::thin_q;

/// Score above which a voxel counts as predicted (roughly p < 0.05 for a
/// few thousand held-out scans).
pub const SCORE_THRESHOLD: f64 = 0.045;

/// Inputs for scoring one held-out run.
#[derive(Debug, Clone, Copy)]
pub struct EncodingProblem<'a> {
    /// `V x k_train` betas estimated on the training runs.
    pub train_betas: &'a DMatrix<f64>,
    /// `k_train x p`.
    pub train_features: &'a DMatrix<f64>,
    /// `k_test x p`.
    pub test_features: &'a DMatrix<f64>,
    /// FIR design of the held-out run on the response grid, with the test
    /// conditions in `test_features` order.
    pub test_design: &'a DesignMatrix,
    /// `V x L` response used to synthesize each voxel's prediction.
    pub hrfs: &'a DMatrix<f64>,
    /// `n_test x V` measured signal.
    pub test_y: &'a DMatrix<f64>,
    /// Removed from both measurement and prediction before scoring.
    pub nuisance: Option<&'a NuisanceMatrix>,
    pub lambda_grid: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingScores {
    /// Per-voxel correlation; 0 where it is undefined.
    pub scores: Vec<f64>,
    pub undefined: usize,
}

impl EncodingScores {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len().max(1) as f64
    }
}

/// Ridge (with intercept) from features to training betas, predicted test betas convolved
/// with each voxel's response, correlated with the measured test signal.
pub fn encoding_score(p: &EncodingProblem) -> Result<EncodingScores> {
    let v = p.train_betas.nrows();
    let (k_test, l) = (p.test_features.nrows(), p.hrfs.ncols());
    if p.train_betas.ncols() != p.train_features.nrows() {
        return Err(Error::DimensionMismatch(
            "train betas and features disagree on conditions".into(),
        ));
    }
    if p.test_features.ncols() != p.train_features.ncols() {
        return Err(Error::DimensionMismatch(
            "train and test features differ in width".into(),
        ));
    }
    if p.hrfs.nrows() != v || p.test_y.ncols() != v {
        return Err(Error::DimensionMismatch(
            "voxel counts differ between inputs".into(),
        ));
    }
    if p.test_design.n_conditions != k_test || p.test_design.basis_size != l {
        return Err(Error::DimensionMismatch(format!(
            "test design has {} conditions of {} lags, expected {k_test} of {l}",
            p.test_design.n_conditions, p.test_design.basis_size
        )));
    }
    if p.test_design.n_scans() != p.test_y.nrows() {
        return Err(Error::DimensionMismatch(
            "test design and signal lengths differ".into(),
        ));
    }

    let model = ridge_gcv_centered(p.train_features, &p.train_betas.transpose(), p.lambda_grid)?;
    let test_betas = model.predict(p.test_features)?; // k_test x V

    let q = match p.nuisance {
        Some(z) if z.n_columns() > 0 => Some(
            thin_q(&z.matrix)
                .ok_or_else(|| Error::InvalidArgument("nuisance is rank deficient".into()))?,
        ),
        _ => None,
    };
    let clean = |x: DVector<f64>| match &q {
        Some(q) => {
            let c = q.tr_mul(&x);
            x - q * c
        }
        None => x,
    };

    let mut scores = Vec::with_capacity(v);
    let mut undefined = 0;
    for vox in 0..v {
        // response-weighted regressors: one column per test condition
        let h = p.hrfs.row(vox).transpose();
        let mut pred = DVector::zeros(p.test_y.nrows());
        for j in 0..k_test {
            let b = test_betas[(j, vox)];
            if b != 0.0 {
                pred += p.test_design.matrix.columns(j * l, l) * &h * b;
            }
        }
        let pred = clean(pred);
        let meas = clean(p.test_y.column(vox).clone_owned());
        match pearson_r(pred.as_slice(), meas.as_slice()) {
            Ok(r) => scores.push(r),
            Err(Error::UndefinedScore(_)) => {
                undefined += 1;
                scores.push(0.0);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EncodingScores { scores, undefined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, build_drift, Event, EventTable};
    use crate::eval::default_lambda_grid;
    use crate::hrf_basis::{make_fir_basis, reference_of_len};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    struct World {
        train_features: DMatrix<f64>,
        test_features: DMatrix<f64>,
        train_betas: DMatrix<f64>,
        test_design: DesignMatrix,
        hrfs: DMatrix<f64>,
        test_y: DMatrix<f64>,
        drift: NuisanceMatrix,
    }

    fn world(v: usize, noise: f64, seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k_train, k_test, p, n, l) = (40, 10, 4, 300, 20);
        let mut normal = |r: usize, c: usize| -> DMatrix<f64> {
            DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
        };
        let train_features = normal(k_train, p);
        let test_features = normal(k_test, p);
        let w = normal(p, v);
        let train_betas = (&train_features * &w).transpose();
        let test_betas = &test_features * &w;
        let events: Vec<Event> = (0..k_test * 3)
            .map(|i| Event {
                onset: (i * 9) as f64,
                condition: i % k_test,
                run: None,
            })
            .collect();
        let events = EventTable::new(events, k_test).unwrap();
        let basis = make_fir_basis(l, 1.0).unwrap();
        let test_design = build_design(&events, &basis, 1.0, n).unwrap();
        let h = reference_of_len(1.0, l).samples;
        let hrfs = DMatrix::from_fn(v, l, |_, j| h[j]);
        let drift = build_drift(n, 2).unwrap();
        let mut test_y = DMatrix::zeros(n, v);
        for vox in 0..v {
            let b = test_betas.column(vox);
            let coef = DVector::from_iterator(
                k_test * l,
                (0..k_test).flat_map(|j| h.iter().map(move |x| x * b[j])),
            );
            let mut y = &test_design.matrix * coef + &drift.matrix * DVector::from_element(3, 5.0);
            y.iter_mut()
                .for_each(|e| *e += noise * rng.random_range(-1.0..1.0));
            test_y.set_column(vox, &y);
        }
        World {
            train_features,
            test_features,
            train_betas,
            test_design,
            hrfs,
            test_y,
            drift,
        }
    }

    fn problem<'a>(
        w: &'a World,
        grid: &'a [f64],
        test_features: &'a DMatrix<f64>,
    ) -> EncodingProblem<'a> {
        EncodingProblem {
            train_betas: &w.train_betas,
            train_features: &w.train_features,
            test_features,
            test_design: &w.test_design,
            hrfs: &w.hrfs,
            test_y: &w.test_y,
            nuisance: Some(&w.drift),
            lambda_grid: grid,
        }
    }

    #[test]
    fn perfect_model_scores_high() {
        let w = world(20, 0.0, 1);
        let grid = default_lambda_grid();
        let s = encoding_score(&problem(&w, &grid, &w.test_features)).unwrap();
        assert!(s.mean() > 0.99, "{}", s.mean());
    }

    #[test]
    fn shuffled_labels_score_near_zero() {
        let w = world(1000, 0.5, 2);
        let grid = default_lambda_grid();
        // features of unrelated stimuli instead of the shown ones
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let other = DMatrix::from_fn(10, 4, |_, _| StandardNormal.sample(&mut rng));
        let s = encoding_score(&problem(&w, &grid, &other)).unwrap();
        assert!(s.mean().abs() < 0.05, "{}", s.mean());
    }

    #[test]
    fn shape_errors() {
        let w = world(3, 0.0, 3);
        let grid = default_lambda_grid();
        let narrow = DMatrix::zeros(10, 3);
        assert!(encoding_score(&problem(&w, &grid, &narrow)).is_err());
    }

    #[test]
    fn threshold_is_the_display_cut() {
        assert_eq!(SCORE_THRESHOLD, 0.045);
    }
}
