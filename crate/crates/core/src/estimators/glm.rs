//! Closed-form estimators: the basis-constrained GLM and GLM with separate designs.

use nalgebra::DVector;

use crate::design::{DesignMatrix, NuisanceMatrix, SeparateDesigns};
use crate::error::{invalid, Result};
use crate::hrf_basis::{hrf_peak_amplitude, BasisSet, SampledHrf};
use crate::linalg::{hstack, LeastSquares};

/// Least-squares coefficients of `y` on `[X Z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// Length `d k`, condition-major.
    pub coefficients: Vec<f64>,
    pub omega: Vec<f64>,
    pub rank_deficient: bool,
}

/// Pseudo-inverse of `[X Z]`, shared by every voxel of a volume.
#[derive(Debug, Clone)]
pub struct GlmSolver {
    ls: LeastSquares,
    n_coef: usize,
}

impl GlmSolver {
    pub fn new(x: &DesignMatrix, z: &NuisanceMatrix) -> Result<Self> {
        if z.matrix.nrows() != x.n_scans() {
            return invalid("design and drift must have the same number of rows");
        }
        let ls = LeastSquares::new(&hstack(&x.matrix, &z.matrix));
        if ls.is_rank_deficient() {
            log::warn!("GLM design is rank deficient; using the pseudo-inverse");
        }
        Ok(Self {
            ls,
            n_coef: x.matrix.ncols(),
        })
    }

    pub fn fit(&self, y: &DVector<f64>) -> GlmFit {
        let sol = self.ls.solve(y);
        GlmFit {
            coefficients: sol.rows(0, self.n_coef).iter().copied().collect(),
            omega: sol
                .rows(self.n_coef, sol.len() - self.n_coef)
                .iter()
                .copied()
                .collect(),
            rank_deficient: self.ls.is_rank_deficient(),
        }
    }
}

/// Minimizes `|y - X v - Z w|^2` over `(v, w)`.
pub fn glm_fit(x: &DesignMatrix, z: &NuisanceMatrix, y: &DVector<f64>) -> Result<GlmFit> {
    if y.len() != x.n_scans() {
        return invalid("signal length does not match the design");
    }
    Ok(GlmSolver::new(x, z)?.fit(y))
}

/// Per-condition amplitudes and response shapes recovered from a `d k`
/// coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResponses {
    pub betas: Vec<f64>,
    /// Peak-normalized responses, one per condition (zero when the slice is zero).
    pub hrfs: Vec<SampledHrf>,
    /// Mean of the normalized responses.
    pub mean_hrf: SampledHrf,
}

/// Splits `v` into condition slices, reconstructs `B h_j` for each and takes
/// its signed peak as the amplitude.
pub fn extract_betas_and_hrfs(v: &[f64], basis: &BasisSet) -> Result<ConditionResponses> {
    let d = basis.size();
    if d == 0 || v.len() % d != 0 {
        return invalid(format!(
            "coefficient length {} is not a multiple of basis size {d}",
            v.len()
        ));
    }
    let k = v.len() / d;
    let mut betas = Vec::with_capacity(k);
    let mut hrfs = Vec::with_capacity(k);
    let mut mean = vec![0.0; basis.len()];
    for slice in v.chunks(d) {
        let hrf = basis.reconstruct(slice);
        let peak = hrf_peak_amplitude(&hrf.samples)?;
        let normalized = if peak == 0.0 {
            SampledHrf::new(vec![0.0; basis.len()], basis.dt)
        } else {
            SampledHrf::new(hrf.samples.iter().map(|s| s / peak).collect(), basis.dt)
        };
        for (m, s) in mean.iter_mut().zip(&normalized.samples) {
            *m += s / k as f64;
        }
        betas.push(peak);
        hrfs.push(normalized);
    }
    Ok(ConditionResponses {
        betas,
        hrfs,
        mean_hrf: SampledHrf::new(mean, basis.dt),
    })
}

/// Separate-design fit: coefficient slices of each condition's own block and
/// of its "all other conditions" block.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmsFit {
    /// `k` slices of length `d`.
    pub slices: Vec<Vec<f64>>,
    /// `k` slices of length `d` for the remaining conditions.
    pub rest: Vec<Vec<f64>>,
    /// Nuisance coefficients, averaged over the `k` separate fits.
    pub omega: Vec<f64>,
    pub rank_deficient: bool,
}

impl GlmsFit {
    /// Slices concatenated in condition-major order.
    pub fn coefficients(&self) -> Vec<f64> {
        self.slices.concat()
    }
}

/// `k` pseudo-inverses of `[X0_i X1_i Z]`, shared across voxels.
#[derive(Debug, Clone)]
pub struct GlmsSolver {
    systems: Vec<LeastSquares>,
    d: usize,
    q: usize,
    with_rest: bool,
}

impl GlmsSolver {
    pub fn new(s: &SeparateDesigns, z: &NuisanceMatrix) -> Result<Self> {
        let k = s.n_conditions();
        if k == 0 {
            return invalid("separate designs need at least one condition");
        }
        if z.matrix.nrows() != s.n_scans() {
            return invalid("design and drift must have the same number of rows");
        }
        // with a single condition X1 is identically zero and carries nothing
        let with_rest = k > 1;
        let systems: Vec<LeastSquares> = s
            .pairs
            .iter()
            .map(|(x0, x1)| {
                let a = if with_rest {
                    hstack(&hstack(x0, x1), &z.matrix)
                } else {
                    hstack(x0, &z.matrix)
                };
                LeastSquares::new(&a)
            })
            .collect();
        if systems.iter().any(LeastSquares::is_rank_deficient) {
            log::warn!("a separate design is rank deficient; using the pseudo-inverse");
        }
        Ok(Self {
            systems,
            d: s.basis_size(),
            q: z.n_columns(),
            with_rest,
        })
    }

    pub fn fit(&self, y: &DVector<f64>) -> GlmsFit {
        let d = self.d;
        let k = self.systems.len();
        let mut slices = Vec::with_capacity(k);
        let mut rest = Vec::with_capacity(k);
        let mut omega = vec![0.0; self.q];
        for ls in &self.systems {
            let sol = ls.solve(y);
            slices.push(sol.rows(0, d).iter().copied().collect());
            let off = if self.with_rest {
                rest.push(sol.rows(d, d).iter().copied().collect());
                2 * d
            } else {
                rest.push(vec![0.0; d]);
                d
            };
            for (o, v) in omega.iter_mut().zip(sol.rows(off, self.q).iter()) {
                *o += v / k as f64;
            }
        }
        GlmsFit {
            slices,
            rest,
            omega,
            rank_deficient: self.systems.iter().any(LeastSquares::is_rank_deficient),
        }
    }
}

pub fn glms_fit(s: &SeparateDesigns, z: &NuisanceMatrix, y: &DVector<f64>) -> Result<GlmsFit> {
    if y.len() != s.n_scans() {
        return invalid("signal length does not match the design");
    }
    Ok(GlmsSolver::new(s, z)?.fit(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, separate_from_design, Event, EventTable};
    use crate::hrf_basis::{make_3hrf_basis, make_fir_basis, make_fixed_basis};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn as_design(m: DMatrix<f64>, k: usize, d: usize) -> DesignMatrix {
        DesignMatrix {
            matrix: m,
            tr: 1.0,
            n_conditions: k,
            basis_size: d,
        }
    }

    #[test]
    fn orthonormal_design_is_interpolated_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_matrix(&mut rng, 20, 4).qr().q();
        let v = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let y = &q * &v;
        let fit = glm_fit(&as_design(q, 4, 1), &NuisanceMatrix::empty(20), &y).unwrap();
        for (a, b) in fit.coefficients.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_signal_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_matrix(&mut rng, 15, 5).qr().q();
        let x = q.columns(0, 3).clone_owned();
        let z = NuisanceMatrix {
            matrix: q.columns(3, 1).clone_owned(),
        };
        let y = q.column(4).clone_owned();
        let fit = glm_fit(&as_design(x, 3, 1), &z, &y).unwrap();
        assert!(fit
            .coefficients
            .iter()
            .chain(&fit.omega)
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn random_system_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 40, 6);
        let y = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
        let x = as_design(a.columns(0, 4).clone_owned(), 2, 2);
        let z = NuisanceMatrix {
            matrix: a.columns(4, 2).clone_owned(),
        };
        let fit = glm_fit(&x, &z, &y).unwrap();
        let expected = (a.transpose() * &a)
            .lu()
            .solve(&(a.transpose() * &y))
            .unwrap();
        let got: Vec<f64> = fit.coefficients.iter().chain(&fit.omega).copied().collect();
        let err = (DVector::from_vec(got) - &expected).norm() / expected.norm();
        assert!(err < 1e-8, "{err}");
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let mut m = DMatrix::from_fn(10, 2, |i, j| (i * (j + 1)) as f64);
        let c = m.column(0).clone_owned();
        m.set_column(1, &c);
        let fit = glm_fit(
            &as_design(m, 2, 1),
            &NuisanceMatrix::empty(10),
            &DVector::from_element(10, 1.0),
        )
        .unwrap();
        assert!(fit.rank_deficient);
    }

    #[test]
    fn fixed_basis_betas_are_coefficients() {
        let basis = make_fixed_basis(1.0, 32.0).unwrap();
        let v = [0.7, -1.3, 2.0];
        let r = extract_betas_and_hrfs(&v, &basis).unwrap();
        assert_eq!(r.betas, v.to_vec());
    }

    #[test]
    fn rank_one_coefficients_factor_exactly() {
        let basis = make_3hrf_basis(1.0, 32.0).unwrap();
        let h0 = [1.0, 0.3, -0.2];
        let scale = crate::hrf_basis::max_abs(&basis.reconstruct(&h0).samples);
        let h: Vec<f64> = h0.iter().map(|v| v / scale).collect();
        let beta = [1.5, -0.5, 0.0, 3.0];
        let v: Vec<f64> = beta
            .iter()
            .flat_map(|b| h.iter().map(move |hv| b * hv))
            .collect();
        let r = extract_betas_and_hrfs(&v, &basis).unwrap();
        for (a, b) in r.betas.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.hrfs[2].samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn fir_betas_match_argmax_scan() {
        let basis = make_fir_basis(5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = extract_betas_and_hrfs(&v, &basis).unwrap();
        for j in 0..3 {
            let slice = &v[j * 5..(j + 1) * 5];
            let mut best = 0;
            for i in 1..5 {
                if slice[i].abs() > slice[best].abs() {
                    best = i;
                }
            }
            assert_eq!(r.betas[j], slice[best]);
        }
        assert!(extract_betas_and_hrfs(&v[..7], &basis).is_err());
    }

    fn events(onsets: &[(f64, usize)], k: usize) -> EventTable {
        EventTable::new(
            onsets
                .iter()
                .map(|&(o, c)| Event {
                    onset: o,
                    condition: c,
                    run: None,
                })
                .collect(),
            k,
        )
        .unwrap()
    }

    #[test]
    fn glms_single_condition_equals_glm() {
        let basis = make_3hrf_basis(1.0, 32.0).unwrap();
        let ev = events(&[(2.0, 0), (20.0, 0), (41.0, 0), (63.0, 0)], 1);
        let x = build_design(&ev, &basis, 1.0, 90).unwrap();
        let z = crate::design::build_drift(90, 2).unwrap();
        let y = DVector::from_fn(90, |i, _| (i as f64 * 0.37).sin());
        let a = glm_fit(&x, &z, &y).unwrap();
        let b = glms_fit(&separate_from_design(&x), &z, &y).unwrap();
        for (p, q) in a.coefficients.iter().zip(&b.coefficients()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn glms_equals_glm_with_orthogonal_conditions() {
        // FIR responses of the two conditions never overlap, and no drift
        let basis = make_fir_basis(4, 1.0).unwrap();
        let ev = events(&[(0.0, 0), (10.0, 1), (20.0, 0), (30.0, 1)], 2);
        let x = build_design(&ev, &basis, 1.0, 40).unwrap();
        let z = NuisanceMatrix::empty(40);
        let y = DVector::from_fn(40, |i, _| ((i * 7 % 11) as f64) - 5.0);
        let a = glm_fit(&x, &z, &y).unwrap();
        let b = glms_fit(&separate_from_design(&x), &z, &y).unwrap();
        for (p, q) in a.coefficients.iter().zip(&b.coefficients()) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn glms_correlated_design_matches_direct_pseudoinverse() {
        let basis = make_fixed_basis(1.0, 32.0).unwrap();
        let ev = events(
            &[
                (1.0, 0),
                (3.0, 1),
                (12.0, 0),
                (15.0, 1),
                (27.0, 0),
                (28.0, 1),
                (40.0, 0),
                (44.0, 1),
            ],
            2,
        );
        let x = build_design(&ev, &basis, 1.0, 60).unwrap();
        let z = crate::design::build_drift(60, 1).unwrap();
        let s = separate_from_design(&x);
        let y = DVector::from_fn(60, |i, _| (i as f64 * 0.21).cos() + 0.01 * i as f64);
        let fit = glms_fit(&s, &z, &y).unwrap();
        for i in 0..2 {
            let (x0, x1) = &s.pairs[i];
            let a = hstack(&hstack(x0, x1), &z.matrix);
            let direct = a.clone().pseudo_inverse(1e-12).unwrap() * &y;
            assert!((fit.slices[i][0] - direct[0]).abs() < 1e-8);
            assert!((fit.rest[i][0] - direct[1]).abs() < 1e-8);
        }
    }
}
