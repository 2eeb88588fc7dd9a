//! Reference hemodynamic response and the basis sets built from it.
//!
//! Three basis kinds are supported: the fixed canonical response, the
//! canonical response plus its temporal and dispersion derivatives ("3hrf"),
//! and the finite impulse response set (identity). Every basis column is
//! peak-normalized to `max|.| = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{invalid, Result};

/// Default length of the reference response in seconds.
pub const DEFAULT_HRF_DURATION: f64 = 32.0;

/// Shift used for the temporal derivative column, in seconds.
const TEMPORAL_SHIFT: f64 = 1.0;
/// Step over the response dispersion used for the dispersion derivative column.
const DISPERSION_STEP: f64 = 0.01;

/// An HRF evaluated on a regular time grid starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledHrf {
    pub samples: Vec<f64>,
    /// Seconds per sample.
    pub dt: f64,
}

impl SampledHrf {
    pub fn new(samples: Vec<f64>, dt: f64) -> Self {
        Self { samples, dt }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample times in seconds.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |i| i as f64 * self.dt)
    }

    /// Time (seconds) of the sample with the largest value.
    pub fn time_to_peak(&self) -> f64 {
        let (idx, _) =
            self.samples
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
        idx as f64 * self.dt
    }

    /// Copy scaled so that `max|samples| = 1`. An all-zero response stays zero.
    pub fn peak_normalized(&self) -> Self {
        let scale = max_abs(&self.samples);
        if scale == 0.0 {
            return self.clone();
        }
        Self::new(self.samples.iter().map(|v| v / scale).collect(), self.dt)
    }
}

/// Which family a [`BasisSet`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Fixed,
    #[serde(rename = "3hrf")]
    ThreeHrf,
    Fir,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Fixed => "fixed",
            BasisKind::ThreeHrf => "3hrf",
            BasisKind::Fir => "fir",
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(BasisKind::Fixed),
            "3hrf" => Ok(BasisKind::ThreeHrf),
            "fir" => Ok(BasisKind::Fir),
            other => invalid(format!("unknown basis kind `{other}`")),
        }
    }
}

/// `L x d` matrix of basis waveforms sampled every `dt` seconds.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub matrix: DMatrix<f64>,
    pub kind: BasisKind,
    pub dt: f64,
    /// Reference response on the same grid, used for the sign convention.
    pub reference: SampledHrf,
}

impl BasisSet {
    /// Number of samples per waveform.
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Number of basis elements.
    pub fn size(&self) -> usize {
        self.matrix.ncols()
    }

    /// Reconstructs the waveform `B h`.
    pub fn reconstruct(&self, coefficients: &[f64]) -> SampledHrf {
        assert_eq!(
            coefficients.len(),
            self.size(),
            "coefficient length must match basis size"
        );
        let mut out = vec![0.0; self.len()];
        for (m, &c) in coefficients.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(self.matrix.column(m).iter()) {
                *o += c * b;
            }
        }
        SampledHrf::new(out, self.dt)
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.matrix.column(m).iter().copied().collect()
    }
}

/// Difference of two gamma densities, parameterized by the delays and
/// dispersions of the main response and of the undershoot (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleGamma {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    /// Ratio of response peak to undershoot.
    pub ratio: f64,
    /// Onset shift in seconds.
    pub onset: f64,
}

impl Default for DoubleGamma {
    fn default() -> Self {
        Self::canonical()
    }
}

impl DoubleGamma {
    /// Canonical parameters: delays 6 s and 16 s, unit dispersions, ratio 6.
    pub const fn canonical() -> Self {
        Self {
            peak_delay: 6.0,
            undershoot_delay: 16.0,
            peak_dispersion: 1.0,
            undershoot_dispersion: 1.0,
            ratio: 6.0,
            onset: 0.0,
        }
    }

    /// Unnormalized response at time `t` seconds.
    pub fn eval(&self, t: f64) -> f64 {
        let u = t - self.onset;
        gamma_density(
            u,
            self.peak_delay / self.peak_dispersion,
            1.0 / self.peak_dispersion,
        ) - gamma_density(
            u,
            self.undershoot_delay / self.undershoot_dispersion,
            1.0 / self.undershoot_dispersion,
        ) / self.ratio
    }

    /// Partial derivatives of [`eval`](Self::eval) with respect to
    /// `(peak_delay, undershoot_delay)`.
    pub fn delay_gradient(&self, t: f64) -> [f64; 2] {
        let u = t - self.onset;
        let d_shape = |delay: f64, disp: f64| {
            let shape = delay / disp;
            let rate = 1.0 / disp;
            let pdf = gamma_density(u, shape, rate);
            if pdf == 0.0 {
                0.0
            } else {
                pdf * ((u * rate).ln() - digamma(shape)) / disp
            }
        };
        [
            d_shape(self.peak_delay, self.peak_dispersion),
            -d_shape(self.undershoot_delay, self.undershoot_dispersion) / self.ratio,
        ]
    }

    /// Samples at `t = 0, dt, ..., (len-1) dt` without normalization.
    pub fn sample(&self, dt: f64, len: usize) -> Vec<f64> {
        (0..len).map(|i| self.eval(i as f64 * dt)).collect()
    }
}

fn gamma_density(t: f64, shape: f64, rate: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)).exp()
}

/// Number of samples covering `[0, duration]` at spacing `dt`.
pub fn grid_len(dt: f64, duration: f64) -> usize {
    // tolerate representation error, e.g. 32 / 0.1
    ((duration / dt) + 1e-9).floor() as usize + 1
}

fn check_grid(dt: f64, duration: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return invalid(format!("duration must be positive, got {duration}"));
    }
    if duration < 2.0 * dt {
        return invalid(format!(
            "duration {duration} shorter than two samples of {dt}"
        ));
    }
    Ok(grid_len(dt, duration))
}

/// Canonical double-gamma response sampled on `[0, duration]`, peak-normalized.
pub fn sample_reference_hrf(dt: f64, duration: f64) -> Result<SampledHrf> {
    let len = check_grid(dt, duration)?;
    Ok(reference_of_len(dt, len))
}

pub(crate) fn reference_of_len(dt: f64, len: usize) -> SampledHrf {
    SampledHrf::new(DoubleGamma::canonical().sample(dt, len), dt).peak_normalized()
}

fn normalize_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let scale = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if scale > 0.0 {
            col /= scale;
        }
    }
    m
}

/// Single-column basis holding the reference response.
pub fn make_fixed_basis(dt: f64, duration: f64) -> Result<BasisSet> {
    let reference = sample_reference_hrf(dt, duration)?;
    let matrix = DMatrix::from_column_slice(reference.len(), 1, &reference.samples);
    Ok(BasisSet {
        matrix,
        kind: BasisKind::Fixed,
        dt,
        reference,
    })
}

/// Reference response with its temporal and dispersion derivatives.
pub fn make_3hrf_basis(dt: f64, duration: f64) -> Result<BasisSet> {
    let len = check_grid(dt, duration)?;
    let canonical = DoubleGamma::canonical();
    let base = canonical.sample(dt, len);

    let shifted = DoubleGamma {
        onset: TEMPORAL_SHIFT,
        ..canonical
    }
    .sample(dt, len);
    let temporal: Vec<f64> = base
        .iter()
        .zip(&shifted)
        .map(|(a, b)| (a - b) / TEMPORAL_SHIFT)
        .collect();

    let dispersed = DoubleGamma {
        peak_dispersion: canonical.peak_dispersion + DISPERSION_STEP,
        ..canonical
    }
    .sample(dt, len);
    let dispersion: Vec<f64> = base
        .iter()
        .zip(&dispersed)
        .map(|(a, b)| (a - b) / DISPERSION_STEP)
        .collect();

    let mut matrix = DMatrix::zeros(len, 3);
    matrix.set_column(0, &nalgebra::DVector::from_vec(base));
    matrix.set_column(1, &nalgebra::DVector::from_vec(temporal));
    matrix.set_column(2, &nalgebra::DVector::from_vec(dispersion));
    let matrix = normalize_columns(matrix);
    let reference = SampledHrf::new(matrix.column(0).iter().copied().collect(), dt);
    Ok(BasisSet {
        matrix,
        kind: BasisKind::ThreeHrf,
        dt,
        reference,
    })
}

/// Identity basis of order `size`; each element is a stick at one lag of `dt` seconds.
pub fn make_fir_basis(size: usize, dt: f64) -> Result<BasisSet> {
    if size == 0 {
        return invalid("FIR basis size must be at least 1");
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    Ok(BasisSet {
        matrix: DMatrix::identity(size, size),
        kind: BasisKind::Fir,
        dt,
        reference: reference_of_len(dt, size),
    })
}

/// Builds any basis kind on a common grid. `fir_size` is only used for FIR.
pub fn make_basis(kind: BasisKind, dt: f64, duration: f64, fir_size: usize) -> Result<BasisSet> {
    match kind {
        BasisKind::Fixed => make_fixed_basis(dt, duration),
        BasisKind::ThreeHrf => make_3hrf_basis(dt, duration),
        BasisKind::Fir => make_fir_basis(fir_size, dt),
    }
}

/// Sample with the largest magnitude, sign preserved. First occurrence wins ties.
pub fn hrf_peak_amplitude(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return invalid("cannot take the peak of an empty response");
    }
    Ok(samples
        .iter()
        .copied()
        .fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc }))
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Continuous, Gamma};

    #[test]
    fn reference_peaks_at_five_seconds() {
        let h = sample_reference_hrf(1.0, 32.0).unwrap();
        assert_eq!(h.len(), 33);
        assert_eq!(h.time_to_peak(), 5.0);
        assert_eq!(max_abs(&h.samples), 1.0);
        assert_eq!(h.samples.iter().cloned().fold(f64::MIN, f64::max), 1.0);
    }

    #[test]
    fn reference_matches_gamma_densities() {
        let h = sample_reference_hrf(0.5, 32.0).unwrap();
        let peak = Gamma::new(6.0, 1.0).unwrap();
        let under = Gamma::new(16.0, 1.0).unwrap();
        let raw: Vec<f64> = (0..h.len())
            .map(|i| {
                let t = i as f64 * 0.5;
                if t == 0.0 {
                    0.0
                } else {
                    peak.pdf(t) - under.pdf(t) / 6.0
                }
            })
            .collect();
        let scale = raw.iter().cloned().fold(f64::MIN, f64::max);
        for (a, b) in h.samples.iter().zip(&raw) {
            let expected = b / scale;
            assert!(
                (a - expected).abs() <= 1e-12 * expected.abs().max(1e-300)
                    || (a - expected).abs() < 1e-15,
                "{a} vs {expected}"
            );
        }
    }

    #[test]
    fn reference_has_single_max_and_negative_undershoot() {
        for &(dt, dur) in &[(0.1, 32.0), (1.0, 32.0), (2.0, 30.0), (0.5, 20.0)] {
            let h = sample_reference_hrf(dt, dur).unwrap();
            let ones = h.samples.iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 1);
            assert!(h.samples.iter().cloned().fold(f64::MAX, f64::min) < 0.0);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(sample_reference_hrf(0.0, 32.0).is_err());
        assert!(sample_reference_hrf(-1.0, 32.0).is_err());
        assert!(sample_reference_hrf(1.0, 1.5).is_err());
        assert!(make_3hrf_basis(1.0, 0.0).is_err());
        assert!(make_fir_basis(0, 1.0).is_err());
    }

    #[test]
    fn three_hrf_columns() {
        let b = make_3hrf_basis(1.0, 32.0).unwrap();
        assert_eq!((b.len(), b.size()), (33, 3));
        let h = sample_reference_hrf(1.0, 32.0).unwrap();
        assert_eq!(b.column(0), h.samples);

        // temporal derivative: normalized backward difference with a 1 s shift
        let canon = DoubleGamma::canonical();
        let diff: Vec<f64> = (0..33)
            .map(|i| {
                let t = i as f64;
                canon.eval(t) - canon.eval(t - 1.0)
            })
            .collect();
        let s = max_abs(&diff);
        let col = b.column(1);
        let dev = col
            .iter()
            .zip(&diff)
            .map(|(a, d)| (a - d / s).abs())
            .fold(0.0, f64::max);
        assert_eq!(dev, 0.0);

        for m in 1..3 {
            let col = b.column(m);
            let changes = col.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
            assert!(changes >= 1, "column {m} has no sign change");
            assert!(col.iter().all(|v| v.is_finite()));
            assert!((max_abs(&col) - 1.0).abs() < 1e-15);
        }
        let rank = b.matrix.clone().svd(false, false).rank(1e-10);
        assert_eq!(rank, 3);
    }

    #[test]
    fn fir_is_identity() {
        let b = make_fir_basis(3, 1.0).unwrap();
        assert_eq!(b.matrix, DMatrix::identity(3, 3));
        assert_eq!(b.kind, BasisKind::Fir);
        assert_eq!(make_fir_basis(20, 1.0).unwrap().size(), 20);
        assert_eq!(make_fir_basis(10, 2.0).unwrap().size(), 10);
        let v = [0.3, -1.0, 2.5];
        assert_eq!(b.reconstruct(&v).samples, v.to_vec());
    }

    #[test]
    fn peak_amplitude_keeps_sign() {
        assert_eq!(hrf_peak_amplitude(&[0.0, 1.0, 0.5]).unwrap(), 1.0);
        assert_eq!(hrf_peak_amplitude(&[0.0, -2.0, 0.5]).unwrap(), -2.0);
        assert!(hrf_peak_amplitude(&[]).is_err());
        let h = sample_reference_hrf(1.0, 32.0).unwrap();
        assert_eq!(hrf_peak_amplitude(&h.samples).unwrap(), 1.0);
    }

    #[test]
    fn delay_gradient_matches_differences() {
        let g = DoubleGamma::canonical();
        for &t in &[2.0, 5.0, 9.5, 17.0] {
            let an = g.delay_gradient(t);
            let e = 1e-6;
            let fd0 = (DoubleGamma {
                peak_delay: 6.0 + e,
                ..g
            }
            .eval(t)
                - DoubleGamma {
                    peak_delay: 6.0 - e,
                    ..g
                }
                .eval(t))
                / (2.0 * e);
            let fd1 = (DoubleGamma {
                undershoot_delay: 16.0 + e,
                ..g
            }
            .eval(t)
                - DoubleGamma {
                    undershoot_delay: 16.0 - e,
                    ..g
                }
                .eval(t))
                / (2.0 * e);
            assert!((an[0] - fd0).abs() < 1e-8, "{} {}", an[0], fd0);
            assert!((an[1] - fd1).abs() < 1e-8, "{} {}", an[1], fd1);
        }
    }

    proptest::proptest! {
        #[test]
        fn peak_amplitude_is_positively_homogeneous(
            v in proptest::collection::vec(-10.0f64..10.0, 1..30),
            c in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let a = hrf_peak_amplitude(&scaled).unwrap();
            let b = c * hrf_peak_amplitude(&v).unwrap();
            proptest::prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn fir_basis_acts_as_identity(v in proptest::collection::vec(-5.0f64..5.0, 1..25)) {
            let b = make_fir_basis(v.len(), 1.0).unwrap();
            proptest::prop_assert_eq!(b.reconstruct(&v).samples, v);
        }
    }
}
