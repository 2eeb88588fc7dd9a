//! Savitzky–Golay detrending.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::LeastSquares;

/// Weights that read the value at offset `at` of a degree-`degree` least
/// squares polynomial through the samples at offsets `lo..=hi`.
fn fit_weights(lo: isize, hi: isize, at: isize, degree: usize) -> Vec<f64> {
    let m = (hi - lo + 1) as usize;
    let degree = degree.min(m - 1);
    // scaled abscissa keeps the Vandermonde matrix well conditioned
    let half = ((hi - lo) as f64 / 2.0).max(1.0);
    let mid = (hi + lo) as f64 / 2.0;
    let v = DMatrix::from_fn(m, degree + 1, |i, p| {
        ((lo + i as isize) as f64 - mid).powi(p as i32) / half.powi(p as i32)
    });
    let pinv = LeastSquares::new(&v).pinv().clone();
    let x = (at as f64 - mid) / half;
    (0..m)
        .map(|i| (0..=degree).map(|p| x.powi(p as i32) * pinv[(p, i)]).sum())
        .collect()
}

/// Savitzky–Golay smooth of `y`: a local polynomial fit over a centred
/// window, refitted on truncated windows near the ends.
pub fn savgol_smooth(y: &[f64], window: usize, degree: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 {
        return invalid(format!("window must be odd, got {window}"));
    }
    if window <= degree {
        return invalid(format!("window {window} must exceed the degree {degree}"));
    }
    if y.len() < window {
        return invalid(format!(
            "signal of {} samples is shorter than the window {window}",
            y.len()
        ));
    }
    let n = y.len() as isize;
    let half = (window / 2) as isize;
    let interior = fit_weights(-half, half, 0, degree);
    let mut out = vec![0.0; y.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let (lo, hi) = ((i - half).max(0), (i + half).min(n - 1));
        let w = if hi - lo == 2 * half {
            interior.clone()
        } else {
            fit_weights(lo - i, hi - i, 0, degree)
        };
        *o = w
            .iter()
            .zip(&y[lo as usize..=hi as usize])
            .map(|(a, b)| a * b)
            .sum();
    }
    Ok(out)
}

/// `y` minus its Savitzky–Golay smooth.
pub fn savgol_detrend(y: &[f64], window: usize, degree: usize) -> Result<Vec<f64>> {
    let smooth = savgol_smooth(y, window, degree)?;
    Ok(y.iter().zip(smooth).map(|(a, b)| a - b).collect())
}
