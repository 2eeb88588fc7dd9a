/// Central-difference gradient of `f` at `x`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + step;
            let up = f(&xp);
            xp[i] = x[i] - step;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Compares the analytic gradient of `fg` at `x` with central differences.
///
/// Returns the worst coordinate error scaled by the gradient's infinity norm,
/// `max_i |g_i - fd_i| / max(|g|_inf, |fd|_inf)`, or the absolute error when
/// both gradients vanish.
pub fn check_gradient<F>(mut fg: F, x: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut analytic = vec![0.0; x.len()];
    fg(x, &mut analytic);
    let mut scratch = vec![0.0; x.len()];
    let numeric = finite_difference_gradient(|z| fg(z, &mut scratch), x, step);
    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}
