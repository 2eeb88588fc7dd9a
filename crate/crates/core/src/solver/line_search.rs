//! Strong-Wolfe line search along a ray, capped at a maximum step.

/// An evaluated trial step.
#[derive(Debug, Clone)]
pub struct Trial {
    pub step: f64,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Directional derivative at the trial point.
    pub slope: f64,
}

pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_steps: usize,
}

/// Minimizer of the cubic interpolating `(x1, f1, g1)` and `(x2, f2, g2)`,
/// clamped to `[lo, hi]`; falls back to the midpoint.
fn cubic_min(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, lo: f64, hi: f64) -> f64 {
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    if disc >= 0.0 {
        let d2 = disc.sqrt() * (x2 - x1).signum();
        let denom = g2 - g1 + 2.0 * d2;
        if denom != 0.0 {
            let t = x2 - (x2 - x1) * (g2 + d2 - d1) / denom;
            if t.is_finite() {
                return t.clamp(lo, hi);
            }
        }
    }
    0.5 * (lo + hi)
}

/// Searches `phi(a) = f(x + a d)` for a step satisfying the strong Wolfe
/// conditions. `eval(a)` returns the objective and gradient at `x + a d`;
/// `d` is only needed to form directional derivatives.
///
/// When the search reaches `max_step` with sufficient decrease but without
/// the curvature condition, that capped step is returned (it lies on a bound).
/// If the bracket collapses, the best sufficient-decrease step seen is returned.
pub fn strong_wolfe<F>(
    mut eval: F,
    direction: &[f64],
    f0: f64,
    slope0: f64,
    initial: f64,
    max_step: f64,
    params: &WolfeParams,
) -> Option<Trial>
where
    F: FnMut(f64) -> (f64, Vec<f64>),
{
    debug_assert!(slope0 < 0.0);
    let mut trial = |a: f64| {
        let (value, gradient) = eval(a);
        let slope = gradient.iter().zip(direction).map(|(g, d)| g * d).sum();
        Trial {
            step: a,
            value,
            gradient,
            slope,
        }
    };
    let armijo = |t: &Trial| t.value <= f0 + params.c1 * t.step * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -params.c2 * slope0;

    let mut best: Option<Trial> = None;
    let keep_best = |t: &Trial, best: &mut Option<Trial>| {
        if t.value.is_finite()
            && t.value <= f0 + params.c1 * t.step * slope0
            && best.as_ref().is_none_or(|b| t.value < b.value)
        {
            *best = Some(t.clone());
        }
    };

    let mut prev = Trial {
        step: 0.0,
        value: f0,
        gradient: Vec::new(),
        slope: slope0,
    };
    let mut a = initial.min(max_step);
    let mut evals = 0;
    let (mut lo, mut hi);
    loop {
        if evals >= params.max_steps {
            return best;
        }
        let cur = trial(a);
        evals += 1;
        keep_best(&cur, &mut best);
        if !cur.value.is_finite() {
            // shrink back toward the last finite point
            lo = prev;
            hi = Trial {
                step: a,
                value: f64::INFINITY,
                gradient: Vec::new(),
                slope: f64::NAN,
            };
            break;
        }
        if !armijo(&cur) || (evals > 1 && cur.value >= prev.value) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            hi = prev;
            lo = cur;
            break;
        }
        if a >= max_step {
            return Some(cur);
        }
        let next = cubic_min(
            prev.step,
            prev.value,
            prev.slope,
            cur.step,
            cur.value,
            cur.slope,
            a * 1.1,
            a * 10.0,
        );
        prev = cur;
        a = next.min(max_step);
    }

    // zoom
    while evals < params.max_steps {
        let (l, h) = (lo.step.min(hi.step), lo.step.max(hi.step));
        let width = h - l;
        if width <= 1e-16 * h.max(1.0) {
            break;
        }
        let a = if hi.slope.is_finite() && hi.value.is_finite() {
            cubic_min(
                lo.step,
                lo.value,
                lo.slope,
                hi.step,
                hi.value,
                hi.slope,
                l + 0.1 * width,
                h - 0.1 * width,
            )
        } else {
            0.5 * (l + h)
        };
        let cur = trial(a);
        evals += 1;
        keep_best(&cur, &mut best);
        if !cur.value.is_finite() || !armijo(&cur) || cur.value >= lo.value {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Some(cur);
            }
            if cur.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    best
}
