//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! Each iteration identifies the active bounds by gradient projection, builds
//! a two-loop L-BFGS direction on the free variables, and tries a strong-Wolfe
//! step along the feasible part of that ray. If that fails, a projected
//! backtracking search is used, then projected steepest descent.

mod gradcheck;
mod line_search;
mod qr;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use gradcheck::{check_gradient, finite_difference_gradient};
pub use line_search::{strong_wolfe, Trial, WolfeParams};
pub use qr::{qr_reduce, QrReducer, ReducedSystem};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Tolerance on the infinity norm of the projected gradient.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_linesearch_steps: usize,
    /// Relative objective decrease below which the run is considered
    /// stationary. Zero disables the test.
    pub f_rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            grad_tol: 1e-6,
            max_iter: 500,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_linesearch_steps: 30,
            f_rel_tol: 1e-15,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return invalid("solver memory must be at least 1");
        }
        if !(self.grad_tol > 0.0) {
            return invalid("gradient tolerance must be positive");
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return invalid("Wolfe constants must satisfy 0 < c1 < c2 < 1");
        }
        if self.max_linesearch_steps == 0 {
            return invalid("line search needs at least one step");
        }
        Ok(())
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::GradientTolerance | Termination::FunctionTolerance
        )
    }
}

/// Iterate, gradient, last step length and curvature history.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub step: f64,
    pub history: VecDeque<(Vec<f64>, Vec<f64>)>,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective at the start point and after every accepted iteration.
    pub trace: Vec<f64>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}

/// Variables not held at a bound by the gradient.
fn free_mask(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| !((xi <= l && gi > 0.0) || (xi >= u && gi < 0.0)))
        .collect()
}

fn masked_dot(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Two-loop recursion restricted to the free variables.
fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>)>, free: &[bool]) -> Vec<f64> {
    let mut q: Vec<f64> = g
        .iter()
        .zip(free)
        .map(|(&v, &f)| if f { v } else { 0.0 })
        .collect();
    let mut alphas = Vec::with_capacity(history.len());
    let mut gamma = None;
    for (s, y) in history.iter().rev() {
        let sy = masked_dot(s, y, free);
        if sy <= 1e-12 * masked_dot(y, y, free).max(f64::MIN_POSITIVE) {
            alphas.push(None);
            continue;
        }
        if gamma.is_none() {
            gamma = Some(sy / masked_dot(y, y, free));
        }
        let rho = 1.0 / sy;
        let a = rho * masked_dot(s, &q, free);
        for ((qi, yi), &f) in q.iter_mut().zip(y).zip(free) {
            if f {
                *qi -= a * yi;
            }
        }
        alphas.push(Some((a, rho)));
    }
    let scale = gamma.unwrap_or(1.0);
    for v in q.iter_mut() {
        *v *= scale;
    }
    for ((s, y), entry) in history.iter().zip(alphas.iter().rev()) {
        if let Some((a, rho)) = *entry {
            let b = rho * masked_dot(y, &q, free);
            for ((qi, si), &f) in q.iter_mut().zip(s).zip(free) {
                if f {
                    *qi += (a - b) * si;
                }
            }
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Largest step along `d` that keeps `x + a d` inside the box.
fn max_feasible_step(x: &[f64], d: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut amax = f64::INFINITY;
    for i in 0..x.len() {
        if d[i] > 0.0 && upper[i].is_finite() {
            amax = amax.min((upper[i] - x[i]) / d[i]);
        } else if d[i] < 0.0 && lower[i].is_finite() {
            amax = amax.min((lower[i] - x[i]) / d[i]);
        }
    }
    amax.max(0.0)
}

struct Problem<'a, F> {
    fg: F,
    lower: &'a [f64],
    upper: &'a [f64],
    evaluations: usize,
}

impl<F> Problem<'_, F>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; x.len()];
        let f = (self.fg)(x, &mut g);
        self.evaluations += 1;
        (f, g)
    }

    /// Armijo backtracking on the projected path `P(x + a d)`.
    fn projected_backtrack(
        &mut self,
        state: &SolverState,
        d: &[f64],
        initial: f64,
        config: &SolverConfig,
    ) -> Option<(Vec<f64>, f64, Vec<f64>)> {
        let mut a = initial;
        for _ in 0..config.max_linesearch_steps {
            let mut xa: Vec<f64> = state.x.iter().zip(d).map(|(x, di)| x + a * di).collect();
            project(&mut xa, self.lower, self.upper);
            let decrease: f64 = state
                .gradient
                .iter()
                .zip(xa.iter().zip(&state.x))
                .map(|(g, (n, o))| g * (n - o))
                .sum();
            if decrease < 0.0 {
                let (f, g) = self.eval(&xa);
                if f.is_finite() && f <= state.value + config.wolfe_c1 * decrease {
                    return Some((xa, f, g));
                }
            } else if xa == state.x {
                return None;
            }
            a *= 0.5;
        }
        None
    }
}

/// Minimizes `fg` over the box `[lower, upper]`. `fg(x, grad)` returns the
/// objective and writes the gradient.
pub fn lbfgs_box_minimize<F>(
    fg: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    config: &SolverConfig,
) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    config.validate()?;
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return invalid("bounds must have the same length as the start point");
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return invalid("every lower bound must not exceed its upper bound");
    }
    let mut problem = Problem {
        fg,
        lower,
        upper,
        evaluations: 0,
    };
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (value, gradient) = problem.eval(&x);
    let mut state = SolverState {
        x,
        value,
        gradient,
        step: 0.0,
        history: VecDeque::new(),
        iteration: 0,
    };
    let mut trace = vec![state.value];
    let wolfe = WolfeParams {
        c1: config.wolfe_c1,
        c2: config.wolfe_c2,
        max_steps: config.max_linesearch_steps,
    };

    let termination = loop {
        if projected_gradient_norm(&state.x, &state.gradient, lower, upper) <= config.grad_tol {
            break Termination::GradientTolerance;
        }
        if state.iteration >= config.max_iter {
            break Termination::MaxIterations;
        }
        let free = free_mask(&state.x, &state.gradient, lower, upper);
        let mut d = lbfgs_direction(&state.gradient, &state.history, &free);
        let mut slope: f64 = d.iter().zip(&state.gradient).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            state.history.clear();
            d = state
                .gradient
                .iter()
                .zip(&free)
                .map(|(&g, &f)| if f { -g } else { 0.0 })
                .collect();
            slope = d.iter().zip(&state.gradient).map(|(a, b)| a * b).sum();
        }
        let initial = if state.history.is_empty() {
            let dn = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            (1.0 / dn).min(1.0)
        } else {
            1.0
        };

        let amax = max_feasible_step(&state.x, &d, lower, upper);
        let mut accepted = None;
        if amax > 0.0 && slope < 0.0 {
            let x_ref = &state.x;
            let dir = &d;
            let trial = strong_wolfe(
                |a| {
                    let mut xa: Vec<f64> =
                        x_ref.iter().zip(dir).map(|(x, di)| x + a * di).collect();
                    project(&mut xa, lower, upper);
                    problem.eval(&xa)
                },
                &d,
                state.value,
                slope,
                initial,
                amax,
                &wolfe,
            );
            if let Some(t) = trial {
                let mut xa: Vec<f64> = state
                    .x
                    .iter()
                    .zip(&d)
                    .map(|(x, di)| x + t.step * di)
                    .collect();
                project(&mut xa, lower, upper);
                accepted = Some((xa, t.value, t.gradient, t.step));
            }
        }
        if accepted.is_none() && slope < 0.0 {
            accepted = problem
                .projected_backtrack(&state, &d, initial.max(amax.min(1.0)), config)
                .map(|(x, f, g)| (x, f, g, f64::NAN));
        }
        if accepted.is_none() {
            let sd: Vec<f64> = state.gradient.iter().map(|g| -g).collect();
            let gn = sd.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            accepted = problem
                .projected_backtrack(&state, &sd, (1.0 / gn).min(1.0), config)
                .map(|(x, f, g)| (x, f, g, f64::NAN));
            state.history.clear();
        }
        let Some((x_new, f_new, g_new, step)) = accepted else {
            break Termination::LineSearchFailure;
        };
        if !(f_new <= state.value) {
            break Termination::LineSearchFailure;
        }

        let s: Vec<f64> = x_new.iter().zip(&state.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new
            .iter()
            .zip(&state.gradient)
            .map(|(a, b)| a - b)
            .collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * yy && sy > 0.0 {
            state.history.push_back((s, y));
            if state.history.len() > config.memory {
                state.history.pop_front();
            }
        }
        let f_old = state.value;
        state.x = x_new;
        state.value = f_new;
        state.gradient = g_new;
        state.step = step;
        state.iteration += 1;
        trace.push(f_new);

        if config.f_rel_tol > 0.0
            && f_old - f_new
                <= config.f_rel_tol * f_old.abs().max(f_new.abs()).max(f64::MIN_POSITIVE)
        {
            if projected_gradient_norm(&state.x, &state.gradient, lower, upper) <= config.grad_tol {
                break Termination::GradientTolerance;
            }
            break Termination::FunctionTolerance;
        }
    };

    Ok(Minimum {
        x: state.x,
        value: state.value,
        iterations: state.iteration,
        evaluations: problem.evaluations,
        termination,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(c: Vec<f64>) -> impl FnMut(&[f64], &mut [f64]) -> f64 {
        move |x, g| {
            let mut f = 0.0;
            for i in 0..x.len() {
                g[i] = x[i] - c[i];
                f += 0.5 * g[i] * g[i];
            }
            f
        }
    }

    #[test]
    fn quadratic_inside_box() {
        let c = vec![0.3, -0.7, 0.1];
        let r = lbfgs_box_minimize(
            quadratic(c.clone()),
            &[0.0; 3],
            &[-1.0; 3],
            &[1.0; 3],
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.converged());
        for (a, b) in r.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_outside_box_is_clipped() {
        let c = vec![2.0, -3.0, 0.5, 0.9];
        let lower = [-1.0, -1.0, 0.0, -5.0];
        let upper = [1.0, 1.0, 0.2, 5.0];
        let r = lbfgs_box_minimize(
            quadratic(c.clone()),
            &[0.0, 0.0, 0.1, 0.0],
            &lower,
            &upper,
            &SolverConfig::default(),
        )
        .unwrap();
        for i in 0..4 {
            let expected = c[i].clamp(lower[i], upper[i]);
            assert!(
                (r.x[i] - expected).abs() < 1e-8,
                "{i}: {} vs {expected}",
                r.x[i]
            );
        }
    }

    #[test]
    fn rosenbrock_unbounded() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let cfg = SolverConfig {
            grad_tol: 1e-9,
            ..Default::default()
        };
        let inf = f64::INFINITY;
        let r = lbfgs_box_minimize(f, &[-1.2, 1.0], &[-inf, -inf], &[inf, inf], &cfg).unwrap();
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn max_iter_returns_best_so_far() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let cfg = SolverConfig {
            max_iter: 3,
            ..Default::default()
        };
        let inf = f64::INFINITY;
        let r = lbfgs_box_minimize(f, &[-1.2, 1.0], &[-inf; 2], &[inf; 2], &cfg).unwrap();
        assert_eq!(r.termination, Termination::MaxIterations);
        assert!(!r.converged());
        assert!(r.value < 24.2);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SolverConfig {
            wolfe_c1: 0.95,
            ..Default::default()
        };
        assert!(lbfgs_box_minimize(quadratic(vec![0.0]), &[0.0], &[-1.0], &[1.0], &bad).is_err());
        assert!(lbfgs_box_minimize(
            quadratic(vec![0.0]),
            &[0.0],
            &[1.0],
            &[-1.0],
            &SolverConfig::default()
        )
        .is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]

        /// Strictly convex quadratic with unbounded box converges to the analytic minimum.
        #[test]
        fn convex_quadratic_from_any_start(
            seed in proptest::collection::vec(-3.0f64..3.0, 9),
            start in proptest::collection::vec(-50.0f64..50.0, 3),
            c in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let m = nalgebra::DMatrix::from_row_slice(3, 3, &seed);
            let a = &m * m.transpose() + nalgebra::DMatrix::identity(3, 3);
            let cv = nalgebra::DVector::from_vec(c);
            let xstar = a.clone().lu().solve(&cv).unwrap();
            let a2 = a.clone();
            let cv2 = cv.clone();
            let values = std::cell::RefCell::new(Vec::new());
            let f = |x: &[f64], g: &mut [f64]| {
                let xv = nalgebra::DVector::from_column_slice(x);
                let ax = &a2 * &xv;
                g.copy_from_slice((&ax - &cv2).as_slice());
                let v = 0.5 * xv.dot(&ax) - cv2.dot(&xv);
                values.borrow_mut().push(v);
                v
            };
            let inf = f64::INFINITY;
            let cfg = SolverConfig { grad_tol: 1e-10, ..Default::default() };
            let r = lbfgs_box_minimize(f, &start, &[-inf; 3], &[inf; 3], &cfg).unwrap();
            for i in 0..3 {
                proptest::prop_assert!((r.x[i] - xstar[i]).abs() < 1e-6 * (1.0 + xstar[i].abs()));
            }
        }

        /// Iterates stay feasible and accepted values never increase.
        #[test]
        fn feasible_and_monotone(
            c in proptest::collection::vec(-4.0f64..4.0, 4),
            start in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let lower = [-1.0; 4];
            let upper = [1.0; 4];
            let seen = std::cell::RefCell::new(Vec::new());
            let cc = c.clone();
            let f = |x: &[f64], g: &mut [f64]| {
                seen.borrow_mut().push(x.to_vec());
                // non-separable convex quartic
                let s: f64 = x.iter().zip(&cc).map(|(a, b)| (a - b).powi(2)).sum();
                let cross = x[0] * x[1] - x[2] * x[3];
                for i in 0..4 {
                    g[i] = 2.0 * (x[i] - cc[i]) * s * 0.1 + 2.0 * (x[i] - cc[i]);
                }
                g[0] += 0.5 * x[1]; g[1] += 0.5 * x[0]; g[2] -= 0.5 * x[3]; g[3] -= 0.5 * x[2];
                0.05 * s * s + s + 0.5 * cross
            };
            let r = lbfgs_box_minimize(f, &start, &lower, &upper, &SolverConfig::default()).unwrap();
            for x in seen.borrow().iter() {
                for i in 0..4 {
                    proptest::prop_assert!(x[i] >= lower[i] && x[i] <= upper[i]);
                }
            }
            proptest::prop_assert!(r.x.iter().all(|v| (-1.0..=1.0).contains(v)));
            proptest::prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
