//! The box-constrained L-BFGS solver on a bounded Rosenbrock function whose
//! unconstrained minimum lies outside the box.
//!
//! cargo run --example solver

use r1glm::solver::{check_gradient, lbfgs_box_minimize, SolverConfig};

fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
    let mut f = 0.0;
    g.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..x.len() - 1 {
        let (a, b) = (1.0 - x[i], x[i + 1] - x[i] * x[i]);
        f += a * a + 100.0 * b * b;
        g[i] += -2.0 * a - 400.0 * x[i] * b;
        g[i + 1] += 200.0 * b;
    }
    f
}

fn main() -> r1glm::Result<()> {
    let x0 = vec![-1.2, 1.0, -0.5, 0.8];
    println!(
        "gradient check: relative error {:.1e}",
        check_gradient(rosenbrock, &x0, 1e-6)
    );

    let free = lbfgs_box_minimize(
        rosenbrock,
        &x0,
        &[f64::NEG_INFINITY; 4],
        &[f64::INFINITY; 4],
        &SolverConfig::default(),
    )?;
    println!(
        "unbounded: x = {:.4?}, f = {:.2e}, {} iterations",
        free.x, free.value, free.iterations
    );

    // cap the last coordinate below its unconstrained optimum
    let upper = [2.0, 2.0, 2.0, 0.5];
    let boxed = lbfgs_box_minimize(
        rosenbrock,
        &x0,
        &[-2.0; 4],
        &upper,
        &SolverConfig::default(),
    )?;
    println!(
        "boxed:     x = {:.4?}, f = {:.4}, {:?}",
        boxed.x, boxed.value, boxed.termination
    );
    Ok(())
}
