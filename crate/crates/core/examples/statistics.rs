//! The evaluation statistics: rank correlation, the exact signed-rank test,
//! the two-proportion test, ridge with a GCV-chosen penalty and image
//! identification.
//!
//! cargo run --example statistics

use nalgebra::{DMatrix, DVector};
use r1glm::eval::{
    binomial_proportion_test, default_lambda_grid, identify_images, kendall_tau, pearson_r,
    ridge_gcv, wilcoxon_signed_rank, Sides,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> r1glm::Result<()> {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [1.5, 1.0, 3.5, 5.0, 4.5];
    println!(
        "pearson {:.3}, kendall tau-b {:.3}",
        pearson_r(&a, &b)?,
        kendall_tau(&a, &b)?
    );

    let better = [0.61, 0.58, 0.66, 0.70, 0.63];
    let worse = [0.55, 0.57, 0.60, 0.64, 0.59];
    let w = wilcoxon_signed_rank(&better, &worse, Sides::Greater)?;
    println!(
        "signed-rank: W = {}, one-sided p = {:.4} (exact = {})",
        w.statistic, w.p, w.exact
    );

    let (z, p) = binomial_proportion_test(0.72, 0.60, 200)?;
    println!("proportions 0.72 vs 0.60 over 200 trials: z = {z:.3}, p = {p:.4}");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(60, 4, |_, _| rng.random_range(-1.0..1.0));
    let w_true = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
    let y = &x * &w_true + DVector::from_fn(60, |_, _| 0.1 * rng.random_range(-1.0..1.0));
    let fit = ridge_gcv(&x, &y, &default_lambda_grid())?;
    println!(
        "ridge: lambda {:.2e}, weights {:?}",
        fit.lambda,
        fit.weights
            .iter()
            .map(|v| (v * 100.0).round() / 100.0)
            .collect::<Vec<_>>()
    );

    let measured = DMatrix::from_fn(8, 50, |_, _| rng.random_range(-1.0..1.0));
    let predicted = &measured + DMatrix::from_fn(8, 50, |_, _| 0.8 * rng.random_range(-1.0..1.0));
    let id = identify_images(&predicted, &measured)?;
    println!(
        "identification: accuracy {:.3} over 8 images ({} ties)",
        id.accuracy, id.ties
    );
    Ok(())
}
