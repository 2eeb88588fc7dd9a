//! Prints the three response bases and the canonical response on a 1 s grid.
//!
//! cargo run --example basis_sets

use r1glm::hrf_basis::{
    make_3hrf_basis, make_fir_basis, make_fixed_basis, sample_reference_hrf, DoubleGamma,
};

fn main() -> r1glm::Result<()> {
    let (dt, duration) = (1.0, 32.0);

    let canonical = sample_reference_hrf(dt, duration)?;
    println!(
        "canonical response: {} samples, peak at {:.1} s",
        canonical.len(),
        canonical.time_to_peak()
    );

    let late = DoubleGamma {
        peak_delay: 8.0,
        ..DoubleGamma::canonical()
    };
    let samples = late.sample(dt, canonical.len());
    let peak = samples
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    println!("delayed response peaks at {:.1} s", peak as f64 * dt);

    for basis in [
        make_fixed_basis(dt, duration)?,
        make_3hrf_basis(dt, duration)?,
        make_fir_basis(20, dt)?,
    ] {
        println!(
            "{:>6}: {} samples x {} elements",
            basis.kind.name(),
            basis.len(),
            basis.size()
        );
    }

    // a shifted response is roughly canonical + derivative
    let three = make_3hrf_basis(dt, duration)?;
    let shifted = three.reconstruct(&[1.0, 0.5, 0.0]);
    println!(
        "canonical + 0.5 x time derivative peaks at {:.1} s",
        shifted.time_to_peak()
    );
    Ok(())
}
