//! Times the rank-1 fit with and without the thin-QR reduction of [X Z] on
//! a tall design, and checks both give the same estimates.
//!
//! cargo run --release --example qr_reduction

use std::time::Instant;

use r1glm::design::build_design;
use r1glm::estimators::{RankOneConfig, RankOneProblem};
use r1glm::hrf_basis::make_3hrf_basis;
use r1glm::solver::qr_reduce;
use r1glm::synth::{generate_dataset, generator_drift, SynthConfig};

fn main() -> r1glm::Result<()> {
    let cfg = SynthConfig {
        n_scans: 720,
        n_conditions: 16,
        drift_order: 3,
        seed: 4,
        ..Default::default()
    };
    let data = generate_dataset(&cfg, 20)?;
    let basis = make_3hrf_basis(cfg.tr, 32.0)?;
    let x = build_design(&data.events, &basis, cfg.tr, cfg.n_scans)?;
    let z = generator_drift(&cfg)?;

    let y0 = data.y.column(0).clone_owned();
    let reduced = qr_reduce(&x, &z, &y0).expect("full-rank design");
    println!(
        "{} scans reduced to {} rows (offset {:.3})",
        x.n_scans(),
        reduced.y.len(),
        reduced.offset
    );

    let mut fits = Vec::new();
    for qr in [false, true] {
        let problem = RankOneProblem::new(
            &x,
            &z,
            &basis,
            false,
            RankOneConfig {
                qr,
                ..Default::default()
            },
        )?;
        let start = Instant::now();
        let out: Vec<_> = (0..data.y.ncols())
            .map(|v| problem.fit(&data.y.column(v).clone_owned(), None))
            .collect::<Result<_, _>>()?;
        println!(
            "qr = {qr:5}: {:.3} s for {} voxels",
            start.elapsed().as_secs_f64(),
            out.len()
        );
        fits.push(out);
    }
    let diff = fits[0]
        .iter()
        .zip(&fits[1])
        .flat_map(|(a, b)| a.beta.iter().zip(&b.beta).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    println!("largest beta difference: {diff:.2e}");
    Ok(())
}
