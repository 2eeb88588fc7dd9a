//! Fits one simulated voxel with GLM, GLMS, R1-GLM and R1-GLMS on the 3HRF
//! basis and compares the recovered betas with the truth.
//!
//! cargo run --release --example rank_one_fit

use r1glm::design::{build_design, build_separate_designs};
use r1glm::estimators::{
    extract_betas_and_hrfs, glm_fit, glms_fit, r1glm_fit, r1glms_fit, RankOneConfig,
};
use r1glm::eval::pearson_r;
use r1glm::hrf_basis::make_3hrf_basis;
use r1glm::synth::{generate_voxel, generator_drift, SynthConfig};

fn main() -> r1glm::Result<()> {
    let cfg = SynthConfig {
        n_scans: 300,
        n_conditions: 8,
        noise_sigma: 0.3,
        seed: 7,
        ..Default::default()
    };
    let (y, truth, events) = generate_voxel(&cfg)?;
    let basis = make_3hrf_basis(cfg.tr, 32.0)?;
    let x = build_design(&events, &basis, cfg.tr, cfg.n_scans)?;
    let s = build_separate_designs(&events, &basis, cfg.tr, cfg.n_scans)?;
    let z = generator_drift(&cfg)?;
    let config = RankOneConfig::default();

    let glm = extract_betas_and_hrfs(&glm_fit(&x, &z, &y)?.coefficients, &basis)?;
    let glms = extract_betas_and_hrfs(&glms_fit(&s, &z, &y)?.coefficients(), &basis)?;
    let r1 = r1glm_fit(&x, &y, &z, &basis, &config, None)?;
    let r1s = r1glms_fit(&s, &y, &z, &basis, &config, None)?;

    println!("true betas  {:?}", rounded(&truth.beta));
    for (name, beta) in [
        ("glm", &glm.betas),
        ("glms", &glms.betas),
        ("r1glm", &r1.beta),
        ("r1glms", &r1s.beta),
    ] {
        println!(
            "{name:>7}     {:?}  r = {:.3}",
            rounded(beta),
            pearson_r(beta, &truth.beta)?
        );
    }
    println!(
        "r1glm: {} iterations, converged = {}, peak at {:.1} s",
        r1.iterations,
        r1.converged,
        r1.hrf.time_to_peak()
    );
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}
