//! The command-line workflow through the library: simulate a dataset into a
//! directory, fit it, and check the manifest hashes.
//!
//! cargo run --release --example file_formats

use r1glm::cli::io::read_matrix;
use r1glm::cli::{fit, simulate, FitOptions, RunManifest, SimulateConfig, BETAS_FILE};
use r1glm::synth::SynthConfig;

fn main() -> r1glm::Result<()> {
    let root = std::env::temp_dir().join(format!("r1glm-example-{}", std::process::id()));
    let (data_dir, fit_dir) = (root.join("data"), root.join("fit"));

    let config = SimulateConfig {
        n_voxels: 8,
        data: SynthConfig {
            n_scans: 200,
            n_runs: 2,
            n_conditions: 4,
            noise_sigma: 0.2,
            seed: 9,
            ..Default::default()
        },
    };
    let manifest = simulate(&config, &data_dir, false)?;
    println!(
        "simulated: {:?}",
        manifest.outputs.keys().collect::<Vec<_>>()
    );

    let report = fit(&data_dir, &fit_dir, &FitOptions::default(), None)?;
    println!(
        "fit {} voxels with {}: {} converged, {} failed",
        report.n_voxels, report.method, report.converged, report.failed
    );

    let betas = read_matrix(&fit_dir.join(BETAS_FILE))?;
    println!("betas.csv is {}x{}", betas.nrows(), betas.ncols());

    let stale = RunManifest::read(&fit_dir)?.verify(&fit_dir);
    println!(
        "outputs matching their recorded hashes: {}",
        stale.is_empty()
    );

    std::fs::remove_dir_all(&root)?;
    Ok(())
}
