//! Generates a multi-run dataset with feature-driven betas, then removes the
//! slow drift of one voxel with a Savitzky-Golay filter.
//!
//! cargo run --example synthetic_data

use r1glm::synth::{generate_dataset, savgol_detrend, Schedule, SynthConfig};

fn main() -> r1glm::Result<()> {
    let cfg = SynthConfig {
        n_scans: 240,
        n_runs: 3,
        n_conditions: 4,
        schedule: Schedule::Spaced,
        peak_range: Some([4.0, 7.0]),
        n_features: 5,
        drift_amplitude: 3.0,
        seed: 2,
        ..Default::default()
    };
    let data = generate_dataset(&cfg, 12)?;
    let features = data.features.as_ref().expect("features requested");
    println!(
        "bold {}x{}, {} events, features {}x{}",
        data.y.nrows(),
        data.y.ncols(),
        data.events.events().len(),
        features.nrows(),
        features.ncols()
    );

    for (v, t) in data.truths.iter().enumerate().take(4) {
        println!(
            "voxel {v}: peak {:.1} s, betas {:?}",
            t.hrf.time_to_peak(),
            t.beta
                .iter()
                .map(|b| (b * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
    }

    let y: Vec<f64> = data.y.column(0).iter().copied().collect();
    let run0 = &y[..cfg.n_scans];
    let detrended = savgol_detrend(run0, 61, 2)?;
    let spread = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        (s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
    };
    println!(
        "run 0 of voxel 0: sd {:.3} before, {:.3} after detrending",
        spread(run0),
        spread(&detrended)
    );
    Ok(())
}
