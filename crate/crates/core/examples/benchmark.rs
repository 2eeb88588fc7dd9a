//! A reduced leave-one-run-out comparison of all ten methods: encoding
//! scores, image identification and fold-wise significance.
//!
//! cargo run --release --example benchmark

use r1glm::cli::{run_benchmark, BenchmarkConfig, BenchmarkOutcome};
use r1glm::eval::ScoreReport;

fn main() -> r1glm::Result<()> {
    let mut config = BenchmarkConfig {
        n_voxels: 12,
        ..Default::default()
    };
    config.data.n_runs = 4;
    config.data.n_scans = 200;
    config.data.n_conditions = 6;

    let result = match run_benchmark(&config, 0)? {
        BenchmarkOutcome::Complete(r) => r,
        BenchmarkOutcome::Partial { error, .. } => {
            eprintln!("benchmark stopped early: {error}");
            std::process::exit(3);
        }
    };
    print_report(&result.encoding);
    print_report(&result.identification);
    Ok(())
}

fn print_report(report: &ScoreReport) {
    println!("{}", report.metric);
    for m in &report.methods {
        println!("  {:<14} {:.4}", m.method, m.mean);
    }
    for c in &report.comparisons {
        if let Some(p) = c.p_value {
            println!("  {} > {}: p = {p:.4}", c.better, c.worse);
        }
    }
}
