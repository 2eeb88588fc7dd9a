//! Builds designs from an event table: a single run, separate per-condition
//! designs, a drift basis and a two-run stack.
//!
//! cargo run --example design_matrix

use r1glm::design::{
    build_design, build_drift, build_run_designs, build_separate_designs, concat_runs, Event,
    EventTable,
};
use r1glm::hrf_basis::make_3hrf_basis;

fn main() -> r1glm::Result<()> {
    let tr = 2.0;
    let basis = make_3hrf_basis(tr, 32.0)?;

    let events = EventTable::new(
        vec![
            Event {
                onset: 10.0,
                condition: 0,
                run: None,
            },
            Event {
                onset: 40.0,
                condition: 1,
                run: None,
            },
            Event {
                onset: 75.5,
                condition: 0,
                run: None,
            },
            Event {
                onset: 110.0,
                condition: 2,
                run: None,
            },
        ],
        3,
    )?;
    let x = build_design(&events, &basis, tr, 80)?;
    println!(
        "design: {} scans x {} columns ({} conditions x {} basis)",
        x.n_scans(),
        x.matrix.ncols(),
        x.n_conditions,
        x.basis_size
    );

    let s = build_separate_designs(&events, &basis, tr, 80)?;
    let (x0, x1) = &s.pairs[1];
    println!(
        "condition 1: own block {}x{}, rest-of-trial block {}x{}",
        x0.nrows(),
        x0.ncols(),
        x1.nrows(),
        x1.ncols()
    );

    let z = build_drift(80, 3)?;
    let gram = z.matrix.tr_mul(&z.matrix);
    println!(
        "drift: {} columns, |Z'Z - I| = {:.1e}",
        z.matrix.ncols(),
        (gram - nalgebra::DMatrix::identity(z.matrix.ncols(), z.matrix.ncols())).norm()
    );

    // two runs with their own conditions
    let runs = EventTable::new(
        vec![
            Event {
                onset: 12.0,
                condition: 0,
                run: Some(0),
            },
            Event {
                onset: 50.0,
                condition: 1,
                run: Some(0),
            },
            Event {
                onset: 8.0,
                condition: 2,
                run: Some(1),
            },
            Event {
                onset: 60.0,
                condition: 3,
                run: Some(1),
            },
        ],
        4,
    )?;
    let designs = build_run_designs(&runs, &basis, tr, 60, 2)?;
    let drifts = vec![build_drift(60, 2)?, build_drift(60, 2)?];
    let (x, z) = concat_runs(&designs, &drifts)?;
    println!(
        "two runs: X {}x{}, block-diagonal Z {}x{}",
        x.n_scans(),
        x.matrix.ncols(),
        z.matrix.nrows(),
        z.matrix.ncols()
    );
    Ok(())
}
