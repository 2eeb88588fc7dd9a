//! Image identification from predicted activation patterns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::stats::pearson_r;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub accuracy: f64,
    /// Chosen candidate per measured row; `None` for excluded rows.
    pub choices: Vec<Option<usize>>,
    /// Rows whose best correlation was shared by several candidates.
    pub ties: usize,
    /// Zero-variance measured rows, counted as misses.
    pub excluded: usize,
}

/// For each measured pattern (row), picks the predicted row with the highest
/// correlation; ties go to the lowest index.
pub fn identify_images(
    predicted: &DMatrix<f64>,
    measured: &DMatrix<f64>,
) -> Result<Identification> {
    if predicted.shape() != measured.shape() {
        return Err(Error::DimensionMismatch(format!(
            "predicted {:?} vs measured {:?}",
            predicted.shape(),
            measured.shape()
        )));
    }
    let m = measured.nrows();
    if m < 2 {
        return invalid("at least two candidate images are required");
    }
    let rows = |x: &DMatrix<f64>| -> Vec<Vec<f64>> {
        x.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    let (pred, meas) = (rows(predicted), rows(measured));
    let (mut correct, mut ties, mut excluded) = (0usize, 0usize, 0usize);
    let mut choices = Vec::with_capacity(m);
    for (i, row) in meas.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        let mut tied = false;
        for (j, cand) in pred.iter().enumerate() {
            let r = match pearson_r(row, cand) {
                Ok(r) => r,
                Err(Error::UndefinedScore(_)) => continue,
                Err(e) => return Err(e),
            };
            match best {
                Some((_, b)) if r == b => tied = true,
                Some((_, b)) if r < b => {}
                _ => {
                    best = Some((j, r));
                    tied = false;
                }
            }
        }
        let var_zero = row.iter().all(|v| *v == row[0]);
        if var_zero {
            excluded += 1;
            choices.push(None);
            continue;
        }
        ties += tied as usize;
        if best.map(|(j, _)| j) == Some(i) {
            correct += 1;
        }
        choices.push(best.map(|(j, _)| j));
    }
    Ok(Identification {
        accuracy: correct as f64 / m as f64,
        choices,
        ties,
        excluded,
    })
}
