//! Orthogonal reduction of an `n`-row least-squares system to its column space.

use nalgebra::{DMatrix, DVector};

use crate::design::{DesignMatrix, NuisanceMatrix};
use crate::linalg::{hstack, thin_q};

/// Thin QR factor of `[X Z]` plus the rotated design, reusable across voxels
/// that share the design.
#[derive(Debug, Clone)]
pub struct QrReducer {
    q: DMatrix<f64>,
    pub x: DesignMatrix,
    pub z: NuisanceMatrix,
}

/// A reduced system: objectives on it plus `offset` equal objectives on the
/// original one.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub x: DesignMatrix,
    pub z: NuisanceMatrix,
    pub y: DVector<f64>,
    pub offset: f64,
}

impl QrReducer {
    /// Returns `None` (after logging) when `[X Z]` is rank deficient or not tall.
    pub fn new(x: &DesignMatrix, z: &NuisanceMatrix) -> Option<Self> {
        let stacked = hstack(&x.matrix, &z.matrix);
        let Some(q) = thin_q(&stacked) else {
            log::warn!("[X Z] is rank deficient or not tall; skipping QR reduction");
            return None;
        };
        let qt = q.transpose();
        let xr = DesignMatrix {
            matrix: &qt * &x.matrix,
            ..x.clone()
        };
        let zr = NuisanceMatrix {
            matrix: &qt * &z.matrix,
        };
        Some(Self { q, x: xr, z: zr })
    }

    pub fn rows(&self) -> usize {
        self.q.ncols()
    }

    /// `(Q^T y, 1/2 |y - Q Q^T y|^2)`.
    pub fn reduce(&self, y: &DVector<f64>) -> (DVector<f64>, f64) {
        let yr = self.q.tr_mul(y);
        let resid = y - &self.q * &yr;
        (yr, 0.5 * resid.norm_squared())
    }

    pub fn reduce_system(&self, y: &DVector<f64>) -> ReducedSystem {
        let (yr, offset) = self.reduce(y);
        ReducedSystem {
            x: self.x.clone(),
            z: self.z.clone(),
            y: yr,
            offset,
        }
    }
}

/// Reduces `(X, Z, y)` through the thin QR of `[X Z]`; `None` when the
/// concatenation is rank deficient and the fit should run unreduced.
pub fn qr_reduce(x: &DesignMatrix, z: &NuisanceMatrix, y: &DVector<f64>) -> Option<ReducedSystem> {
    QrReducer::new(x, z).map(|r| r.reduce_system(y))
}
