//! Event tables and the design matrices built from them.
//!
//! Column order is condition-major and basis-minor: columns
//! `d*j .. d*j + d` hold the `d` basis regressors of condition `j`, so a
//! rank-1 coefficient vector is exactly `beta ⊗ h`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hrf_basis::BasisSet;

/// Oversampling factor of the convolution grid relative to TR.
pub const OVERSAMPLING: usize = 16;

/// One impulse event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub onset: f64,
    pub condition: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<usize>,
}

/// Events sorted by onset, with condition ids in `0..n_conditions`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    events: Vec<Event>,
    n_conditions: usize,
}

impl EventTable {
    pub fn new(mut events: Vec<Event>, n_conditions: usize) -> Result<Self> {
        if n_conditions == 0 {
            return invalid("an event table needs at least one condition");
        }
        for e in &events {
            if !(e.onset >= 0.0 && e.onset.is_finite()) {
                return invalid(format!("onset {} is not a non-negative time", e.onset));
            }
            if e.condition >= n_conditions {
                return invalid(format!(
                    "condition id {} out of range for {} conditions",
                    e.condition, n_conditions
                ));
            }
        }
        events.sort_by(|a, b| {
            a.run
                .cmp(&b.run)
                .then(a.onset.total_cmp(&b.onset))
                .then(a.condition.cmp(&b.condition))
        });
        Ok(Self {
            events,
            n_conditions,
        })
    }

    /// Infers the condition count from the ids, which must be dense in `0..k`.
    pub fn from_events(events: Vec<Event>) -> Result<Self> {
        let k = events.iter().map(|e| e.condition + 1).max().unwrap_or(0);
        let mut seen = vec![false; k];
        for e in &events {
            seen[e.condition] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return invalid(format!(
                "condition ids are not dense: {missing} never occurs"
            ));
        }
        Self::new(events, k)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn n_conditions(&self) -> usize {
        self.n_conditions
    }

    pub fn onsets_of(&self, condition: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.condition == condition)
            .map(|e| e.onset)
            .collect()
    }

    /// Events belonging to `run`, keeping the condition id space.
    pub fn run(&self, run: usize) -> Self {
        Self {
            events: self
                .events
                .iter()
                .filter(|e| e.run == Some(run))
                .copied()
                .collect(),
            n_conditions: self.n_conditions,
        }
    }

    /// Distinct run ids in ascending order.
    pub fn run_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.events.iter().filter_map(|e| e.run).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Parses `onset,condition[,run]` CSV with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < 2 || names[0] != "onset" || names[1] != "condition" {
            return invalid("events CSV header must start with `onset,condition`");
        }
        let mut events = Vec::new();
        for rec in rdr.deserialize() {
            let e: Event = rec?;
            events.push(e);
        }
        Self::from_events(events)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let with_runs = self.events.iter().any(|e| e.run.is_some());
        let mut w = csv::Writer::from_writer(writer);
        if with_runs {
            w.write_record(["onset", "condition", "run"])?;
        } else {
            w.write_record(["onset", "condition"])?;
        }
        for e in &self.events {
            let onset = format!("{}", e.onset);
            let cond = e.condition.to_string();
            if with_runs {
                let run = e.run.map(|r| r.to_string()).unwrap_or_default();
                w.write_record([onset, cond, run])?;
            } else {
                w.write_record([onset, cond])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `n x (d k)` regressor matrix in condition-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub tr: f64,
    pub n_conditions: usize,
    pub basis_size: usize,
}

impl DesignMatrix {
    pub fn n_scans(&self) -> usize {
        self.matrix.nrows()
    }

    /// Columns of condition `j`.
    pub fn block(&self, j: usize) -> DMatrix<f64> {
        self.matrix
            .columns(j * self.basis_size, self.basis_size)
            .clone_owned()
    }

    /// Keeps only the listed conditions, in the given order.
    pub fn select_conditions(&self, conditions: &[usize]) -> DesignMatrix {
        let d = self.basis_size;
        let mut m = DMatrix::zeros(self.n_scans(), d * conditions.len());
        for (slot, &j) in conditions.iter().enumerate() {
            m.columns_mut(slot * d, d)
                .copy_from(&self.matrix.columns(j * d, d));
        }
        DesignMatrix {
            matrix: m,
            tr: self.tr,
            n_conditions: conditions.len(),
            basis_size: d,
        }
    }
}

/// Per-condition pairs `(X0_i, X1_i)`: the condition's own columns and the
/// sum of every other condition's columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparateDesigns {
    pub pairs: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    pub tr: f64,
}

impl SeparateDesigns {
    pub fn n_conditions(&self) -> usize {
        self.pairs.len()
    }

    pub fn basis_size(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.0.ncols())
    }

    pub fn n_scans(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.0.nrows())
    }

    /// Reassembles the condition-major design from the `X0` blocks.
    pub fn to_design(&self) -> DesignMatrix {
        let (n, d, k) = (self.n_scans(), self.basis_size(), self.n_conditions());
        let mut m = DMatrix::zeros(n, d * k);
        for (j, (x0, _)) in self.pairs.iter().enumerate() {
            m.columns_mut(j * d, d).copy_from(x0);
        }
        DesignMatrix {
            matrix: m,
            tr: self.tr,
            n_conditions: k,
            basis_size: d,
        }
    }
}

/// Orthonormal drift regressors `Z` (possibly with zero columns).
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceMatrix {
    pub matrix: DMatrix<f64>,
}

impl NuisanceMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, 0),
        }
    }

    pub fn n_columns(&self) -> usize {
        self.matrix.ncols()
    }
}

fn check_scan_grid(tr: f64, n: usize) -> Result<()> {
    if !(tr > 0.0 && tr.is_finite()) {
        return invalid(format!("TR must be positive, got {tr}"));
    }
    if n == 0 {
        return invalid("scan count must be positive");
    }
    Ok(())
}

/// Piecewise-linear reading of a sampled waveform at fractional index `pos`,
/// zero before the first sample and ramping to zero one step after the last.
fn interp(samples: &[f64], pos: f64) -> f64 {
    if pos < 0.0 {
        return 0.0;
    }
    let near = pos.round();
    if (pos - near).abs() < 1e-9 {
        return samples.get(near as usize).copied().unwrap_or(0.0);
    }
    let j = pos.floor() as usize;
    let f = pos - j as f64;
    let a = samples.get(j).copied().unwrap_or(0.0);
    let b = samples.get(j + 1).copied().unwrap_or(0.0);
    (1.0 - f) * a + f * b
}

/// Onset snapped to the oversampled grid.
fn snap_onset(onset: f64, tr: f64) -> f64 {
    let step = tr / OVERSAMPLING as f64;
    (onset / step).round() * step
}

/// Convolution of an impulse train at `onsets` with one basis waveform
/// (sampled every `basis_dt` seconds), read at the `n` scan times.
pub fn build_condition_regressor(
    onsets: &[f64],
    basis_column: &[f64],
    basis_dt: f64,
    tr: f64,
    n: usize,
) -> Result<Vec<f64>> {
    check_scan_grid(tr, n)?;
    if !(basis_dt > 0.0) {
        return invalid("basis dt must be positive");
    }
    let acquisition = n as f64 * tr;
    let mut out = vec![0.0; n];
    let support = (basis_column.len() as f64) * basis_dt;
    for &onset in onsets {
        if !(onset >= 0.0 && onset < acquisition) {
            return invalid(format!(
                "onset {onset} s outside the acquisition of {acquisition} s"
            ));
        }
        let t0 = snap_onset(onset, tr);
        let first = (t0 / tr).ceil() as usize;
        for (i, o) in out.iter_mut().enumerate().skip(first) {
            let lag = i as f64 * tr - t0;
            if lag > support {
                break;
            }
            *o += interp(basis_column, lag / basis_dt);
        }
    }
    Ok(out)
}

/// Standard design `X_B` (n x d k).
pub fn build_design(
    events: &EventTable,
    basis: &BasisSet,
    tr: f64,
    n: usize,
) -> Result<DesignMatrix> {
    check_scan_grid(tr, n)?;
    let k = events.n_conditions();
    let d = basis.size();
    let mut m = DMatrix::zeros(n, d * k);
    for j in 0..k {
        let onsets = events.onsets_of(j);
        for b in 0..d {
            let col = basis.column(b);
            let reg = build_condition_regressor(&onsets, &col, basis.dt, tr, n)?;
            m.column_mut(j * d + b).copy_from_slice(&reg);
        }
    }
    Ok(DesignMatrix {
        matrix: m,
        tr,
        n_conditions: k,
        basis_size: d,
    })
}

/// Separate designs derived from the standard design.
pub fn separate_from_design(design: &DesignMatrix) -> SeparateDesigns {
    let k = design.n_conditions;
    let blocks: Vec<DMatrix<f64>> = (0..k).map(|j| design.block(j)).collect();
    let pairs = (0..k)
        .map(|i| {
            let mut rest = DMatrix::zeros(design.n_scans(), design.basis_size);
            for (j, b) in blocks.iter().enumerate() {
                if j != i {
                    rest += b;
                }
            }
            (blocks[i].clone(), rest)
        })
        .collect();
    SeparateDesigns {
        pairs,
        tr: design.tr,
    }
}

pub fn build_separate_designs(
    events: &EventTable,
    basis: &BasisSet,
    tr: f64,
    n: usize,
) -> Result<SeparateDesigns> {
    Ok(separate_from_design(&build_design(events, basis, tr, n)?))
}

/// Orthonormal polynomial drift of degree `order` (`order + 1` columns).
pub fn build_drift(n: usize, order: usize) -> Result<NuisanceMatrix> {
    if n <= order {
        return invalid(format!(
            "drift of order {order} needs more than {order} scans, got {n}"
        ));
    }
    let q = order + 1;
    let mut z = DMatrix::zeros(n, q);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    for i in 0..n {
        let x = 2.0 * i as f64 / denom - 1.0;
        let mut p = 1.0;
        for c in 0..q {
            z[(i, c)] = p;
            p *= x;
        }
    }
    // two passes of modified Gram-Schmidt
    for c in 0..q {
        for _ in 0..2 {
            for prev in 0..c {
                let proj = z.column(prev).dot(&z.column(c));
                let pc = z.column(prev).clone_owned();
                z.column_mut(c).axpy(-proj, &pc, 1.0);
            }
        }
        let norm = z.column(c).norm();
        if norm <= 1e-12 {
            return invalid("drift polynomials are linearly dependent on this grid");
        }
        z.column_mut(c).unscale_mut(norm);
    }
    Ok(NuisanceMatrix { matrix: z })
}

/// One design per run of `scans_per_run` scans; events without a run id
/// belong to run 0. Condition ids are global, so a condition absent from a
/// run has zero columns there.
pub fn build_run_designs(
    events: &EventTable,
    basis: &BasisSet,
    tr: f64,
    scans_per_run: usize,
    n_runs: usize,
) -> Result<Vec<DesignMatrix>> {
    if n_runs == 0 {
        return invalid("at least one run is required");
    }
    if let Some(e) = events
        .events()
        .iter()
        .find(|e| e.run.unwrap_or(0) >= n_runs)
    {
        return invalid(format!(
            "event at {} s names run {:?} of {n_runs}",
            e.onset, e.run
        ));
    }
    (0..n_runs)
        .map(|r| {
            let sub: Vec<Event> = events
                .events()
                .iter()
                .filter(|e| e.run.unwrap_or(0) == r)
                .copied()
                .collect();
            let table = EventTable::new(sub, events.n_conditions())?;
            build_design(&table, basis, tr, scans_per_run)
        })
        .collect()
}

/// Stacks runs: condition columns are shared (vertical stack), drifts are
/// block-diagonal.
pub fn concat_runs(
    designs: &[DesignMatrix],
    drifts: &[NuisanceMatrix],
) -> Result<(DesignMatrix, NuisanceMatrix)> {
    let first = designs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no runs given".into()))?;
    if designs.len() != drifts.len() {
        return invalid("one drift matrix per run is required");
    }
    for (r, (x, z)) in designs.iter().zip(drifts).enumerate() {
        if x.n_conditions != first.n_conditions || x.basis_size != first.basis_size {
            return invalid(format!(
                "run {r} has a different condition count or basis size"
            ));
        }
        if (x.tr - first.tr).abs() > 1e-12 {
            return invalid(format!("run {r} has a different TR"));
        }
        if z.matrix.nrows() != x.n_scans() {
            return invalid(format!("run {r}: drift rows do not match scans"));
        }
    }
    let rows: usize = designs.iter().map(|x| x.n_scans()).sum();
    let q: usize = drifts.iter().map(|z| z.n_columns()).sum();
    let mut x = DMatrix::zeros(rows, first.matrix.ncols());
    let mut z = DMatrix::zeros(rows, q);
    let (mut r0, mut c0) = (0, 0);
    for (xr, zr) in designs.iter().zip(drifts) {
        let nr = xr.n_scans();
        x.rows_mut(r0, nr).copy_from(&xr.matrix);
        z.view_mut((r0, c0), (nr, zr.n_columns()))
            .copy_from(&zr.matrix);
        r0 += nr;
        c0 += zr.n_columns();
    }
    Ok((
        DesignMatrix {
            matrix: x,
            tr: first.tr,
            n_conditions: first.n_conditions,
            basis_size: first.basis_size,
        },
        NuisanceMatrix { matrix: z },
    ))
}
