//! Correlations and the paired tests used to compare methods.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};

/// Exact null enumeration is used up to this many nonzero differences.
pub const WILCOXON_EXACT_MAX: usize = 20;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return invalid("at least two observations are required");
    }
    Ok(())
}

/// Centered (Pearson) correlation.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedScore("zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Kendall's tau-b over all pairs.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let (mut concordant, mut discordant, mut tied_a, mut tied_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).partial_cmp(&0.0);
            let db = (b[i] - b[j]).partial_cmp(&0.0);
            let (sa, sb) = match (da, db) {
                (Some(x), Some(y)) => (x as i8, y as i8),
                _ => return invalid("NaN in input"),
            };
            if sa == 0 {
                tied_a += 1;
            }
            if sb == 0 {
                tied_b += 1;
            }
            if sa != 0 && sb != 0 {
                if sa == sb {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    if tied_a == pairs || tied_b == pairs {
        return Err(Error::UndefinedScore("all values tied".into()));
    }
    let denom = (((pairs - tied_a) * (pairs - tied_b)) as f64).sqrt();
    Ok((concordant - discordant) as f64 / denom)
}

/// Alternative hypothesis of a paired test, stated for `a - b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sides {
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences.
    pub statistic: f64,
    pub p: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Average ranks (1-based) of `v`, with tie groups sizes.
fn average_ranks(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut groups = Vec::new();
    let mut s = 0;
    while s < idx.len() {
        let mut e = s + 1;
        while e < idx.len() && v[idx[e]] == v[idx[s]] {
            e += 1;
        }
        let r = (s + 1 + e) as f64 / 2.0;
        for &i in &idx[s..e] {
            ranks[i] = r;
        }
        groups.push(e - s);
        s = e;
    }
    (ranks, groups)
}

/// Exact null distribution of the positive-rank sum for the given ranks:
/// entry `w` is the probability that the doubled statistic equals `w`.
pub fn wilcoxon_null_pmf(ranks: &[f64]) -> Vec<f64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0_f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for w in (r..=total).rev() {
            counts[w] += counts[w - r];
        }
    }
    let norm = 2f64.powi(ranks.len() as i32);
    counts.iter().map(|c| c / norm).collect()
}

/// Wilcoxon signed-rank test on the paired differences `a - b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], sides: Sides) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    if d.iter().any(|v| v.is_nan()) {
        return invalid("NaN in input");
    }
    if d.is_empty() {
        return Err(Error::DegenerateTest("all differences are zero".into()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, groups) = average_ranks(&abs);
    let w: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, _)| r)
        .sum();

    if n <= WILCOXON_EXACT_MAX {
        let pmf = wilcoxon_null_pmf(&ranks);
        let w2 = (2.0 * w).round() as usize;
        let upper: f64 = pmf[w2..].iter().sum();
        let lower: f64 = pmf[..=w2].iter().sum();
        let p = match sides {
            Sides::Greater => upper,
            Sides::Less => lower,
            Sides::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        };
        return Ok(WilcoxonResult {
            statistic: w,
            p: p.min(1.0),
            n,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = groups.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return Err(Error::DegenerateTest("zero variance under the null".into()));
    }
    let z = (w - mean) / var.sqrt();
    let normal = Normal::standard();
    let p = match sides {
        Sides::Greater => normal.sf(z),
        Sides::Less => normal.cdf(z),
        Sides::TwoSided => (2.0 * normal.sf(z.abs())).min(1.0),
    };
    Ok(WilcoxonResult {
        statistic: w,
        p,
        n,
        exact: false,
    })
}

/// One-tailed score test that proportion `p_a` exceeds `p_b`, both measured
/// on `n` trials. Returns `(T, p)`.
pub fn binomial_proportion_test(p_a: f64, p_b: f64, n: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p_a) || !(0.0..=1.0).contains(&p_b) {
        return invalid("proportions must lie in [0, 1]");
    }
    if n == 0 {
        return invalid("at least one trial is required");
    }
    let p = (p_a + p_b) / 2.0;
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::DegenerateTest(format!(
            "pooled proportion {p} leaves no variance"
        )));
    }
    let t = (p_a - p_b) / (p * (1.0 - p) * 2.0 / n as f64).sqrt();
    Ok((t, Normal::standard().sf(t)))
}
