//! Per-method, per-fold score tables with rank-adjacent comparisons.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::stats::{wilcoxon_signed_rank, Sides};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: String,
    pub folds: Vec<f64>,
    pub mean: f64,
}

/// One-sided Wilcoxon test that `better` outscores `worse` across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub better: String,
    pub worse: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: String,
    /// Ordered by decreasing mean score.
    pub methods: Vec<MethodScores>,
    pub comparisons: Vec<Comparison>,
}

impl ScoreReport {
    /// Ranks methods by mean score (ties keep input order) and tests each
    /// against the next one down.
    pub fn new(metric: &str, scores: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let folds = scores
            .first()
            .map(|(_, f)| f.len())
            .ok_or_else(|| Error::InvalidArgument("a report needs at least one method".into()))?;
        if folds == 0 {
            return invalid("a report needs at least one fold");
        }
        if let Some((name, f)) = scores.iter().find(|(_, f)| f.len() != folds) {
            return Err(Error::DimensionMismatch(format!(
                "{name} has {} folds, expected {folds}",
                f.len()
            )));
        }
        let mut methods: Vec<MethodScores> = scores
            .into_iter()
            .map(|(method, folds)| {
                let mean = folds.iter().sum::<f64>() / folds.len() as f64;
                MethodScores {
                    method,
                    folds,
                    mean,
                }
            })
            .collect();
        methods.sort_by(|a, b| b.mean.total_cmp(&a.mean));
        let comparisons = methods
            .windows(2)
            .map(|w| {
                let test = wilcoxon_signed_rank(&w[0].folds, &w[1].folds, Sides::Greater).ok();
                Comparison {
                    better: w[0].method.clone(),
                    worse: w[1].method.clone(),
                    statistic: test.map(|t| t.statistic),
                    p_value: test.map(|t| t.p),
                }
            })
            .collect();
        Ok(Self {
            metric: metric.to_string(),
            methods,
            comparisons,
        })
    }

    pub fn get(&self, method: &str) -> Option<&MethodScores> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat `method,fold,score` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "fold", "score"])?;
        for m in &self.methods {
            for (i, s) in m.folds.iter().enumerate() {
                w.write_record([m.method.clone(), i.to_string(), s.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> ScoreReport {
        ScoreReport::new(
            "encoding",
            vec![
                ("a".into(), vec![0.1, 0.2, 0.3, 0.2, 0.1]),
                ("b".into(), vec![0.3, 0.4, 0.5, 0.4, 0.3]),
                ("c".into(), vec![0.1, 0.2, 0.3, 0.2, 0.1]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn ranks_and_compares_neighbours() {
        let r = report();
        let order: Vec<&str> = r.methods.iter().map(|m| m.method.as_str()).collect();
        assert_eq!(order, ["b", "a", "c"]);
        assert_eq!(r.comparisons.len(), 2);
        assert!((r.comparisons[0].p_value.unwrap() - 1.0 / 32.0).abs() < 1e-15);
        // identical folds: the test is degenerate and reported without a p-value
        assert_eq!(r.comparisons[1].p_value, None);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let r = report();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,fold,score\nb,0,0.3\n"));
        assert_eq!(text.lines().count(), 16);
        let back: ScoreReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn unequal_folds_are_rejected() {
        let bad = ScoreReport::new(
            "x",
            vec![("a".into(), vec![1.0]), ("b".into(), vec![1.0, 2.0])],
        );
        assert!(bad.is_err());
        assert!(ScoreReport::new("x", vec![]).is_err());
    }
}
