//! Scores and statistical tests for comparing estimators.

mod encoding;
mod identify;
mod report;
mod ridge;
mod stats;

pub use encoding::{encoding_score, EncodingProblem, EncodingScores, SCORE_THRESHOLD};
pub use identify::{identify_images, Identification};
pub use report::{Comparison, MethodScores, ScoreReport};
pub use ridge::{
    default_lambda_grid, ridge_gcv, ridge_gcv_centered, ridge_gcv_multi, CenteredRidge, RidgeFit,
    RidgeSpectrum,
};
pub use stats::{
    binomial_proportion_test, kendall_tau, pearson_r, wilcoxon_null_pmf, wilcoxon_signed_rank,
    Sides, WilcoxonResult, WILCOXON_EXACT_MAX,
};
