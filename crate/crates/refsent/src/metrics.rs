//! Classification and regression metrics on the 1-5 star scale, plus the
//! paired McNemar significance test used when comparing prompt variants.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

/// Smallest/largest valid star rating.
pub const MIN_STAR: u8 = 1;
pub const MAX_STAR: u8 = 5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric requires at least one labeled prediction")]
    EmptyInput,
    #[error("prediction lists have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("prediction lists are not aligned: position {index} pairs review '{left}' with review '{right}'")]
    Misaligned {
        index: usize,
        left: String,
        right: String,
    },
    #[error("rating {0} is outside the 1-5 star scale")]
    RatingOutOfRange(u8),
}

/// A prediction joined with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub review_id: String,
    pub predicted: u8,
    pub actual: u8,
    /// True when the predicted rating was imputed after a parse failure.
    pub imputed: bool,
}

impl LabeledPrediction {
    pub fn new(review_id: impl Into<String>, predicted: u8, actual: u8) -> Self {
        Self {
            review_id: review_id.into(),
            predicted,
            actual,
            imputed: false,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.actual
    }
}

fn validate(pairs: &[LabeledPrediction]) -> Result<(), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for p in pairs {
        for r in [p.predicted, p.actual] {
            if !(MIN_STAR..=MAX_STAR).contains(&r) {
                return Err(MetricsError::RatingOutOfRange(r));
            }
        }
    }
    Ok(())
}

/// Macro-F1 over the star classes.
///
/// The mean is taken over the classes present in either the truth or the
/// predictions; classes absent from both are excluded. A present class with
/// no true positives contributes an F1 of 0.
pub fn macro_f1(pairs: &[LabeledPrediction]) -> Result<f64, MetricsError> {
    validate(pairs)?;
    let mut f1_sum = 0.0;
    let mut classes = 0usize;
    for class in MIN_STAR..=MAX_STAR {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for p in pairs {
            match (p.predicted == class, p.actual == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        if tp + fp + fn_ == 0 {
            continue;
        }
        classes += 1;
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(f1_sum / classes as f64)
}

/// Micro-F1 for single-label multiclass classification.
///
/// With one label per instance, micro-averaged precision, recall, and F1 all
/// collapse to plain accuracy, and that is how this is computed.
pub fn micro_f1(pairs: &[LabeledPrediction]) -> Result<f64, MetricsError> {
    validate(pairs)?;
    let correct = pairs.iter().filter(|p| p.is_correct()).count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Root mean square error on the star scale.
pub fn rmse(pairs: &[LabeledPrediction]) -> Result<f64, MetricsError> {
    validate(pairs)?;
    let sq_sum: f64 = pairs
        .iter()
        .map(|p| {
            let d = p.predicted as f64 - p.actual as f64;
            d * d
        })
        .sum();
    Ok((sq_sum / pairs.len() as f64).sqrt())
}

/// Which approximation produced a McNemar p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    /// Exact two-sided binomial test, used for small discordant counts.
    Exact,
    /// Chi-square with continuity correction.
    ChiSquareCc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Count of pairs where A is correct and B is wrong.
    pub b: usize,
    /// Count of pairs where A is wrong and B is correct.
    pub c: usize,
    pub method: McNemarMethod,
    /// Test statistic; absent for the exact branch.
    pub statistic: Option<f64>,
    pub p_value: f64,
}

/// Discordant-count threshold below which the exact binomial test is used.
pub const MCNEMAR_EXACT_LIMIT: usize = 25;

/// Two-sided McNemar test between two aligned prediction lists.
///
/// Each slice carries its own labels; the slices must pair up the same
/// reviews in the same order with identical ground truth.
pub fn mcnemar(
    preds_a: &[LabeledPrediction],
    preds_b: &[LabeledPrediction],
) -> Result<McNemarResult, MetricsError> {
    if preds_a.len() != preds_b.len() {
        return Err(MetricsError::LengthMismatch {
            left: preds_a.len(),
            right: preds_b.len(),
        });
    }
    validate(preds_a)?;
    validate(preds_b)?;
    let mut b = 0usize;
    let mut c = 0usize;
    for (index, (a, bp)) in preds_a.iter().zip(preds_b).enumerate() {
        if a.review_id != bp.review_id || a.actual != bp.actual {
            return Err(MetricsError::Misaligned {
                index,
                left: a.review_id.clone(),
                right: bp.review_id.clone(),
            });
        }
        match (a.is_correct(), bp.is_correct()) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

/// McNemar test directly from discordant counts.
pub fn mcnemar_from_counts(b: usize, c: usize) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult {
            b,
            c,
            method: McNemarMethod::Exact,
            statistic: None,
            p_value: 1.0,
        };
    }
    if n <= MCNEMAR_EXACT_LIMIT {
        let k = b.min(c);
        let p = (2.0 * binomial_cdf_half(n, k)).min(1.0);
        McNemarResult {
            b,
            c,
            method: McNemarMethod::Exact,
            statistic: None,
            p_value: p,
        }
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let statistic = diff * diff / n as f64;
        let chi = ChiSquared::new(1.0).expect("df = 1 is valid");
        let p = 1.0 - chi.cdf(statistic);
        McNemarResult {
            b,
            c,
            method: McNemarMethod::ChiSquareCc,
            statistic: Some(statistic),
            p_value: p.clamp(0.0, 1.0),
        }
    }
}

/// P(X <= k) for X ~ Binomial(n, 1/2), computed with a running binomial
/// coefficient. Exact in f64 for the small n used by the exact branch.
fn binomial_cdf_half(n: usize, k: usize) -> f64 {
    let mut coeff = 1.0f64;
    let mut sum = 1.0f64;
    for i in 1..=k {
        coeff *= (n - i + 1) as f64 / i as f64;
        sum += coeff;
    }
    sum / 2f64.powi(n as i32)
}

/// Drops imputed rows, for reporting metrics with and without imputations.
pub fn excluding_imputed(pairs: &[LabeledPrediction]) -> Vec<LabeledPrediction> {
    pairs.iter().filter(|p| !p.imputed).cloned().collect()
}
