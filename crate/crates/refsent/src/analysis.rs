//! Expectation-gap computation and quintile binning, the reference-alignment
//! error matrix, and the alignment routing policy.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReviewSample;
use crate::metrics::{self, LabeledPrediction, MetricsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("quintile binning requires at least 5 records, got {0}")]
    TooFewRecords(usize),
    #[error("no prediction found for review '{0}'")]
    MissingPrediction(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Round-half-up to the nearest star, clamped to 1-5. Used both for the
/// error-matrix axes and for the rounding mock backend.
pub fn round_star(value: f64) -> u8 {
    ((value + 0.5).floor() as i64).clamp(1, 5) as u8
}

/// Expectation-evaluation gaps for one review: the rating minus the user's
/// average, and the rating minus the business's average.
pub fn compute_gaps(sample: &ReviewSample) -> (f64, f64) {
    let stars = sample.stars as f64;
    (stars - sample.user_average, stars - sample.business_average)
}

/// Which reference point a gap or bin refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    User,
    Business,
}

impl GapKind {
    pub fn label(&self) -> &'static str {
        match self {
            GapKind::User => "User Average",
            GapKind::Business => "Business Average",
        }
    }
}

/// Per-review gaps with assigned quintile bins (0 = far below expectations).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRecord {
    pub review_id: String,
    pub gap_user: f64,
    pub gap_business: f64,
    pub bin_user: u8,
    pub bin_business: u8,
}

impl GapRecord {
    pub fn gap(&self, kind: GapKind) -> f64 {
        match kind {
            GapKind::User => self.gap_user,
            GapKind::Business => self.gap_business,
        }
    }
}

/// Gap records for a sample set, bins not yet assigned.
pub fn compute_gap_records(samples: &[ReviewSample]) -> Vec<GapRecord> {
    samples
        .iter()
        .map(|s| {
            let (gap_user, gap_business) = compute_gaps(s);
            GapRecord {
                review_id: s.review_id.clone(),
                gap_user,
                gap_business,
                bin_user: 0,
                bin_business: 0,
            }
        })
        .collect()
}

/// One equal-frequency bin over a gap axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuintileBin {
    pub index: u8,
    pub review_ids: Vec<String>,
    pub mean_gap: f64,
    pub n: usize,
}

/// Sorts records by the chosen gap (ties broken by review_id) and splits
/// them into 5 equal-frequency bins; with remainder r, the first r bins get
/// one extra record. Assigns the bin index back onto each record.
pub fn bin_quintiles(
    records: &mut [GapRecord],
    which: GapKind,
) -> Result<Vec<QuintileBin>, AnalysisError> {
    let n = records.len();
    if n < 5 {
        return Err(AnalysisError::TooFewRecords(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .gap(which)
            .partial_cmp(&records[b].gap(which))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| records[a].review_id.cmp(&records[b].review_id))
    });

    let base = n / 5;
    let remainder = n % 5;
    let mut bins = Vec::with_capacity(5);
    let mut cursor = 0usize;
    for index in 0..5u8 {
        let size = base + usize::from((index as usize) < remainder);
        let members = &order[cursor..cursor + size];
        cursor += size;
        let mut review_ids = Vec::with_capacity(size);
        let mut gap_sum = 0.0;
        for &i in members {
            match which {
                GapKind::User => records[i].bin_user = index,
                GapKind::Business => records[i].bin_business = index,
            }
            gap_sum += records[i].gap(which);
            review_ids.push(records[i].review_id.clone());
        }
        bins.push(QuintileBin {
            index,
            review_ids,
            mean_gap: gap_sum / size as f64,
            n: size,
        });
    }
    Ok(bins)
}

/// Per-bin prediction quality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: u8,
    pub mean_gap: f64,
    pub n: usize,
    pub micro_f1: f64,
    pub rmse: f64,
}

/// Micro-F1 and RMSE per bin, computed over exactly the bin's members.
pub fn bin_metrics(
    bins: &[QuintileBin],
    predictions: &HashMap<String, LabeledPrediction>,
) -> Result<Vec<BinSummary>, AnalysisError> {
    bins.iter()
        .map(|bin| {
            let members: Vec<LabeledPrediction> = bin
                .review_ids
                .iter()
                .map(|id| {
                    predictions
                        .get(id)
                        .cloned()
                        .ok_or_else(|| AnalysisError::MissingPrediction(id.clone()))
                })
                .collect::<Result<_, _>>()?;
            Ok(BinSummary {
                bin: bin.index,
                mean_gap: bin.mean_gap,
                n: bin.n,
                micro_f1: metrics::micro_f1(&members)?,
                rmse: metrics::rmse(&members)?,
            })
        })
        .collect()
}

/// One populated cell of the reference-alignment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub micro_f1: f64,
    pub n: usize,
}

/// 5x5 grid indexed by rounded user average (rows) and rounded business
/// average (columns); empty cells stay `None` and render as "-".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorMatrix {
    pub cells: [[Option<MatrixCell>; 5]; 5],
}

impl ErrorMatrix {
    /// Cell for 1-based (user average, business average) star indices.
    pub fn cell(&self, ua: u8, ba: u8) -> Option<&MatrixCell> {
        self.cells[ua as usize - 1][ba as usize - 1].as_ref()
    }
}

/// Buckets samples by rounded (UA, BA) and computes per-cell Micro-F1.
pub fn build_error_matrix(
    samples: &[ReviewSample],
    predictions: &HashMap<String, LabeledPrediction>,
) -> Result<ErrorMatrix, AnalysisError> {
    let mut buckets: [[Vec<LabeledPrediction>; 5]; 5] = Default::default();
    for sample in samples {
        let ua = round_star(sample.user_average) as usize - 1;
        let ba = round_star(sample.business_average) as usize - 1;
        let pred = predictions
            .get(&sample.review_id)
            .cloned()
            .ok_or_else(|| AnalysisError::MissingPrediction(sample.review_id.clone()))?;
        buckets[ua][ba].push(pred);
    }
    let mut cells: [[Option<MatrixCell>; 5]; 5] = Default::default();
    for (ua, row) in buckets.iter().enumerate() {
        for (ba, members) in row.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            cells[ua][ba] = Some(MatrixCell {
                micro_f1: metrics::micro_f1(members)?,
                n: members.len(),
            });
        }
    }
    Ok(ErrorMatrix { cells })
}

/// Where a review should be processed given its reference alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteTarget {
    /// Aligned reference points: small on-device model suffices.
    Local,
    /// Conflicting reference points: hand off to a larger model.
    Escalate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub review_id: String,
    pub alignment: f64,
    pub decision: RouteTarget,
    pub threshold: f64,
}

/// Routes on the raw (unrounded) averages: local iff
/// |user_average - business_average| <= threshold.
pub fn route(sample: &ReviewSample, threshold: f64) -> RoutingDecision {
    let alignment = (sample.user_average - sample.business_average).abs();
    let decision = if alignment <= threshold {
        RouteTarget::Local
    } else {
        RouteTarget::Escalate
    };
    RoutingDecision {
        review_id: sample.review_id.clone(),
        alignment,
        decision,
        threshold,
    }
}
