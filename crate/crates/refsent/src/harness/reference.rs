//! Bundled published reference values and delta arithmetic.
//!
//! These numbers are comparison context, never acceptance targets: live
//! metric values depend on the model weights and on temperature-1.0
//! sampling, so the harness only reports how far a run sits from the
//! published cells and which baseline each delta is taken against.

use serde::{Deserialize, Serialize};

use crate::analysis::GapKind;

const BUNDLED: &str = include_str!("../../data/published_reference.json");

/// Published Macro-F1 / RMSE for one (dataset, model) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub dataset: String,
    pub model: String,
    pub macro_f1: f64,
    pub rmse: f64,
}

/// Published per-bin values for one expectation-gap axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study2Reference {
    pub dataset: String,
    pub axis: GapKind,
    pub mean_gaps: [f64; 5],
    pub micro_f1: [f64; 5],
    pub rmse: [f64; 5],
}

/// Published 5x5 alignment matrix; `None` mirrors the "-" cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study3Reference {
    pub dataset: String,
    pub rows: [[Option<f64>; 5]; 5],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub provenance: String,
    pub study1: Vec<ReferenceEntry>,
    /// Models that count as reference baselines when picking the strongest.
    pub baseline_models: Vec<String>,
    pub study2: Vec<Study2Reference>,
    pub study3: Vec<Study3Reference>,
}

/// Which published number a delta is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaBaseline {
    /// The published value of the same cell.
    SameCell,
    /// The published bare-LLM row ("None").
    VsNone,
    /// The strongest published reference model for this dataset and metric.
    VsBestReference,
}

impl DeltaBaseline {
    pub fn label(&self) -> &'static str {
        match self {
            DeltaBaseline::SameCell => "same-cell",
            DeltaBaseline::VsNone => "vs-none",
            DeltaBaseline::VsBestReference => "vs-best-reference",
        }
    }
}

/// One comparison row: a run value against a named published baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRow {
    pub row_label: String,
    pub metric: String,
    pub value: f64,
    pub baseline_kind: DeltaBaseline,
    pub baseline_name: String,
    pub baseline_value: f64,
    pub abs_delta: f64,
    /// Absent when the baseline is zero.
    pub rel_delta_pct: Option<f64>,
}

/// Relative change in percent: `(value - baseline) / baseline * 100`.
/// `None` for a zero baseline.
pub fn relative_change_pct(value: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        None
    } else {
        Some((value - baseline) / baseline * 100.0)
    }
}

fn delta(
    row_label: &str,
    metric: &str,
    value: f64,
    kind: DeltaBaseline,
    baseline_name: &str,
    baseline_value: f64,
) -> DeltaRow {
    DeltaRow {
        row_label: row_label.to_string(),
        metric: metric.to_string(),
        value,
        baseline_kind: kind,
        baseline_name: baseline_name.to_string(),
        baseline_value,
        abs_delta: value - baseline_value,
        rel_delta_pct: relative_change_pct(value, baseline_value),
    }
}

/// A run's headline numbers for one variant, in reference-table terms.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub model: String,
    pub macro_f1: f64,
    pub rmse: f64,
}

impl ReferenceTable {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled reference table parses")
    }

    pub fn study1_entry(&self, dataset: &str, model: &str) -> Option<&ReferenceEntry> {
        self.study1
            .iter()
            .find(|e| e.dataset.eq_ignore_ascii_case(dataset) && e.model == model)
    }

    pub fn study2_axis(&self, dataset: &str, axis: GapKind) -> Option<&Study2Reference> {
        self.study2
            .iter()
            .find(|e| e.dataset.eq_ignore_ascii_case(dataset) && e.axis == axis)
    }

    pub fn study3_matrix(&self, dataset: &str) -> Option<&Study3Reference> {
        self.study3
            .iter()
            .find(|e| e.dataset.eq_ignore_ascii_case(dataset))
    }

    /// Strongest published reference model for a dataset: highest Macro-F1
    /// or lowest RMSE among the baseline models.
    pub fn best_baseline(&self, dataset: &str, metric: Study1Metric) -> Option<(&str, f64)> {
        self.study1
            .iter()
            .filter(|e| {
                e.dataset.eq_ignore_ascii_case(dataset) && self.baseline_models.contains(&e.model)
            })
            .map(|e| match metric {
                Study1Metric::MacroF1 => (e.model.as_str(), e.macro_f1),
                Study1Metric::Rmse => (e.model.as_str(), e.rmse),
            })
            .reduce(|best, next| {
                let better = match metric {
                    Study1Metric::MacroF1 => next.1 > best.1,
                    Study1Metric::Rmse => next.1 < best.1,
                };
                if better {
                    next
                } else {
                    best
                }
            })
    }

    /// The improvements the publication itself reports: its best variant
    /// (JSON-UBO) against the bare LLM and against the strongest reference
    /// model, both metrics, straight from the bundled numbers.
    pub fn published_improvements(&self, dataset: &str) -> Vec<DeltaRow> {
        let Some(best_variant) = self.study1_entry(dataset, "JSON-UBO") else {
            return Vec::new();
        };
        let mut rows = Vec::new();
        if let Some(none) = self.study1_entry(dataset, "None") {
            rows.push(delta(
                "JSON-UBO",
                "macro_f1",
                best_variant.macro_f1,
                DeltaBaseline::VsNone,
                "None",
                none.macro_f1,
            ));
            rows.push(delta(
                "JSON-UBO",
                "rmse",
                best_variant.rmse,
                DeltaBaseline::VsNone,
                "None",
                none.rmse,
            ));
        }
        if let Some((name, value)) = self.best_baseline(dataset, Study1Metric::MacroF1) {
            rows.push(delta(
                "JSON-UBO",
                "macro_f1",
                best_variant.macro_f1,
                DeltaBaseline::VsBestReference,
                name,
                value,
            ));
        }
        if let Some((name, value)) = self.best_baseline(dataset, Study1Metric::Rmse) {
            rows.push(delta(
                "JSON-UBO",
                "rmse",
                best_variant.rmse,
                DeltaBaseline::VsBestReference,
                name,
                value,
            ));
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study1Metric {
    MacroF1,
    Rmse,
}

/// Deltas for a run's Study-1 rows against the bundled table. Per row and
/// metric this yields: the same published cell, the published bare-LLM row,
/// and the strongest published reference model. Rows without any published
/// counterpart land in the second list instead of failing.
pub fn compare_to_reference(
    dataset: &str,
    rows: &[MetricRow],
    table: &ReferenceTable,
) -> (Vec<DeltaRow>, Vec<String>) {
    let mut deltas = Vec::new();
    let mut unmatched = Vec::new();
    for row in rows {
        let same = table.study1_entry(dataset, &row.model);
        if same.is_none() {
            unmatched.push(row.model.clone());
        }
        for (metric, value) in [
            (Study1Metric::MacroF1, row.macro_f1),
            (Study1Metric::Rmse, row.rmse),
        ] {
            let metric_name = match metric {
                Study1Metric::MacroF1 => "macro_f1",
                Study1Metric::Rmse => "rmse",
            };
            if let Some(entry) = same {
                let published = match metric {
                    Study1Metric::MacroF1 => entry.macro_f1,
                    Study1Metric::Rmse => entry.rmse,
                };
                deltas.push(delta(
                    &row.model,
                    metric_name,
                    value,
                    DeltaBaseline::SameCell,
                    &format!("published {}", row.model),
                    published,
                ));
            }
            if row.model != "None" {
                if let Some(none) = table.study1_entry(dataset, "None") {
                    let published = match metric {
                        Study1Metric::MacroF1 => none.macro_f1,
                        Study1Metric::Rmse => none.rmse,
                    };
                    deltas.push(delta(
                        &row.model,
                        metric_name,
                        value,
                        DeltaBaseline::VsNone,
                        "None",
                        published,
                    ));
                }
            }
            if let Some((name, published)) = table.best_baseline(dataset, metric) {
                deltas.push(delta(
                    &row.model,
                    metric_name,
                    value,
                    DeltaBaseline::VsBestReference,
                    name,
                    published,
                ));
            }
        }
    }
    (deltas, unmatched)
}
