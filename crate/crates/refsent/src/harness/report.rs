//! Study report structures and deterministic markdown/CSV emission.
//!
//! Emission is a pure function of the report: the same report always
//! yields the same bytes. Metric cells are rendered with three decimals,
//! p-values with four; absent cells render as "-".

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{ErrorMatrix, GapKind, RoutingDecision};
use crate::inference::DecodingParams;
use crate::metrics::{McNemarMethod, McNemarResult};
use crate::promptgen::PromptVariant;

use super::reference::DeltaRow;

/// Conventions baked into every emitted report.
pub const CAVEATS: [&str; 5] = [
    "Quintile bins are equal-frequency splits over the gap values; ties break by review id.",
    "Matrix axes round averages half-up to the nearest star, clamped to 1-5.",
    "Macro-F1 averages over the classes present in truth or predictions; classes absent from both are excluded.",
    "Unparseable generations are imputed as 3 stars and flagged; metrics are reported both including and excluding imputed rows.",
    "Published reference values depend on specific model weights and sampling; deltas are context, not targets.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

/// Header shared by every study report; cites exactly one run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset: String,
    pub n: usize,
    pub backend_id: String,
    pub template_version: String,
    pub manifest_hash: String,
    pub decoding: DecodingParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: PromptVariant,
    pub n: usize,
    pub imputed: usize,
    pub macro_f1: f64,
    pub rmse: f64,
    /// Metrics over non-imputed rows only; absent when every row was imputed.
    pub macro_f1_excl: Option<f64>,
    pub rmse_excl: Option<f64>,
    /// Two-sided McNemar against the None variant; absent for the None row
    /// itself or when None was not run.
    pub mcnemar_vs_none: Option<McNemarResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study1Report {
    pub meta: ReportMeta,
    pub rows: Vec<VariantRow>,
    /// Variants that failed outright (backend-level), listed but not tabled.
    pub incomplete: Vec<String>,
    pub deltas: Vec<DeltaRow>,
    pub unmatched: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinRow {
    pub bin: u8,
    pub mean_gap: f64,
    pub n: usize,
    pub micro_f1: f64,
    pub rmse: f64,
    /// Computed alongside so either metric reading of the per-bin tables
    /// can be reproduced.
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisTable {
    pub axis: GapKind,
    pub bins: Vec<BinRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study2Report {
    pub meta: ReportMeta,
    pub variant: PromptVariant,
    pub axes: Vec<AxisTable>,
    pub deltas: Vec<DeltaRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingSummary {
    pub threshold: f64,
    pub n: usize,
    pub local: usize,
    pub escalate: usize,
    pub local_share: f64,
    pub decisions: Vec<RoutingDecision>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study3Report {
    pub meta: ReportMeta,
    pub variant: PromptVariant,
    pub matrix: ErrorMatrix,
    pub routing: RoutingSummary,
    pub deltas: Vec<DeltaRow>,
}

fn f3(value: f64) -> String {
    format!("{value:.3}")
}

fn opt_f3(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), f3)
}

fn mcnemar_cell(result: &Option<McNemarResult>) -> String {
    match result {
        None => "-".to_string(),
        Some(r) => {
            let method = match r.method {
                McNemarMethod::Exact => "exact",
                McNemarMethod::ChiSquareCc => "chi-square-cc",
            };
            format!("p={:.4} ({method}, b={}, c={})", r.p_value, r.b, r.c)
        }
    }
}

fn meta_block(meta: &ReportMeta) -> String {
    let seed = meta
        .decoding
        .seed
        .map_or_else(|| "none".to_string(), |s| s.to_string());
    format!(
        "- Dataset: {} (n={})\n- Backend: {}\n- Templates: {}\n- Manifest: {}\n- Decoding: temperature={}, max_tokens={}, seed={}\n",
        meta.dataset,
        meta.n,
        meta.backend_id,
        meta.template_version,
        meta.manifest_hash,
        meta.decoding.temperature,
        meta.decoding.max_tokens,
        seed,
    )
}

fn caveats_block() -> String {
    let mut out = String::from("### Caveats\n\n");
    for caveat in CAVEATS {
        let _ = writeln!(out, "- {caveat}");
    }
    out
}

fn deltas_block(deltas: &[DeltaRow], unmatched: &[String]) -> String {
    let mut out = String::new();
    if deltas.is_empty() && unmatched.is_empty() {
        return out;
    }
    out.push_str("### Reference deltas\n\n");
    if deltas.is_empty() {
        out.push_str("No published reference cells match this dataset.\n\n");
    } else {
        out.push_str("| Row | Metric | This run | Baseline | Published | Abs. delta | Rel. delta |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for d in deltas {
            let rel = d
                .rel_delta_pct
                .map_or_else(|| "-".to_string(), |r| format!("{r:+.2}%"));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} ({}) | {} | {:+.3} | {rel} |",
                d.row_label,
                d.metric,
                f3(d.value),
                d.baseline_name,
                d.baseline_kind.label(),
                f3(d.baseline_value),
                d.abs_delta,
            );
        }
        out.push('\n');
    }
    if !unmatched.is_empty() {
        let _ = writeln!(
            out,
            "Rows without a published counterpart: {}.\n",
            unmatched.join(", ")
        );
    }
    out
}

fn study1_body(report: &Study1Report) -> String {
    let mut out = String::new();
    out.push_str(
        "| Variant | n | Imputed | Macro-F1 | RMSE | Macro-F1 (excl. imputed) | RMSE (excl. imputed) | McNemar vs None |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            row.variant,
            row.n,
            row.imputed,
            f3(row.macro_f1),
            f3(row.rmse),
            opt_f3(row.macro_f1_excl),
            opt_f3(row.rmse_excl),
            mcnemar_cell(&row.mcnemar_vs_none),
        );
    }
    out.push('\n');
    if !report.incomplete.is_empty() {
        let _ = writeln!(
            out,
            "Incomplete variants (backend failure): {}.\n",
            report.incomplete.join(", ")
        );
    }
    out.push_str(&deltas_block(&report.deltas, &report.unmatched));
    out
}

pub fn study1_markdown(report: &Study1Report) -> String {
    format!(
        "# Study 1: prompt variant comparison\n\n{}\n{}\n{}",
        meta_block(&report.meta),
        study1_body(report),
        caveats_block(),
    )
}

pub fn study1_csv(report: &Study1Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant",
        "n",
        "imputed",
        "macro_f1",
        "rmse",
        "macro_f1_excl_imputed",
        "rmse_excl_imputed",
        "mcnemar_b",
        "mcnemar_c",
        "mcnemar_method",
        "mcnemar_p",
    ])
    .expect("csv header");
    for row in &report.rows {
        let (b, c, method, p) = match &row.mcnemar_vs_none {
            None => (String::new(), String::new(), String::new(), String::new()),
            Some(r) => (
                r.b.to_string(),
                r.c.to_string(),
                match r.method {
                    McNemarMethod::Exact => "exact".to_string(),
                    McNemarMethod::ChiSquareCc => "chi_square_cc".to_string(),
                },
                format!("{:.4}", r.p_value),
            ),
        };
        w.write_record([
            row.variant.to_string(),
            row.n.to_string(),
            row.imputed.to_string(),
            f3(row.macro_f1),
            f3(row.rmse),
            row.macro_f1_excl.map(f3).unwrap_or_default(),
            row.rmse_excl.map(f3).unwrap_or_default(),
            b,
            c,
            method,
            p,
        ])
        .expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

fn study2_body(report: &Study2Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Variant under analysis: {}\n", report.variant);
    for axis in &report.axes {
        let _ = writeln!(out, "### {}\n", axis.axis.label());
        out.push_str("| | Bin 0 (far below) | Bin 1 | Bin 2 | Bin 3 | Bin 4 (far above) |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        let row = |label: &str, values: Vec<String>| {
            format!("| {label} | {} |\n", values.join(" | "))
        };
        out.push_str(&row(
            "Mean gap",
            axis.bins.iter().map(|b| f3(b.mean_gap)).collect(),
        ));
        out.push_str(&row(
            "n",
            axis.bins.iter().map(|b| b.n.to_string()).collect(),
        ));
        out.push_str(&row(
            "Micro-F1",
            axis.bins.iter().map(|b| f3(b.micro_f1)).collect(),
        ));
        out.push_str(&row(
            "RMSE",
            axis.bins.iter().map(|b| f3(b.rmse)).collect(),
        ));
        out.push_str(&row(
            "Macro-F1",
            axis.bins.iter().map(|b| f3(b.macro_f1)).collect(),
        ));
        out.push('\n');
    }
    out.push_str(&deltas_block(&report.deltas, &[]));
    out
}

pub fn study2_markdown(report: &Study2Report) -> String {
    format!(
        "# Study 2: expectation-gap analysis\n\n{}\n{}\n{}",
        meta_block(&report.meta),
        study2_body(report),
        caveats_block(),
    )
}

pub fn study2_csv(report: &Study2Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "bin", "mean_gap", "n", "micro_f1", "rmse", "macro_f1"])
        .expect("csv header");
    for axis in &report.axes {
        for b in &axis.bins {
            w.write_record([
                axis.axis.label().to_string(),
                b.bin.to_string(),
                f3(b.mean_gap),
                b.n.to_string(),
                f3(b.micro_f1),
                f3(b.rmse),
                f3(b.macro_f1),
            ])
            .expect("csv row");
        }
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

fn study3_body(report: &Study3Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Variant under analysis: {}\n", report.variant);
    out.push_str("### Micro-F1 by rounded user average (UA) x business average (BA)\n\n");
    out.push_str("| UA \\ BA | 1 | 2 | 3 | 4 | 5 |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for ua in 1..=5u8 {
        let cells: Vec<String> = (1..=5u8)
            .map(|ba| {
                report
                    .matrix
                    .cell(ua, ba)
                    .map_or_else(|| "-".to_string(), |c| f3(c.micro_f1))
            })
            .collect();
        let _ = writeln!(out, "| {ua} | {} |", cells.join(" | "));
    }
    out.push('\n');
    let r = &report.routing;
    let _ = writeln!(
        out,
        "### Routing at threshold {}\n\n- Local (aligned references): {} of {} ({:.1}%)\n- Escalate (conflicting references): {} of {} ({:.1}%)\n",
        r.threshold,
        r.local,
        r.n,
        r.local_share * 100.0,
        r.escalate,
        r.n,
        (1.0 - r.local_share) * 100.0,
    );
    out.push_str(&deltas_block(&report.deltas, &[]));
    out
}

pub fn study3_markdown(report: &Study3Report) -> String {
    format!(
        "# Study 3: reference-alignment error analysis\n\n{}\n{}\n{}",
        meta_block(&report.meta),
        study3_body(report),
        caveats_block(),
    )
}

/// Matrix cells: one row per populated (UA, BA) cell.
pub fn study3_matrix_csv(report: &Study3Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ua", "ba", "n", "micro_f1"]).expect("csv header");
    for ua in 1..=5u8 {
        for ba in 1..=5u8 {
            if let Some(cell) = report.matrix.cell(ua, ba) {
                w.write_record([
                    ua.to_string(),
                    ba.to_string(),
                    cell.n.to_string(),
                    f3(cell.micro_f1),
                ])
                .expect("csv row");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

/// Per-review routing decisions.
pub fn study3_routing_csv(report: &Study3Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["review_id", "alignment", "decision", "threshold"])
        .expect("csv header");
    for d in &report.routing.decisions {
        w.write_record([
            d.review_id.clone(),
            format!("{:.2}", d.alignment),
            match d.decision {
                crate::analysis::RouteTarget::Local => "local".to_string(),
                crate::analysis::RouteTarget::Escalate => "escalate".to_string(),
            },
            d.threshold.to_string(),
        ])
        .expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}

/// Single combined document covering all three studies.
pub fn combined_markdown(
    study1: &Study1Report,
    study2: &Study2Report,
    study3: &Study3Report,
) -> String {
    format!
    (
        "# Evaluation report\n\n{}\n## Study 1: prompt variant comparison\n\n{}\n## Study 2: expectation-gap analysis\n\n{}\n## Study 3: reference-alignment error analysis\n\n{}\n{}",
        meta_block(&study1.meta),
        study1_body(study1),
        study2_body(study2),
        study3_body(study3),
        caveats_block(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{MatrixCell, RouteTarget};
    use crate::metrics::mcnemar_from_counts;

    fn meta() -> ReportMeta {
        ReportMeta {
            dataset: "Restaurant".into(),
            n: 4,
            backend_id: "mock:fixed:3".into(),
            template_version: "refsent-templates-v1".into(),
            manifest_hash: "abc123".into(),
            decoding: DecodingParams::default(),
        }
    }

    fn study1_report() -> Study1Report {
        Study1Report {
            meta: meta(),
            rows: vec![
                VariantRow {
                    variant: "json-ubo".parse().unwrap(),
                    n: 4,
                    imputed: 1,
                    macro_f1: 0.75,
                    rmse: 0.5,
                    macro_f1_excl: Some(1.0),
                    rmse_excl: Some(0.0),
                    mcnemar_vs_none: Some(mcnemar_from_counts(2, 1)),
                },
                VariantRow {
                    variant: PromptVariant::none(),
                    n: 4,
                    imputed: 0,
                    macro_f1: 0.5,
                    rmse: 1.0,
                    macro_f1_excl: Some(0.5),
                    rmse_excl: Some(1.0),
                    mcnemar_vs_none: None,
                },
            ],
            incomplete: vec![],
            deltas: vec![],
            unmatched: vec![],
        }
    }

    #[test]
    fn emission_is_deterministic() {
        let r = study1_report();
        assert_eq!(study1_markdown(&r), study1_markdown(&r));
        assert_eq!(study1_csv(&r), study1_csv(&r));
    }

    #[test]
    fn markdown_always_contains_caveats_and_manifest() {
        let md = study1_markdown(&study1_report());
        for caveat in CAVEATS {
            assert!(md.contains(caveat));
        }
        assert!(md.contains("Manifest: abc123"));
    }

    #[test]
    fn csv_round_trips_numeric_cells() {
        let r = study1_report();
        let csv_text = study1_csv(&r);
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let rows: Vec<csv::StringRecord> = reader.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.75);
        assert_eq!(rows[0][4].parse::<f64>().unwrap(), 0.5);
        assert_eq!(rows[1][0], *"None");
        assert_eq!(rows[1][10], *"");
    }

    #[test]
    fn matrix_markdown_renders_dashes() {
        let mut cells: [[Option<MatrixCell>; 5]; 5] = Default::default();
        cells[4][4] = Some(MatrixCell { micro_f1: 1.0, n: 3 });
        let report = Study3Report {
            meta: meta(),
            variant: "json-ubo".parse().unwrap(),
            matrix: ErrorMatrix { cells },
            routing: RoutingSummary {
                threshold: 0.5,
                n: 3,
                local: 2,
                escalate: 1,
                local_share: 2.0 / 3.0,
                decisions: vec![RoutingDecision {
                    review_id: "r1".into(),
                    alignment: 0.2,
                    decision: RouteTarget::Local,
                    threshold: 0.5,
                }],
            },
            deltas: vec![],
        };
        let md = study3_markdown(&report);
        assert!(md.contains("| 1 | - | - | - | - | - |"));
        assert!(md.contains("| 5 | - | - | - | - | 1.000 |"));
        let matrix_csv = study3_matrix_csv(&report);
        assert!(matrix_csv.contains("5,5,3,1.000"));
        let routing_csv = study3_routing_csv(&report);
        assert!(routing_csv.contains("r1,0.20,local,0.5"));
    }
}
