//! Prompt rendering: the one-shot base template plus natural-language and
//! JSON supplementary blocks for the U/B/O field selections.
//!
//! Rendering is byte-deterministic. The templates are versioned through
//! [`TEMPLATE_VERSION`] and pinned by golden files under `tests/golden/`;
//! changing any wording here requires bumping the version and re-blessing
//! the goldens.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::ReviewSample;

/// Version stamp embedded in run manifests and prediction-cache keys.
pub const TEMPLATE_VERSION: &str = "refsent-templates-v1";

const INSTRUCTION: &str = "Analyze the following review and rate the establishment on a scale of 1 to 5 stars. Respond with a single digit.";

/// Fixed worked example for the one-shot prompt. Deliberately carries no
/// supplementary block of its own: decorating it with reference points
/// would reintroduce the example-selection confound one-shot avoids.
const EXAMPLE_REVIEW: &str = "Absolutely wonderful experience from start to finish. The food came out quickly, every dish was delicious, and our server was friendly the whole evening. We will definitely be back!";
const EXAMPLE_STARS: u8 = 5;

/// The trailing answer slot completed by a single generated token.
pub const ANSWER_SLOT: &str = "Stars: ";

const JSON_EXPLANATION: &str =
    "The following JSON contains supplementary information about the user and the establishment.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("variant None cannot carry supplementary fields")]
    FieldsWithNone,
    #[error("field selection {0:?} is not one of UBO, UB, O")]
    UnsupportedFields(String),
    #[error("unknown variant name '{0}'")]
    UnknownVariant(String),
}

/// Display format of the supplementary block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptFormat {
    None,
    Nl,
    Json,
}

/// Which supplementary field groups are rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fields {
    pub user: bool,
    pub business: bool,
    pub other: bool,
}

impl Fields {
    pub const NONE: Fields = Fields { user: false, business: false, other: false };
    pub const U: Fields = Fields { user: true, business: false, other: false };
    pub const UB: Fields = Fields { user: true, business: true, other: false };
    pub const UBO: Fields = Fields { user: true, business: true, other: true };
    pub const O: Fields = Fields { user: false, business: false, other: true };

    pub fn is_empty(&self) -> bool {
        !(self.user || self.business || self.other)
    }

    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.user {
            s.push('U');
        }
        if self.business {
            s.push('B');
        }
        if self.other {
            s.push('O');
        }
        s
    }
}

/// A validated (format, fields) pair. The seven evaluated variants are
/// `None` plus NL/JSON crossed with UBO, UB, and O.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PromptVariant {
    format: PromptFormat,
    fields: Fields,
}

impl PromptVariant {
    pub fn new(format: PromptFormat, fields: Fields) -> Result<Self, PromptError> {
        match format {
            PromptFormat::None => {
                if !fields.is_empty() {
                    return Err(PromptError::FieldsWithNone);
                }
            }
            PromptFormat::Nl | PromptFormat::Json => {
                if !matches!(fields, Fields::UBO | Fields::UB | Fields::O) {
                    return Err(PromptError::UnsupportedFields(fields.label()));
                }
            }
        }
        Ok(Self { format, fields })
    }

    pub fn none() -> Self {
        Self { format: PromptFormat::None, fields: Fields::NONE }
    }

    pub fn format(&self) -> PromptFormat {
        self.format
    }

    pub fn fields(&self) -> Fields {
        self.fields
    }

    /// All seven variants in report order: JSON first, then NL, then the
    /// bare baseline.
    pub fn all_seven() -> [PromptVariant; 7] {
        let v = |format, fields| PromptVariant { format, fields };
        [
            v(PromptFormat::Json, Fields::UBO),
            v(PromptFormat::Json, Fields::UB),
            v(PromptFormat::Json, Fields::O),
            v(PromptFormat::Nl, Fields::UBO),
            v(PromptFormat::Nl, Fields::UB),
            v(PromptFormat::Nl, Fields::O),
            PromptVariant::none(),
        ]
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.format {
            PromptFormat::None => f.write_str("None"),
            PromptFormat::Nl => write!(f, "NL-{}", self.fields.label()),
            PromptFormat::Json => write!(f, "JSON-{}", self.fields.label()),
        }
    }
}

impl FromStr for PromptVariant {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_lowercase();
        if lower == "none" {
            return Ok(PromptVariant::none());
        }
        let (format, fields) = lower
            .split_once('-')
            .ok_or_else(|| PromptError::UnknownVariant(s.to_string()))?;
        let format = match format {
            "nl" => PromptFormat::Nl,
            "json" => PromptFormat::Json,
            _ => return Err(PromptError::UnknownVariant(s.to_string())),
        };
        let fields = match fields {
            "ubo" => Fields::UBO,
            "ub" => Fields::UB,
            "o" => Fields::O,
            _ => return Err(PromptError::UnknownVariant(s.to_string())),
        };
        PromptVariant::new(format, fields)
    }
}

impl Serialize for PromptVariant {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PromptVariant {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The values a supplementary block can draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplementaryInfo {
    pub user_average: f64,
    pub business_average: f64,
    pub business_name: String,
    pub open_days_per_week: u8,
    pub hours: crate::corpus::HoursMap,
}

impl SupplementaryInfo {
    pub fn from_sample(sample: &ReviewSample) -> Self {
        Self {
            user_average: sample.user_average,
            business_average: sample.business_average,
            business_name: sample.business_name.clone(),
            open_days_per_week: sample.open_days_per_week,
            hours: sample.hours.clone(),
        }
    }
}

/// A rendered prompt, ending at the answer slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText(String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// True when the final line is exactly the answer slot and no other
    /// line is.
    pub fn has_single_trailing_answer_slot(&self) -> bool {
        let mut lines = self.0.split('\n');
        let Some(last) = lines.next_back() else {
            return false;
        };
        last == ANSWER_SLOT && lines.all(|l| l != ANSWER_SLOT)
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ratings are always rendered with exactly two decimal places.
fn format_rating(value: f64) -> String {
    format!("{value:.2}")
}

fn hours_phrase(info: &SupplementaryInfo) -> String {
    info.hours
        .iter()
        .map(|(day, span)| format!("{day} {span}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One explanatory sentence per selected field group, in U, B, O order,
/// one sentence per line. An empty selection yields an empty block.
pub fn render_supplementary_nl(info: &SupplementaryInfo, fields: Fields) -> String {
    let mut lines = Vec::new();
    if fields.user {
        lines.push(format!(
            "This user's average rating across their past reviews is {}.",
            format_rating(info.user_average)
        ));
    }
    if fields.business {
        lines.push(format!(
            "This establishment's average rating across all reviews is {}.",
            format_rating(info.business_average)
        ));
    }
    if fields.other {
        let days = info.open_days_per_week;
        let unit = if days == 1 { "day" } else { "days" };
        if info.hours.is_empty() {
            lines.push(format!(
                "This review is about {}, which is open {days} {unit} a week.",
                info.business_name
            ));
        } else {
            lines.push(format!(
                "This review is about {}, which is open {days} {unit} a week ({}).",
                info.business_name,
                hours_phrase(info)
            ));
        }
    }
    lines.join("\n")
}

fn json_string(value: &str) -> String {
    serde_json::to_string(value).expect("strings always serialize")
}

/// A fixed explanation line followed by a single-line JSON object holding
/// exactly the selected keys in a fixed order. The object always parses as
/// valid JSON. An empty selection yields an empty block.
pub fn render_supplementary_json(info: &SupplementaryInfo, fields: Fields) -> String {
    if fields.is_empty() {
        return String::new();
    }
    let mut entries: Vec<String> = Vec::new();
    if fields.user {
        entries.push(format!(
            "\"user_average\": {}",
            format_rating(info.user_average)
        ));
    }
    if fields.business {
        entries.push(format!(
            "\"business_average\": {}",
            format_rating(info.business_average)
        ));
    }
    if fields.other {
        entries.push(format!(
            "\"business_name\": {}",
            json_string(&info.business_name)
        ));
        entries.push(format!(
            "\"open_days_per_week\": {}",
            info.open_days_per_week
        ));
        let hours = info
            .hours
            .iter()
            .map(|(day, span)| format!("{}: {}", json_string(day.name()), json_string(span)))
            .collect::<Vec<_>>()
            .join(", ");
        entries.push(format!("\"hours\": {{{hours}}}"));
    }
    format!("{JSON_EXPLANATION}\n{{{}}}", entries.join(", "))
}

fn render(sample: &ReviewSample, block: &str) -> PromptText {
    let mut s = String::new();
    s.push_str(INSTRUCTION);
    s.push_str("\n\n");
    s.push_str("Review: ");
    s.push_str(EXAMPLE_REVIEW);
    s.push('\n');
    s.push_str(&format!("{ANSWER_SLOT}{EXAMPLE_STARS}"));
    s.push_str("\n\n");
    s.push_str("Review: ");
    s.push_str(&sample.text);
    s.push('\n');
    if !block.is_empty() {
        s.push_str(block);
        s.push('\n');
    }
    s.push_str(ANSWER_SLOT);
    PromptText(s)
}

/// The one-shot base prompt: instruction, fixed worked example, target
/// review, trailing answer slot.
pub fn build_base_prompt(sample: &ReviewSample) -> PromptText {
    render(sample, "")
}

/// Base prompt with the variant's supplementary block inserted between the
/// target review and the answer slot. The `None` variant is identical to
/// [`build_base_prompt`].
pub fn build_prompt(sample: &ReviewSample, variant: PromptVariant) -> PromptText {
    let info = SupplementaryInfo::from_sample(sample);
    let block = match variant.format {
        PromptFormat::None => String::new(),
        PromptFormat::Nl => render_supplementary_nl(&info, variant.fields),
        PromptFormat::Json => render_supplementary_json(&info, variant.fields),
    };
    render(sample, &block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{HoursMap, Weekday};

    fn sample() -> ReviewSample {
        let mut hours = HoursMap::new();
        hours.insert(Weekday::Monday, "11:00-22:00".into());
        hours.insert(Weekday::Saturday, "10:00-23:00".into());
        ReviewSample {
            review_id: "r1".into(),
            user_id: "u1".into(),
            business_id: "b1".into(),
            text: "The pasta was cooked perfectly and the service was warm.".into(),
            stars: 4,
            user_average: 3.8,
            business_average: 4.0,
            business_name: "Luigi's Trattoria".into(),
            hours,
            open_days_per_week: 2,
        }
    }

    fn info() -> SupplementaryInfo {
        SupplementaryInfo::from_sample(&sample())
    }

    #[test]
    fn base_prompt_ends_with_answer_slot() {
        let p = build_base_prompt(&sample());
        assert!(p.as_str().ends_with(ANSWER_SLOT));
        assert!(p.has_single_trailing_answer_slot());
    }

    #[test]
    fn prompts_differ_only_in_review_segment() {
        let a = build_base_prompt(&sample());
        let mut other = sample();
        other.text = "Terrible service and cold food.".into();
        let b = build_base_prompt(&other);
        let prefix_a = a.as_str().replace(&sample().text, "{}");
        let prefix_b = b.as_str().replace(&other.text, "{}");
        assert_eq!(prefix_a, prefix_b);
    }

    #[test]
    fn nl_user_sentence_matches_fixed_wording() {
        let block = render_supplementary_nl(&info(), Fields::U);
        assert_eq!(
            block,
            "This user's average rating across their past reviews is 3.80."
        );
    }

    #[test]
    fn nl_empty_selection_is_empty() {
        assert_eq!(render_supplementary_nl(&info(), Fields::NONE), "");
        assert_eq!(render_supplementary_json(&info(), Fields::NONE), "");
    }

    #[test]
    fn nl_orders_user_before_business() {
        let block = render_supplementary_nl(&info(), Fields::UB);
        let lines: Vec<&str> = block.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("This user's"));
        assert!(lines[1].starts_with("This establishment's"));
    }

    #[test]
    fn json_block_ub_example() {
        let block = render_supplementary_json(&info(), Fields::UB);
        let lines: Vec<&str> = block.lines().collect();
        assert_eq!(lines[0], super::JSON_EXPLANATION);
        assert_eq!(
            lines[1],
            r#"{"user_average": 3.80, "business_average": 4.00}"#
        );
    }

    #[test]
    fn json_block_parses_and_has_selected_keys() {
        for fields in [Fields::UBO, Fields::UB, Fields::O] {
            let block = render_supplementary_json(&info(), fields);
            let json_line = block.lines().nth(1).unwrap();
            let value: serde_json::Value = serde_json::from_str(json_line).unwrap();
            let obj = value.as_object().unwrap();
            let mut expected = Vec::new();
            if fields.user {
                expected.push("user_average");
            }
            if fields.business {
                expected.push("business_average");
            }
            if fields.other {
                expected.extend(["business_name", "open_days_per_week", "hours"]);
            }
            let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
            let mut want = expected.clone();
            keys.sort_unstable();
            want.sort_unstable();
            assert_eq!(keys, want, "key set for {}", fields.label());
            // fixed key order in the rendered bytes
            let positions: Vec<usize> = expected
                .iter()
                .map(|k| json_line.find(&format!("\"{k}\"")).unwrap())
                .collect();
            assert!(positions.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn json_escapes_awkward_names() {
        let mut i = info();
        i.business_name = "Joe's \"Lucky\" Diner".into();
        let block = render_supplementary_json(&i, Fields::O);
        let json_line = block.lines().nth(1).unwrap();
        let value: serde_json::Value = serde_json::from_str(json_line).unwrap();
        assert_eq!(value["business_name"], "Joe's \"Lucky\" Diner");
    }

    #[test]
    fn none_variant_equals_base_prompt() {
        let s = sample();
        assert_eq!(
            build_prompt(&s, PromptVariant::none()).as_str(),
            build_base_prompt(&s).as_str()
        );
    }

    #[test]
    fn supplementary_block_sits_between_review_and_slot() {
        let s = sample();
        let p = build_prompt(
            &s,
            PromptVariant::new(PromptFormat::Json, Fields::UBO).unwrap(),
        );
        let text = p.as_str();
        let review_pos = text.rfind(&s.text).unwrap();
        let block_pos = text.find(super::JSON_EXPLANATION).unwrap();
        let slot_pos = text.rfind(ANSWER_SLOT).unwrap();
        assert!(review_pos < block_pos && block_pos < slot_pos);
        assert!(p.has_single_trailing_answer_slot());
    }

    #[test]
    fn all_variants_end_with_single_slot() {
        let s = sample();
        for v in PromptVariant::all_seven() {
            let p = build_prompt(&s, v);
            assert!(p.has_single_trailing_answer_slot(), "variant {v}");
        }
    }

    #[test]
    fn rendering_is_pure() {
        let s = sample();
        for v in PromptVariant::all_seven() {
            assert_eq!(build_prompt(&s, v), build_prompt(&s, v));
        }
    }

    #[test]
    fn variant_construction_rules() {
        assert!(PromptVariant::new(PromptFormat::None, Fields::NONE).is_ok());
        assert_eq!(
            PromptVariant::new(PromptFormat::None, Fields::UB),
            Err(PromptError::FieldsWithNone)
        );
        assert!(matches!(
            PromptVariant::new(PromptFormat::Nl, Fields::U),
            Err(PromptError::UnsupportedFields(_))
        ));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in PromptVariant::all_seven() {
            let parsed: PromptVariant = v.to_string().parse().unwrap();
            assert_eq!(parsed, v);
        }
        assert!("json-xyz".parse::<PromptVariant>().is_err());
        let v: PromptVariant = "nl-ubo".parse().unwrap();
        assert_eq!(v.to_string(), "NL-UBO");
    }

    #[test]
    fn variant_serde_uses_display_names() {
        let v: PromptVariant = "json-ub".parse().unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"JSON-UB\"");
        let back: PromptVariant = serde_json::from_str("\"JSON-UB\"").unwrap();
        assert_eq!(back, v);
    }

    /// NL and JSON blocks with the same selection must convey the same
    /// values: numbers, name, open days, and hour spans.
    #[test]
    fn nl_and_json_convey_identical_values() {
        let i = info();
        for fields in [Fields::UBO, Fields::UB, Fields::O] {
            let nl = render_supplementary_nl(&i, fields);
            let json_line = render_supplementary_json(&i, fields);
            let json_line = json_line.lines().nth(1).unwrap();
            let value: serde_json::Value = serde_json::from_str(json_line).unwrap();
            if fields.user {
                let from_json = format!("{:.2}", value["user_average"].as_f64().unwrap());
                assert!(nl.contains(&from_json));
            }
            if fields.business {
                let from_json = format!("{:.2}", value["business_average"].as_f64().unwrap());
                assert!(nl.contains(&from_json));
            }
            if fields.other {
                assert!(nl.contains(value["business_name"].as_str().unwrap()));
                let days = value["open_days_per_week"].as_u64().unwrap();
                assert!(nl.contains(&format!("open {days} ")));
                for (day, span) in value["hours"].as_object().unwrap() {
                    assert!(nl.contains(&format!("{day} {}", span.as_str().unwrap())));
                }
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn json_block_always_parses(
                ua in 1.0f64..=5.0,
                ba in 1.0f64..=5.0,
                name in "[\\PC]{0,24}",
                days in 0u8..=7,
            ) {
                let i = SupplementaryInfo {
                    user_average: ua,
                    business_average: ba,
                    business_name: name,
                    open_days_per_week: days,
                    hours: HoursMap::new(),
                };
                for fields in [Fields::UBO, Fields::UB, Fields::O] {
                    let block = render_supplementary_json(&i, fields);
                    let json_line = block.lines().nth(1).unwrap();
                    let parsed: Result<serde_json::Value, _> = serde_json::from_str(json_line);
                    prop_assert!(parsed.is_ok());
                }
            }

            #[test]
            fn every_prompt_has_single_trailing_slot(text in "[a-zA-Z ,.!?']{1,120}") {
                let mut s = super::sample();
                s.text = text;
                for v in PromptVariant::all_seven() {
                    prop_assert!(build_prompt(&s, v).has_single_trailing_answer_slot());
                }
            }
        }
    }
}
