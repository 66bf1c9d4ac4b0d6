//! Golden tests pinning the rendered prompt bytes for every variant.
//!
//! Regenerate with `BLESS=1 cargo test -p refsent --test golden_prompts`
//! after an intentional template change (and bump TEMPLATE_VERSION).

mod common;

use std::fs;
use std::path::PathBuf;

use refsent::promptgen::{build_base_prompt, build_prompt, PromptVariant};

fn golden_path(sample_id: &str, variant: PromptVariant) -> PathBuf {
    let slug = variant.to_string().to_lowercase();
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{sample_id}__{slug}.txt"))
}

#[test]
fn prompts_match_golden_files() {
    let bless = std::env::var("BLESS").is_ok();
    let samples = common::canonical_samples();
    let mut checked = 0usize;
    for sample in &samples {
        for variant in PromptVariant::all_seven() {
            let rendered = build_prompt(sample, variant);
            let path = golden_path(&sample.review_id, variant);
            if bless {
                fs::create_dir_all(path.parent().unwrap()).unwrap();
                fs::write(&path, rendered.as_str()).unwrap();
                continue;
            }
            let expected = fs::read_to_string(&path)
                .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
            assert_eq!(
                rendered.as_str(),
                expected,
                "byte mismatch against {}",
                path.display()
            );
            checked += 1;
        }
    }
    if !bless {
        assert_eq!(checked, 21);
    }
}

#[test]
fn none_golden_equals_base_prompt() {
    for sample in common::canonical_samples() {
        assert_eq!(
            build_prompt(&sample, PromptVariant::none()).as_str(),
            build_base_prompt(&sample).as_str()
        );
    }
}

#[test]
fn golden_json_blocks_parse_with_selected_keys() {
    for sample in common::canonical_samples() {
        for variant in PromptVariant::all_seven() {
            if variant.format() != refsent::promptgen::PromptFormat::Json {
                continue;
            }
            let path = golden_path(&sample.review_id, variant);
            let text = fs::read_to_string(&path).unwrap();
            let json_line = text
                .lines()
                .find(|l| l.starts_with('{'))
                .expect("golden JSON variant carries an object line");
            let value: serde_json::Value = serde_json::from_str(json_line).unwrap();
            let obj = value.as_object().unwrap();
            let fields = variant.fields();
            assert_eq!(obj.contains_key("user_average"), fields.user);
            assert_eq!(obj.contains_key("business_average"), fields.business);
            assert_eq!(obj.contains_key("business_name"), fields.other);
            assert_eq!(obj.contains_key("open_days_per_week"), fields.other);
            assert_eq!(obj.contains_key("hours"), fields.other);
            let expected_len = [fields.user, fields.business].iter().filter(|b| **b).count()
                + if fields.other { 3 } else { 0 };
            assert_eq!(obj.len(), expected_len);
        }
    }
}
