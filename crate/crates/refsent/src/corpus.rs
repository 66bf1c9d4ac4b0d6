//! Corpus curation: parsing the Yelp Open Dataset tables, category and
//! quality filtering, leakage-free sample assembly, and summary statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(
        "insufficient candidates: requested {requested} samples but only {achievable} \
         can be drawn from {candidates} eligible reviews"
    )]
    InsufficientCandidates {
        requested: usize,
        achievable: usize,
        candidates: usize,
    },
    #[error(
        "disjoint split infeasible: requested train={n_train}/test={n_test} but achieved \
         train={got_train}/test={got_test}"
    )]
    SplitInfeasible {
        n_train: usize,
        n_test: usize,
        got_train: usize,
        got_test: usize,
    },
    #[error("summary statistics require at least one sample")]
    EmptyCorpus,
}

/// Days of the week, Monday first. Serialized with full English names to
/// match the Yelp `hours` keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Monday,
        Weekday::Tuesday,
        Weekday::Wednesday,
        Weekday::Thursday,
        Weekday::Friday,
        Weekday::Saturday,
        Weekday::Sunday,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Weekday::Monday => "Monday",
            Weekday::Tuesday => "Tuesday",
            Weekday::Wednesday => "Wednesday",
            Weekday::Thursday => "Thursday",
            Weekday::Friday => "Friday",
            Weekday::Saturday => "Saturday",
            Weekday::Sunday => "Sunday",
        }
    }
}

impl fmt::Display for Weekday {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weekday -> "open-close" span, ordered Monday first.
pub type HoursMap = BTreeMap<Weekday, String>;

/// One row of the Yelp business table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawBusiness {
    pub business_id: String,
    pub name: String,
    #[serde(default)]
    pub address: String,
    pub stars: f64,
    #[serde(default, deserialize_with = "de_categories")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub hours: Option<HoursMap>,
}

/// One row of the Yelp user table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawUser {
    pub user_id: String,
    pub average_stars: f64,
}

/// One row of the Yelp review table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawReview {
    pub review_id: String,
    pub user_id: String,
    pub business_id: String,
    #[serde(deserialize_with = "de_star_label")]
    pub stars: u8,
    pub text: String,
}

/// Yelp serves `categories` either as a comma-separated string or, in some
/// re-exports, as an array of tags. Accept both.
fn de_categories<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Cats {
        Joined(String),
        List(Vec<String>),
        Missing,
    }
    Ok(match Cats::deserialize(de)? {
        Cats::Joined(s) => s
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect(),
        Cats::List(v) => v,
        Cats::Missing => Vec::new(),
    })
}

/// Review stars arrive as floats (e.g. `4.0`); they must be integral 1-5.
fn de_star_label<'de, D: Deserializer<'de>>(de: D) -> Result<u8, D::Error> {
    let raw = f64::deserialize(de)?;
    if raw.fract() == 0.0 && (1.0..=5.0).contains(&raw) {
        Ok(raw as u8)
    } else {
        Err(serde::de::Error::custom(format!(
            "star label {raw} is not an integer in 1-5"
        )))
    }
}

/// Record-level invariants, checked after parsing. Violations are treated
/// the same way as malformed JSON: warn, skip, count.
pub trait Validate {
    fn validate(&self) -> Result<(), String>;
}

impl Validate for RawBusiness {
    fn validate(&self) -> Result<(), String> {
        if self.business_id.is_empty() {
            return Err("empty business_id".into());
        }
        let doubled = self.stars * 2.0;
        if !(1.0..=5.0).contains(&self.stars) || (doubled - doubled.round()).abs() > 1e-9 {
            return Err(format!("business stars {} not in 0.5 steps of [1,5]", self.stars));
        }
        Ok(())
    }
}

impl Validate for RawUser {
    fn validate(&self) -> Result<(), String> {
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        if !(1.0..=5.0).contains(&self.average_stars) {
            return Err(format!("average_stars {} outside [1,5]", self.average_stars));
        }
        Ok(())
    }
}

impl Validate for RawReview {
    fn validate(&self) -> Result<(), String> {
        if self.review_id.is_empty() || self.user_id.is_empty() || self.business_id.is_empty() {
            return Err("empty id field".into());
        }
        if preprocess_text(&self.text).trim().is_empty() {
            return Err("review text empty after preprocessing".into());
        }
        Ok(())
    }
}

/// Which dataset to curate and how.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub include_tags: Vec<String>,
    pub exclude_tags: Vec<String>,
    pub require_fixed_address: bool,
    pub sample_size: usize,
    pub language: String,
    pub seed: u64,
}

impl DatasetSpec {
    /// Restaurant reviews; bar/nightlife and mobile venues are excluded so
    /// the two presets never overlap.
    pub fn restaurant(sample_size: usize, seed: u64) -> Self {
        Self {
            name: "Restaurant".into(),
            include_tags: vec!["Restaurant".into(), "Restaurants".into()],
            exclude_tags: vec![
                "Fast Food".into(),
                "Food Truck".into(),
                "Food Trucks".into(),
                "Bar".into(),
                "Bars".into(),
                "Nightlife".into(),
            ],
            require_fixed_address: true,
            sample_size,
            language: "en".into(),
            seed,
        }
    }

    pub fn nightlife(sample_size: usize, seed: u64) -> Self {
        Self {
            name: "Nightlife".into(),
            include_tags: vec!["Bar".into(), "Bars".into(), "Nightlife".into()],
            exclude_tags: vec![
                "Fast Food".into(),
                "Food Truck".into(),
                "Food Trucks".into(),
            ],
            require_fixed_address: true,
            sample_size,
            language: "en".into(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.include_tags.is_empty() {
            return Err(CorpusError::InvalidSpec("include_tags is empty".into()));
        }
        if self.sample_size == 0 {
            return Err(CorpusError::InvalidSpec("sample_size is zero".into()));
        }
        let inc: HashSet<String> = self.include_tags.iter().map(|t| norm_tag(t)).collect();
        for t in &self.exclude_tags {
            if inc.contains(&norm_tag(t)) {
                return Err(CorpusError::InvalidSpec(format!(
                    "tag '{t}' appears in both include and exclude lists"
                )));
            }
        }
        Ok(())
    }
}

/// One curated (user, business, review) triple: the unit of everything
/// downstream. Field order here fixes the JSON-lines column order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewSample {
    pub review_id: String,
    pub user_id: String,
    pub business_id: String,
    pub text: String,
    pub stars: u8,
    pub user_average: f64,
    pub business_average: f64,
    pub business_name: String,
    pub hours: HoursMap,
    pub open_days_per_week: u8,
}

impl Validate for ReviewSample {
    fn validate(&self) -> Result<(), String> {
        if self.text.contains(['\r', '\n']) {
            return Err("sample text contains line breaks".into());
        }
        if !(1..=5).contains(&self.stars) {
            return Err(format!("stars {} outside 1-5", self.stars));
        }
        for (label, v) in [
            ("user_average", self.user_average),
            ("business_average", self.business_average),
        ] {
            if !(1.0..=5.0).contains(&v) {
                return Err(format!("{label} {v} outside [1,5]"));
            }
        }
        if self.open_days_per_week as usize != self.hours.len() {
            return Err("open_days_per_week does not match hours entries".into());
        }
        Ok(())
    }
}

/// Result of streaming a JSON-lines table: parsed records plus the number
/// of malformed lines that were skipped.
#[derive(Debug)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub skipped: usize,
}

/// Reads a JSON-lines table, skipping (and counting) malformed lines.
/// Blank lines are ignored without counting.
pub fn load_table<T: DeserializeOwned + Validate>(path: &Path) -> Result<Loaded<T>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(record) => match record.validate() {
                Ok(()) => records.push(record),
                Err(why) => {
                    log::warn!("{}:{}: skipping invalid record: {why}", path.display(), idx + 1);
                    skipped += 1;
                }
            },
            Err(why) => {
                log::warn!("{}:{}: skipping malformed line: {why}", path.display(), idx + 1);
                skipped += 1;
            }
        }
    }
    Ok(Loaded { records, skipped })
}

fn norm_tag(tag: &str) -> String {
    tag.trim().to_lowercase()
}

/// Keeps a business iff it carries at least one include tag, carries no
/// exclude tag, and (when required) has a fixed address.
pub fn filter_businesses<'a>(
    businesses: &'a [RawBusiness],
    spec: &DatasetSpec,
) -> Vec<&'a RawBusiness> {
    let include: HashSet<String> = spec.include_tags.iter().map(|t| norm_tag(t)).collect();
    let exclude: HashSet<String> = spec.exclude_tags.iter().map(|t| norm_tag(t)).collect();
    businesses
        .iter()
        .filter(|b| {
            let tags: Vec<String> = b.categories.iter().map(|t| norm_tag(t)).collect();
            let has_include = tags.iter().any(|t| include.contains(t));
            let has_exclude = tags.iter().any(|t| exclude.contains(t));
            let address_ok = !spec.require_fixed_address || !b.address.trim().is_empty();
            has_include && !has_exclude && address_ok
        })
        .collect()
}

/// Replaces every run of CR/LF characters with a single space. No other
/// normalization is performed.
pub fn preprocess_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_break = false;
    for ch in text.chars() {
        if ch == '\r' || ch == '\n' {
            if !in_break {
                out.push(' ');
                in_break = true;
            }
        } else {
            out.push(ch);
            in_break = false;
        }
    }
    out
}

/// Language screen applied to candidate reviews.
pub trait LanguageDetector {
    fn is_english(&self, text: &str) -> bool;
}

/// Dependency-free heuristic: at least 90% of alphabetic characters are
/// ASCII and the text contains at least five all-ASCII words.
#[derive(Debug, Clone)]
pub struct AsciiHeuristic {
    pub min_ascii_ratio: f64,
    pub min_ascii_words: usize,
}

impl Default for AsciiHeuristic {
    fn default() -> Self {
        Self {
            min_ascii_ratio: 0.9,
            min_ascii_words: 5,
        }
    }
}

impl LanguageDetector for AsciiHeuristic {
    fn is_english(&self, text: &str) -> bool {
        let mut alpha = 0usize;
        let mut ascii_alpha = 0usize;
        for ch in text.chars() {
            if ch.is_alphabetic() {
                alpha += 1;
                if ch.is_ascii_alphabetic() {
                    ascii_alpha += 1;
                }
            }
        }
        if alpha == 0 {
            return false;
        }
        if (ascii_alpha as f64) / (alpha as f64) < self.min_ascii_ratio {
            return false;
        }
        let ascii_words = text
            .split_whitespace()
            .filter(|w| w.is_ascii() && w.chars().any(|c| c.is_ascii_alphabetic()))
            .count();
        ascii_words >= self.min_ascii_words
    }
}

/// Count of weekdays with an hours entry; an absent map counts as zero.
pub fn open_days_per_week(hours: Option<&HoursMap>) -> u8 {
    hours.map_or(0, |h| h.len() as u8)
}

/// Normalizes a Yelp "open-close" span like `9:0-22:30` to `09:00-22:30`.
/// Spans that do not parse are kept as-is (trimmed).
pub fn normalize_hours_span(span: &str) -> String {
    fn part(p: &str) -> Option<String> {
        let (h, m) = p.split_once(':')?;
        let h: u8 = h.trim().parse().ok()?;
        let m: u8 = m.trim().parse().ok()?;
        if h > 23 || m > 59 {
            return None;
        }
        Some(format!("{h:02}:{m:02}"))
    }
    let trimmed = span.trim();
    match trimmed.split_once('-') {
        Some((open, close)) => match (part(open), part(close)) {
            (Some(o), Some(c)) => format!("{o}-{c}"),
            _ => trimmed.to_string(),
        },
        None => trimmed.to_string(),
    }
}

fn build_sample(review: &RawReview, user: &RawUser, business: &RawBusiness) -> ReviewSample {
    let hours: HoursMap = business
        .hours
        .as_ref()
        .map(|h| {
            h.iter()
                .map(|(day, span)| (*day, normalize_hours_span(span)))
                .collect()
        })
        .unwrap_or_default();
    let open_days = open_days_per_week(Some(&hours));
    ReviewSample {
        review_id: review.review_id.clone(),
        user_id: review.user_id.clone(),
        business_id: review.business_id.clone(),
        text: preprocess_text(&review.text),
        stars: review.stars,
        user_average: user.average_stars,
        business_average: business.stars,
        business_name: business.name.clone(),
        hours,
        open_days_per_week: open_days,
    }
}

/// All reviews that survive filtering and could enter a sample set: resolvable
/// ids, filtered business, English text. Deterministically ordered by
/// review_id; duplicate review ids keep the first occurrence.
pub fn eligible_candidates(
    reviews: &[RawReview],
    users: &[RawUser],
    businesses: &[RawBusiness],
    spec: &DatasetSpec,
    detector: &dyn LanguageDetector,
) -> Vec<ReviewSample> {
    let kept = filter_businesses(businesses, spec);
    let business_by_id: HashMap<&str, &RawBusiness> =
        kept.iter().map(|b| (b.business_id.as_str(), *b)).collect();
    let user_by_id: HashMap<&str, &RawUser> =
        users.iter().map(|u| (u.user_id.as_str(), u)).collect();

    let mut seen = HashSet::new();
    let mut candidates: Vec<ReviewSample> = Vec::new();
    for review in reviews {
        if !seen.insert(review.review_id.as_str()) {
            continue;
        }
        let (Some(user), Some(business)) = (
            user_by_id.get(review.user_id.as_str()),
            business_by_id.get(review.business_id.as_str()),
        ) else {
            continue;
        };
        let text = preprocess_text(&review.text);
        if text.trim().is_empty() || !detector.is_english(&text) {
            continue;
        }
        candidates.push(build_sample(review, user, business));
    }
    candidates.sort_by(|a, b| a.review_id.cmp(&b.review_id));
    candidates
}

/// Greedy pass over a seeded shuffle: pick reviews whose user and business
/// have not been taken yet. Returns how many it managed to pick.
fn pick_unique(
    shuffled: &[&ReviewSample],
    want: usize,
    used_users: &mut HashSet<String>,
    used_businesses: &mut HashSet<String>,
) -> Vec<ReviewSample> {
    let mut picked = Vec::with_capacity(want);
    for sample in shuffled {
        if picked.len() == want {
            break;
        }
        if used_users.contains(&sample.user_id) || used_businesses.contains(&sample.business_id) {
            continue;
        }
        used_users.insert(sample.user_id.clone());
        used_businesses.insert(sample.business_id.clone());
        picked.push((*sample).clone());
    }
    picked
}

/// Seeded random selection of `spec.sample_size` reviews such that no user
/// and no business appears twice. Output is sorted by review_id.
pub fn assemble_samples(
    reviews: &[RawReview],
    users: &[RawUser],
    businesses: &[RawBusiness],
    spec: &DatasetSpec,
    detector: &dyn LanguageDetector,
) -> Result<Vec<ReviewSample>, CorpusError> {
    spec.validate()?;
    let candidates = eligible_candidates(reviews, users, businesses, spec, detector);
    let mut refs: Vec<&ReviewSample> = candidates.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    refs.shuffle(&mut rng);

    let mut used_users = HashSet::new();
    let mut used_businesses = HashSet::new();
    let mut picked = pick_unique(&refs, spec.sample_size, &mut used_users, &mut used_businesses);
    if picked.len() < spec.sample_size {
        return Err(CorpusError::InsufficientCandidates {
            requested: spec.sample_size,
            achievable: picked.len(),
            candidates: candidates.len(),
        });
    }
    picked.sort_by(|a, b| a.review_id.cmp(&b.review_id));
    Ok(picked)
}

/// Splits a candidate pool into train and test sets that share no user id
/// and no business id, each internally free of duplicates. Selection is
/// greedy over a seeded shuffle, so a feasible split may still be missed
/// for adversarial pools; real pools are far from that regime.
pub fn split_disjoint(
    pool: &[ReviewSample],
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<ReviewSample>, Vec<ReviewSample>), CorpusError> {
    let mut refs: Vec<&ReviewSample> = pool.iter().collect();
    refs.sort_by(|a, b| a.review_id.cmp(&b.review_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    refs.shuffle(&mut rng);

    let mut used_users = HashSet::new();
    let mut used_businesses = HashSet::new();
    let mut test = pick_unique(&refs, n_test, &mut used_users, &mut used_businesses);
    // Users/businesses consumed by the test set stay blocked for train.
    let mut train = pick_unique(&refs, n_train, &mut used_users, &mut used_businesses);
    if test.len() < n_test || train.len() < n_train {
        return Err(CorpusError::SplitInfeasible {
            n_train,
            n_test,
            got_train: train.len(),
            got_test: test.len(),
        });
    }
    train.sort_by(|a, b| a.review_id.cmp(&b.review_id));
    test.sort_by(|a, b| a.review_id.cmp(&b.review_id));
    Ok((train, test))
}

/// Token counting used only for descriptive statistics.
pub trait Tokenizer {
    fn count_tokens(&self, text: &str) -> usize;
    fn name(&self) -> &str;
}

/// Documented approximation: bytes / 4, floored, at least 1. Stands in for
/// a BPE tokenizer where exact counts are not needed.
#[derive(Debug, Clone, Default)]
pub struct ApproxTokenizer;

impl Tokenizer for ApproxTokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        (text.len() / 4).max(1)
    }
    fn name(&self) -> &str {
        "approx-bytes/4"
    }
}

/// Whitespace-split token counting, mainly for tests.
#[derive(Debug, Clone, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
    fn name(&self) -> &str {
        "whitespace"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl FieldStats {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub stars: FieldStats,
    pub chars: FieldStats,
    pub tokens: FieldStats,
    /// Standard deviation convention used above.
    pub std_convention: String,
    pub tokenizer: String,
}

/// Mean/std/min/max over stars, character counts, and token counts.
/// Standard deviations are population (divide by n).
pub fn summary_stats(
    samples: &[ReviewSample],
    tokenizer: &dyn Tokenizer,
) -> Result<SummaryStats, CorpusError> {
    if samples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let stars: Vec<f64> = samples.iter().map(|s| s.stars as f64).collect();
    let chars: Vec<f64> = samples.iter().map(|s| s.text.chars().count() as f64).collect();
    let tokens: Vec<f64> = samples
        .iter()
        .map(|s| tokenizer.count_tokens(&s.text) as f64)
        .collect();
    Ok(SummaryStats {
        n: samples.len(),
        stars: FieldStats::from_values(&stars),
        chars: FieldStats::from_values(&chars),
        tokens: FieldStats::from_values(&tokens),
        std_convention: "population".into(),
        tokenizer: tokenizer.name().to_string(),
    })
}

/// Writes curated samples as JSON lines, sorted by review_id.
pub fn write_samples(path: &Path, samples: &[ReviewSample]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut sorted: Vec<&ReviewSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.review_id.cmp(&b.review_id));
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for sample in sorted {
        let line = serde_json::to_string(sample).expect("sample serializes");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads a curated sample file back.
pub fn read_samples(path: &Path) -> Result<Loaded<ReviewSample>, CorpusError> {
    load_table::<ReviewSample>(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn business(id: &str, stars: f64, cats: &[&str], address: &str) -> RawBusiness {
        RawBusiness {
            business_id: id.into(),
            name: format!("biz {id}"),
            address: address.into(),
            stars,
            categories: cats.iter().map(|c| c.to_string()).collect(),
            hours: None,
        }
    }

    fn user(id: &str, avg: f64) -> RawUser {
        RawUser {
            user_id: id.into(),
            average_stars: avg,
        }
    }

    fn review(id: &str, uid: &str, bid: &str, stars: u8, text: &str) -> RawReview {
        RawReview {
            review_id: id.into(),
            user_id: uid.into(),
            business_id: bid.into(),
            stars,
            text: text.into(),
        }
    }

    const ENGLISH: &str = "The food here was honestly great and the staff were kind.";

    #[test]
    fn load_table_parses_well_formed_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..3 {
            writeln!(
                f,
                r#"{{"business_id":"b{i}","name":"B{i}","address":"1 Main St","stars":4.0,"categories":"Restaurants, Italian"}}"#
            )
            .unwrap();
        }
        let loaded: Loaded<RawBusiness> = load_table(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert_eq!(loaded.skipped, 0);
        assert_eq!(loaded.records[0].categories, vec!["Restaurants", "Italian"]);
    }

    #[test]
    fn load_table_skips_and_counts_corrupt_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..5 {
            if i == 2 {
                writeln!(f, "{{not json").unwrap();
            } else {
                writeln!(f, r#"{{"user_id":"u{i}","average_stars":3.5}}"#).unwrap();
            }
        }
        let loaded: Loaded<RawUser> = load_table(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 4);
        assert_eq!(loaded.skipped, 1);
    }

    #[test]
    fn load_table_empty_file() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let loaded: Loaded<RawReview> = load_table(f.path()).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.skipped, 0);
    }

    #[test]
    fn load_table_missing_file_is_fatal() {
        let err = load_table::<RawUser>(Path::new("/nonexistent/users.jsonl"));
        assert!(matches!(err, Err(CorpusError::Io { .. })));
    }

    #[test]
    fn load_table_counts_invariant_violations() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"user_id":"u1","average_stars":3.5}}"#).unwrap();
        writeln!(f, r#"{{"user_id":"u2","average_stars":7.0}}"#).unwrap();
        let loaded: Loaded<RawUser> = load_table(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.skipped, 1);
    }

    #[test]
    fn review_stars_must_be_integral() {
        let ok: RawReview = serde_json::from_str(
            r#"{"review_id":"r","user_id":"u","business_id":"b","stars":4.0,"text":"x"}"#,
        )
        .unwrap();
        assert_eq!(ok.stars, 4);
        let bad = serde_json::from_str::<RawReview>(
            r#"{"review_id":"r","user_id":"u","business_id":"b","stars":4.5,"text":"x"}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn spec_rejects_overlapping_tag_lists() {
        let mut spec = DatasetSpec::restaurant(10, 0);
        spec.exclude_tags.push(" restaurants ".into());
        assert!(matches!(spec.validate(), Err(CorpusError::InvalidSpec(_))));
        let mut empty = DatasetSpec::restaurant(10, 0);
        empty.include_tags.clear();
        assert!(matches!(empty.validate(), Err(CorpusError::InvalidSpec(_))));
    }

    #[test]
    fn filter_keeps_restaurant_tag() {
        let spec = DatasetSpec::restaurant(1, 0);
        let biz = [business("b1", 4.0, &["Restaurants", "Italian"], "1 Main St")];
        assert_eq!(filter_businesses(&biz, &spec).len(), 1);
    }

    #[test]
    fn filter_drops_excluded_tag() {
        let spec = DatasetSpec::restaurant(1, 0);
        let biz = [business("b1", 4.0, &["Restaurants", "Fast Food"], "1 Main St")];
        assert!(filter_businesses(&biz, &spec).is_empty());
    }

    #[test]
    fn filter_requires_fixed_address() {
        let spec = DatasetSpec::nightlife(1, 0);
        let biz = [business("b1", 4.0, &["Bar"], "")];
        assert!(filter_businesses(&biz, &spec).is_empty());
        let with_addr = [business("b1", 4.0, &["Bar"], "2 Side St")];
        assert_eq!(filter_businesses(&with_addr, &spec).len(), 1);
    }

    #[test]
    fn filter_matches_tags_case_insensitively() {
        let spec = DatasetSpec::restaurant(1, 0);
        let biz = [business("b1", 4.0, &[" restaurants "], "1 Main St")];
        assert_eq!(filter_businesses(&biz, &spec).len(), 1);
    }

    #[test]
    fn preprocess_replaces_breaks() {
        assert_eq!(preprocess_text("Great\nfood"), "Great food");
        assert_eq!(preprocess_text("a\r\n\r\nb"), "a b");
        assert_eq!(preprocess_text("no breaks"), "no breaks");
    }

    #[test]
    fn preprocess_keeps_existing_spaces() {
        assert_eq!(preprocess_text("a \n b"), "a   b");
    }

    #[test]
    fn english_heuristic_cases() {
        let det = AsciiHeuristic::default();
        assert!(det.is_english(ENGLISH));
        assert!(!det.is_english("すばらしい食事でした。また行きたいです。"));
        assert!(!det.is_english("ok"));
        assert!(!det.is_english("123 456 789"));
    }

    #[test]
    fn open_days_counting() {
        assert_eq!(open_days_per_week(None), 0);
        let mut hours = HoursMap::new();
        for d in Weekday::ALL {
            hours.insert(d, "9:0-17:0".into());
        }
        assert_eq!(open_days_per_week(Some(&hours)), 7);
        let mut three = HoursMap::new();
        for d in [Weekday::Monday, Weekday::Wednesday, Weekday::Friday] {
            three.insert(d, "9:0-17:0".into());
        }
        assert_eq!(open_days_per_week(Some(&three)), 3);
    }

    #[test]
    fn hours_spans_are_normalized() {
        assert_eq!(normalize_hours_span("9:0-22:30"), "09:00-22:30");
        assert_eq!(normalize_hours_span(" 11:00-2:0 "), "11:00-02:00");
        assert_eq!(normalize_hours_span("closed"), "closed");
    }

    fn synthetic_pool(n: usize) -> (Vec<RawReview>, Vec<RawUser>, Vec<RawBusiness>) {
        let mut reviews = Vec::new();
        let mut users = Vec::new();
        let mut businesses = Vec::new();
        for i in 0..n {
            users.push(user(&format!("u{i:04}"), 1.0 + (i % 9) as f64 * 0.5));
            businesses.push(business(
                &format!("b{i:04}"),
                1.0 + (i % 9) as f64 * 0.5,
                &["Restaurants"],
                "1 Main St",
            ));
            reviews.push(review(
                &format!("r{i:04}"),
                &format!("u{i:04}"),
                &format!("b{i:04}"),
                (i % 5 + 1) as u8,
                ENGLISH,
            ));
        }
        (reviews, users, businesses)
    }

    #[test]
    fn assemble_respects_cardinality_and_uniqueness() {
        let (reviews, users, businesses) = synthetic_pool(1000);
        let spec = DatasetSpec::restaurant(500, 7);
        let det = AsciiHeuristic::default();
        let samples = assemble_samples(&reviews, &users, &businesses, &spec, &det).unwrap();
        assert_eq!(samples.len(), 500);
        let users_seen: HashSet<_> = samples.iter().map(|s| &s.user_id).collect();
        let biz_seen: HashSet<_> = samples.iter().map(|s| &s.business_id).collect();
        assert_eq!(users_seen.len(), 500);
        assert_eq!(biz_seen.len(), 500);
        assert!(samples.windows(2).all(|w| w[0].review_id < w[1].review_id));
    }

    #[test]
    fn assemble_keeps_at_most_one_review_per_user() {
        let (mut reviews, users, businesses) = synthetic_pool(10);
        reviews.push(review("r9999", "u0000", "b0005", 3, ENGLISH));
        let spec = DatasetSpec::restaurant(5, 3);
        let det = AsciiHeuristic::default();
        let samples = assemble_samples(&reviews, &users, &businesses, &spec, &det).unwrap();
        let u0 = samples.iter().filter(|s| s.user_id == "u0000").count();
        assert!(u0 <= 1);
    }

    #[test]
    fn assemble_is_deterministic_per_seed() {
        let (reviews, users, businesses) = synthetic_pool(100);
        let spec = DatasetSpec::restaurant(40, 11);
        let det = AsciiHeuristic::default();
        let a = assemble_samples(&reviews, &users, &businesses, &spec, &det).unwrap();
        let b = assemble_samples(&reviews, &users, &businesses, &spec, &det).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let other = DatasetSpec::restaurant(40, 12);
        let c = assemble_samples(&reviews, &users, &businesses, &other, &det).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn assemble_fails_with_counts_when_pool_too_small() {
        let (reviews, users, businesses) = synthetic_pool(10);
        let spec = DatasetSpec::restaurant(50, 1);
        let det = AsciiHeuristic::default();
        match assemble_samples(&reviews, &users, &businesses, &spec, &det) {
            Err(CorpusError::InsufficientCandidates {
                requested,
                achievable,
                candidates,
            }) => {
                assert_eq!(requested, 50);
                assert_eq!(achievable, 10);
                assert_eq!(candidates, 10);
            }
            other => panic!("expected InsufficientCandidates, got {other:?}"),
        }
    }

    #[test]
    fn split_produces_disjoint_sets() {
        let (reviews, users, businesses) = synthetic_pool(3000);
        let spec = DatasetSpec::restaurant(1, 0);
        let det = AsciiHeuristic::default();
        let pool = eligible_candidates(&reviews, &users, &businesses, &spec, &det);
        let (train, test) = split_disjoint(&pool, 1000, 500, 5).unwrap();
        assert_eq!(train.len(), 1000);
        assert_eq!(test.len(), 500);
        let train_users: HashSet<_> = train.iter().map(|s| &s.user_id).collect();
        let train_biz: HashSet<_> = train.iter().map(|s| &s.business_id).collect();
        assert!(test.iter().all(|s| !train_users.contains(&s.user_id)));
        assert!(test.iter().all(|s| !train_biz.contains(&s.business_id)));
    }

    #[test]
    fn split_with_empty_test_set() {
        let (reviews, users, businesses) = synthetic_pool(20);
        let spec = DatasetSpec::restaurant(1, 0);
        let det = AsciiHeuristic::default();
        let pool = eligible_candidates(&reviews, &users, &businesses, &spec, &det);
        let (train, test) = split_disjoint(&pool, 10, 0, 5).unwrap();
        assert_eq!(train.len(), 10);
        assert!(test.is_empty());
    }

    #[test]
    fn split_same_seed_identical() {
        let (reviews, users, businesses) = synthetic_pool(100);
        let spec = DatasetSpec::restaurant(1, 0);
        let det = AsciiHeuristic::default();
        let pool = eligible_candidates(&reviews, &users, &businesses, &spec, &det);
        let a = split_disjoint(&pool, 30, 20, 9).unwrap();
        let b = split_disjoint(&pool, 30, 20, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn split_infeasible_reports_achieved() {
        let (reviews, users, businesses) = synthetic_pool(10);
        let spec = DatasetSpec::restaurant(1, 0);
        let det = AsciiHeuristic::default();
        let pool = eligible_candidates(&reviews, &users, &businesses, &spec, &det);
        match split_disjoint(&pool, 8, 5, 1) {
            Err(CorpusError::SplitInfeasible { got_train, got_test, .. }) => {
                assert_eq!(got_test, 5);
                assert!(got_train < 8);
            }
            other => panic!("expected SplitInfeasible, got {other:?}"),
        }
    }

    fn sample_with_text(id: &str, stars: u8, text: &str) -> ReviewSample {
        ReviewSample {
            review_id: id.into(),
            user_id: format!("u-{id}"),
            business_id: format!("b-{id}"),
            text: text.into(),
            stars,
            user_average: 3.0,
            business_average: 3.0,
            business_name: "B".into(),
            hours: HoursMap::new(),
            open_days_per_week: 0,
        }
    }

    #[test]
    fn stats_constant_stars() {
        let samples: Vec<_> = (0..3)
            .map(|i| sample_with_text(&format!("r{i}"), 5, "abcd"))
            .collect();
        let stats = summary_stats(&samples, &WhitespaceTokenizer).unwrap();
        assert_eq!(stats.stars.mean, 5.0);
        assert_eq!(stats.stars.std, 0.0);
        assert_eq!(stats.stars.min, 5.0);
        assert_eq!(stats.stars.max, 5.0);
    }

    #[test]
    fn stats_char_counts() {
        let samples = vec![
            sample_with_text("r0", 3, "ab"),
            sample_with_text("r1", 3, "abcd"),
        ];
        let stats = summary_stats(&samples, &WhitespaceTokenizer).unwrap();
        assert_eq!(stats.chars.mean, 3.0);
        assert_eq!(stats.chars.min, 2.0);
        assert_eq!(stats.chars.max, 4.0);
    }

    #[test]
    fn stats_whitespace_tokens() {
        let samples = vec![sample_with_text("r0", 3, "a b c")];
        let stats = summary_stats(&samples, &WhitespaceTokenizer).unwrap();
        assert_eq!(stats.tokens.mean, 3.0);
        assert_eq!(stats.tokenizer, "whitespace");
    }

    #[test]
    fn stats_empty_corpus_is_error() {
        assert!(matches!(
            summary_stats(&[], &ApproxTokenizer),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn approx_tokenizer_floor_and_min() {
        let t = ApproxTokenizer;
        assert_eq!(t.count_tokens(""), 1);
        assert_eq!(t.count_tokens("abc"), 1);
        assert_eq!(t.count_tokens("abcdefgh"), 2);
    }

    #[test]
    fn samples_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.jsonl");
        let samples = vec![
            sample_with_text("r1", 4, "four stars overall"),
            sample_with_text("r0", 2, "two stars overall"),
        ];
        write_samples(&path, &samples).unwrap();
        let loaded = read_samples(&path).unwrap();
        assert_eq!(loaded.skipped, 0);
        assert_eq!(loaded.records.len(), 2);
        // written sorted by review_id
        assert_eq!(loaded.records[0].review_id, "r0");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn preprocess_removes_all_breaks(text in ".{0,200}") {
                let out = preprocess_text(&text);
                prop_assert!(!out.contains('\n'));
                prop_assert!(!out.contains('\r'));
            }

            #[test]
            fn preprocess_is_idempotent(text in ".{0,200}") {
                let once = preprocess_text(&text);
                prop_assert_eq!(preprocess_text(&once), once);
            }

            #[test]
            fn filtered_businesses_satisfy_predicate(
                tags in prop::collection::vec("[A-Za-z ]{1,12}", 0..5)
            ) {
                let spec = DatasetSpec::restaurant(1, 0);
                let tag_refs: Vec<&str> = tags.iter().map(|s| s.as_str()).collect();
                let biz = [business("b1", 3.5, &tag_refs, "1 Main St")];
                let kept = filter_businesses(&biz, &spec);
                let include: HashSet<String> =
                    spec.include_tags.iter().map(|t| norm_tag(t)).collect();
                let exclude: HashSet<String> =
                    spec.exclude_tags.iter().map(|t| norm_tag(t)).collect();
                let normed: Vec<String> = tags.iter().map(|t| norm_tag(t)).collect();
                let expect = normed.iter().any(|t| include.contains(t))
                    && !normed.iter().any(|t| exclude.contains(t));
                prop_assert_eq!(kept.len() == 1, expect);
            }
        }
    }
}
