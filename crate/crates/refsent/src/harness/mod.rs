//! Run orchestration: configuration, run manifests, the three evaluation
//! studies, and report emission with published-value deltas.

pub mod reference;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    self, bin_metrics, bin_quintiles, build_error_matrix, compute_gap_records, route, GapKind,
    RouteTarget,
};
use crate::corpus::{
    assemble_samples, load_table, read_samples, summary_stats, write_samples, ApproxTokenizer,
    AsciiHeuristic, CorpusError, DatasetSpec, RawBusiness, RawReview, RawUser, ReviewSample,
    SummaryStats,
};
use crate::inference::{
    predict_batch, BackendError, BatchOptions, CacheKey, CompletionBackend, DecodingParams,
    HttpBackend, InferenceError, MockBackend, Prediction, PredictionCache, IMPUTED_RATING,
};
use crate::metrics::{self, LabeledPrediction, MetricsError};
use crate::promptgen::{PromptVariant, TEMPLATE_VERSION};

use reference::{compare_to_reference, DeltaBaseline, DeltaRow, MetricRow, ReferenceTable};
use report::{
    AxisTable, BinRow, ReportFormat, ReportMeta, RoutingSummary, Study1Report, Study2Report,
    Study3Report, VariantRow,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is not valid JSON: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("curated corpus not found at {path}; run `refsent prepare` first")]
    MissingCorpus { path: PathBuf },
    #[error("no cached predictions for variant {variant} (expected {path}); run `refsent predict` first")]
    MissingPredictions { variant: String, path: PathBuf },
    #[error("prediction cache for variant {variant} covers {found} of {total} samples; run `refsent predict` to fill it")]
    IncompletePredictions {
        variant: String,
        found: usize,
        total: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the curated corpus comes from and how large the sample is.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// "restaurant", "nightlife", or a custom label (requires tag lists).
    pub name: String,
    pub business_path: PathBuf,
    pub user_path: PathBuf,
    pub review_path: PathBuf,
    pub sample_size: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require_fixed_address: Option<bool>,
}

impl DatasetConfig {
    pub fn to_spec(&self) -> Result<DatasetSpec, HarnessError> {
        let mut spec = match self.name.to_lowercase().as_str() {
            "restaurant" => DatasetSpec::restaurant(self.sample_size, self.seed),
            "nightlife" => DatasetSpec::nightlife(self.sample_size, self.seed),
            _ => {
                let include = self.include_tags.clone().ok_or_else(|| {
                    HarnessError::Config(format!(
                        "dataset '{}' is not a preset; include_tags is required",
                        self.name
                    ))
                })?;
                DatasetSpec {
                    name: self.name.clone(),
                    include_tags: include,
                    exclude_tags: self.exclude_tags.clone().unwrap_or_default(),
                    require_fixed_address: self.require_fixed_address.unwrap_or(true),
                    sample_size: self.sample_size,
                    language: "en".into(),
                    seed: self.seed,
                }
            }
        };
        if let Some(tags) = &self.include_tags {
            spec.include_tags = tags.clone();
        }
        if let Some(tags) = &self.exclude_tags {
            spec.exclude_tags = tags.clone();
        }
        if let Some(required) = self.require_fixed_address {
            spec.require_fixed_address = required;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Which completion backend drives the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock {
        /// "fixed" (requires `token`) or "round-business-average".
        policy: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
    },
    Http {
        /// Falls back to `REFSENT_BACKEND_URL` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base_url: Option<String>,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_secs: Option<u64>,
    },
}

impl BackendConfig {
    /// Stable identifier; must agree with `CompletionBackend::id()` of the
    /// built backend, since it keys caches and manifests.
    pub fn backend_id(&self) -> Result<String, HarnessError> {
        match self {
            BackendConfig::Mock { policy, token } => match policy.as_str() {
                "fixed" => {
                    let token = token.as_ref().ok_or_else(|| {
                        HarnessError::Config("mock policy 'fixed' requires a token".into())
                    })?;
                    Ok(format!("mock:fixed:{token}"))
                }
                "round-business-average" => Ok("mock:round-business-average".into()),
                other => Err(HarnessError::Config(format!(
                    "unknown mock policy '{other}' (expected 'fixed' or 'round-business-average')"
                ))),
            },
            BackendConfig::Http { model, .. } => Ok(format!("http:{model}")),
        }
    }

    pub fn build(
        &self,
        samples: &[ReviewSample],
    ) -> Result<Box<dyn CompletionBackend>, HarnessError> {
        match self {
            BackendConfig::Mock { policy, token } => match policy.as_str() {
                "fixed" => {
                    let token = token.as_ref().ok_or_else(|| {
                        HarnessError::Config("mock policy 'fixed' requires a token".into())
                    })?;
                    Ok(Box::new(MockBackend::fixed(token.clone())))
                }
                "round-business-average" => {
                    Ok(Box::new(MockBackend::round_business_average(samples)))
                }
                other => Err(HarnessError::Config(format!(
                    "unknown mock policy '{other}' (expected 'fixed' or 'round-business-average')"
                ))),
            },
            BackendConfig::Http {
                base_url,
                model,
                timeout_secs,
            } => {
                let base = base_url
                    .clone()
                    .or_else(|| std::env::var(crate::inference::ENV_BACKEND_URL).ok())
                    .ok_or_else(|| {
                        HarnessError::Config(format!(
                            "http backend needs base_url (config, --backend-url, or {})",
                            crate::inference::ENV_BACKEND_URL
                        ))
                    })?;
                let token = std::env::var(crate::inference::ENV_BACKEND_TOKEN).ok();
                let timeout = std::time::Duration::from_secs(timeout_secs.unwrap_or(60));
                Ok(Box::new(HttpBackend::new(&base, model.clone(), token, timeout)?))
            }
        }
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_threshold() -> f64 {
    0.5
}

fn default_analysis_variant() -> PromptVariant {
    "json-ubo".parse().expect("json-ubo is a valid variant")
}

fn default_template_version() -> String {
    TEMPLATE_VERSION.to_string()
}

/// One run, end to end. Mirrors the JSON config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub variants: Vec<PromptVariant>,
    pub backend: BackendConfig,
    #[serde(default)]
    pub decoding: DecodingParams,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_threshold")]
    pub routing_threshold: f64,
    /// Variant whose predictions feed studies 2 and 3.
    #[serde(default = "default_analysis_variant")]
    pub analysis_variant: PromptVariant,
    pub out_dir: PathBuf,
    #[serde(default = "default_template_version")]
    pub template_version: String,
}

impl RunConfig {
    /// Loads a config; relative paths resolve against the config file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::ConfigIo {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|source| HarnessError::ConfigParse {
                path: path.to_path_buf(),
                source,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.dataset.business_path,
            &mut config.dataset.user_path,
            &mut config.dataset.review_path,
            &mut config.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.variants.is_empty() {
            return Err(HarnessError::Config("at least one variant is required".into()));
        }
        if self.routing_threshold < 0.0 {
            return Err(HarnessError::Config("routing_threshold must be >= 0".into()));
        }
        if self.template_version != TEMPLATE_VERSION {
            return Err(HarnessError::Config(format!(
                "config pins template version '{}' but this binary renders '{TEMPLATE_VERSION}'",
                self.template_version
            )));
        }
        self.backend.backend_id()?;
        Ok(())
    }

    pub fn samples_path(&self) -> PathBuf {
        self.out_dir.join("samples.jsonl")
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.out_dir.join("predictions")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }

    /// Variants whose caches a full run needs: the configured list plus the
    /// analysis variant for studies 2 and 3.
    pub fn variants_to_predict(&self) -> Vec<PromptVariant> {
        let mut all = self.variants.clone();
        if !all.contains(&self.analysis_variant) {
            all.push(self.analysis_variant);
        }
        all
    }
}

/// Snapshot of a completed (or in-progress) run. The identity hash covers
/// everything that determines results — config, corpus hash, templates,
/// backend, cache names — and deliberately excludes timestamps and absolute
/// paths so reports stay byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: String,
    pub sample_seed: u64,
    pub sample_size: usize,
    pub corpus_sha256: String,
    pub template_version: String,
    pub backend_id: String,
    pub decoding: DecodingParams,
    pub variants: Vec<String>,
    pub analysis_variant: String,
    pub routing_threshold: f64,
    /// Variant display name -> cache file name under predictions/.
    pub prediction_caches: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn identity_hash(&self) -> String {
        let identity = serde_json::json!({
            "dataset": self.dataset,
            "sample_seed": self.sample_seed,
            "sample_size": self.sample_size,
            "corpus_sha256": self.corpus_sha256,
            "template_version": self.template_version,
            "backend_id": self.backend_id,
            "decoding": self.decoding,
            "variants": self.variants,
            "analysis_variant": self.analysis_variant,
            "routing_threshold": self.routing_threshold,
            "prediction_caches": self.prediction_caches,
        });
        let digest = Sha256::digest(identity.to_string().as_bytes());
        hex::encode(&digest[..6])
    }

    /// Persists the manifest unless an identical-identity manifest is
    /// already on disk; a completed manifest is never rewritten in place.
    pub fn write_or_reuse(&self, path: &Path) -> Result<RunManifest, HarnessError> {
        if path.exists() {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            if let Ok(existing) = serde_json::from_str::<RunManifest>(&text) {
                if existing.identity_hash() == self.identity_hash() {
                    return Ok(existing);
                }
            }
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(io_err(path))?;
        Ok(self.clone())
    }
}

/// Outcome of corpus preparation.
#[derive(Debug)]
pub struct PrepareSummary {
    pub samples_path: PathBuf,
    pub n: usize,
    pub skipped_businesses: usize,
    pub skipped_users: usize,
    pub skipped_reviews: usize,
    pub stats: SummaryStats,
}

/// Curates the corpus: loads the three tables, filters and assembles the
/// sample set, and writes `samples.jsonl` plus `stats.json`.
pub fn prepare(config: &RunConfig) -> Result<PrepareSummary, HarnessError> {
    config.validate()?;
    let spec = config.dataset.to_spec()?;
    let businesses = load_table::<RawBusiness>(&config.dataset.business_path)?;
    let users = load_table::<RawUser>(&config.dataset.user_path)?;
    let reviews = load_table::<RawReview>(&config.dataset.review_path)?;
    let detector = AsciiHeuristic::default();
    let samples = assemble_samples(
        &reviews.records,
        &users.records,
        &businesses.records,
        &spec,
        &detector,
    )?;
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let samples_path = config.samples_path();
    write_samples(&samples_path, &samples)?;
    let stats = summary_stats(&samples, &ApproxTokenizer)?;
    let stats_path = config.out_dir.join("stats.json");
    fs::write(
        &stats_path,
        serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )
    .map_err(io_err(&stats_path))?;
    Ok(PrepareSummary {
        samples_path,
        n: samples.len(),
        skipped_businesses: businesses.skipped,
        skipped_users: users.skipped,
        skipped_reviews: reviews.skipped,
        stats,
    })
}

struct Context {
    samples: Vec<ReviewSample>,
    backend_id: String,
    manifest: RunManifest,
}

fn load_context(config: &RunConfig) -> Result<Context, HarnessError> {
    config.validate()?;
    let samples_path = config.samples_path();
    if !samples_path.exists() {
        return Err(HarnessError::MissingCorpus { path: samples_path });
    }
    let bytes = fs::read(&samples_path).map_err(io_err(&samples_path))?;
    let corpus_sha256 = hex::encode(Sha256::digest(&bytes));
    let loaded = read_samples(&samples_path)?;
    if loaded.skipped > 0 {
        log::warn!(
            "{}: {} invalid sample lines skipped",
            samples_path.display(),
            loaded.skipped
        );
    }
    let backend_id = config.backend.backend_id()?;
    let spec = config.dataset.to_spec()?;
    let mut prediction_caches = BTreeMap::new();
    for variant in config.variants_to_predict() {
        let key = CacheKey::new(variant, backend_id.clone(), config.decoding.clone());
        prediction_caches.insert(variant.to_string(), key.file_name());
    }
    let now = chrono::Utc::now().to_rfc3339();
    let manifest = RunManifest {
        dataset: spec.name.clone(),
        sample_seed: config.dataset.seed,
        sample_size: config.dataset.sample_size,
        corpus_sha256: corpus_sha256.clone(),
        template_version: config.template_version.clone(),
        backend_id: backend_id.clone(),
        decoding: config.decoding.clone(),
        variants: config.variants.iter().map(|v| v.to_string()).collect(),
        analysis_variant: config.analysis_variant.to_string(),
        routing_threshold: config.routing_threshold,
        prediction_caches,
        started_at: now.clone(),
        finished_at: now,
    };
    Ok(Context {
        samples: loaded.records,
        backend_id,
        manifest,
    })
}

fn cache_path(config: &RunConfig, ctx: &Context, variant: PromptVariant) -> PathBuf {
    let key = CacheKey::new(variant, ctx.backend_id.clone(), config.decoding.clone());
    config.predictions_dir().join(key.file_name())
}

async fn drive_variant(
    config: &RunConfig,
    ctx: &Context,
    backend: &dyn CompletionBackend,
    variant: PromptVariant,
) -> Result<Vec<Prediction>, HarnessError> {
    let dir = config.predictions_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut cache = PredictionCache::open(&cache_path(config, ctx, variant))?;
    let options = BatchOptions {
        model: ctx.backend_id.clone(),
        params: config.decoding.clone(),
        concurrency: config.concurrency,
        retry: Default::default(),
    };
    let predictions = predict_batch(&ctx.samples, variant, backend, &options, Some(&mut cache)).await?;
    Ok(predictions)
}

/// Per-variant outcome of a `predict` run.
#[derive(Debug)]
pub struct PredictSummary {
    pub manifest_hash: String,
    pub variants: Vec<(String, usize, usize)>,
}

/// Warms the prediction cache for every variant the run needs (the
/// configured list plus the analysis variant) and records the manifest.
pub async fn predict(config: &RunConfig) -> Result<PredictSummary, HarnessError> {
    let mut ctx = load_context(config)?;
    let backend = config.backend.build(&ctx.samples)?;
    let mut variants = Vec::new();
    for variant in config.variants_to_predict() {
        let predictions = drive_variant(config, &ctx, backend.as_ref(), variant).await?;
        let imputed = predictions.iter().filter(|p| p.imputed).count();
        variants.push((variant.to_string(), predictions.len(), imputed));
    }
    ctx.manifest.finished_at = chrono::Utc::now().to_rfc3339();
    let manifest = ctx.manifest.write_or_reuse(&config.manifest_path())?;
    Ok(PredictSummary {
        manifest_hash: manifest.identity_hash(),
        variants,
    })
}

fn labeled_pairs(samples: &[ReviewSample], predictions: &[Prediction]) -> Vec<LabeledPrediction> {
    samples
        .iter()
        .zip(predictions)
        .map(|(s, p)| LabeledPrediction {
            review_id: s.review_id.clone(),
            predicted: p.rating.unwrap_or(IMPUTED_RATING),
            actual: s.stars,
            imputed: p.imputed,
        })
        .collect()
}

fn report_meta(ctx: &Context, config: &RunConfig) -> ReportMeta {
    ReportMeta {
        dataset: ctx.manifest.dataset.clone(),
        n: ctx.samples.len(),
        backend_id: ctx.backend_id.clone(),
        template_version: config.template_version.clone(),
        manifest_hash: ctx.manifest.identity_hash(),
        decoding: config.decoding.clone(),
    }
}

/// Study 1: per-variant Macro-F1/RMSE (with and without imputed rows),
/// McNemar against the None variant, and published-value deltas.
pub async fn study1(config: &RunConfig) -> Result<Study1Report, HarnessError> {
    let mut ctx = load_context(config)?;
    let backend = config.backend.build(&ctx.samples)?;
    let mut incomplete = Vec::new();
    let mut per_variant: Vec<(PromptVariant, Vec<LabeledPrediction>, usize)> = Vec::new();
    for variant in &config.variants {
        match drive_variant(config, &ctx, backend.as_ref(), *variant).await {
            Ok(predictions) => {
                let imputed = predictions.iter().filter(|p| p.imputed).count();
                per_variant.push((*variant, labeled_pairs(&ctx.samples, &predictions), imputed));
            }
            Err(err) => {
                log::error!("variant {variant} failed: {err}");
                incomplete.push(variant.to_string());
            }
        }
    }
    ctx.manifest.finished_at = chrono::Utc::now().to_rfc3339();
    let manifest = ctx.manifest.write_or_reuse(&config.manifest_path())?;
    ctx.manifest = manifest;

    let none_pairs: Option<&Vec<LabeledPrediction>> = per_variant
        .iter()
        .find(|(v, _, _)| *v == PromptVariant::none())
        .map(|(_, pairs, _)| pairs);

    let mut rows = Vec::new();
    for (variant, pairs, imputed) in &per_variant {
        let excl = metrics::excluding_imputed(pairs);
        let mcnemar_vs_none = match none_pairs {
            Some(none) if *variant != PromptVariant::none() => {
                Some(metrics::mcnemar(pairs, none)?)
            }
            _ => None,
        };
        rows.push(VariantRow {
            variant: *variant,
            n: pairs.len(),
            imputed: *imputed,
            macro_f1: metrics::macro_f1(pairs)?,
            rmse: metrics::rmse(pairs)?,
            macro_f1_excl: metrics::macro_f1(&excl).ok(),
            rmse_excl: metrics::rmse(&excl).ok(),
            mcnemar_vs_none,
        });
    }

    let table = ReferenceTable::bundled();
    let metric_rows: Vec<MetricRow> = rows
        .iter()
        .map(|r| MetricRow {
            model: r.variant.to_string(),
            macro_f1: r.macro_f1,
            rmse: r.rmse,
        })
        .collect();
    let (deltas, unmatched) = compare_to_reference(&ctx.manifest.dataset, &metric_rows, &table);

    Ok(Study1Report {
        meta: report_meta(&ctx, config),
        rows,
        incomplete,
        deltas,
        unmatched,
    })
}

/// Loads the analysis variant's predictions from its cache, which must
/// already cover the whole sample set.
fn cached_pairs(
    config: &RunConfig,
    ctx: &Context,
) -> Result<Vec<LabeledPrediction>, HarnessError> {
    let variant = config.analysis_variant;
    let path = cache_path(config, ctx, variant);
    if !path.exists() {
        return Err(HarnessError::MissingPredictions {
            variant: variant.to_string(),
            path,
        });
    }
    let cache = PredictionCache::open(&path)?;
    let mut pairs = Vec::with_capacity(ctx.samples.len());
    let mut found = 0usize;
    for sample in &ctx.samples {
        if let Some(p) = cache.get(&sample.review_id) {
            found += 1;
            pairs.push(LabeledPrediction {
                review_id: sample.review_id.clone(),
                predicted: p.rating.unwrap_or(IMPUTED_RATING),
                actual: sample.stars,
                imputed: p.imputed,
            });
        }
    }
    if found < ctx.samples.len() {
        return Err(HarnessError::IncompletePredictions {
            variant: variant.to_string(),
            found,
            total: ctx.samples.len(),
        });
    }
    Ok(pairs)
}

/// Study 2: expectation-gap quintiles for both reference points, with
/// per-bin Micro-F1/RMSE (and Macro-F1 alongside).
pub fn study2(config: &RunConfig) -> Result<Study2Report, HarnessError> {
    let ctx = load_context(config)?;
    let pairs = cached_pairs(config, &ctx)?;
    let by_id: HashMap<String, LabeledPrediction> = pairs
        .iter()
        .map(|p| (p.review_id.clone(), p.clone()))
        .collect();

    let table = ReferenceTable::bundled();
    let mut axes = Vec::new();
    let mut deltas = Vec::new();
    let mut records = compute_gap_records(&ctx.samples);
    for axis in [GapKind::User, GapKind::Business] {
        let bins = bin_quintiles(&mut records, axis)?;
        let summaries = bin_metrics(&bins, &by_id)?;
        let mut bin_rows = Vec::new();
        for (bin, summary) in bins.iter().zip(&summaries) {
            let members: Vec<LabeledPrediction> = bin
                .review_ids
                .iter()
                .map(|id| by_id[id].clone())
                .collect();
            bin_rows.push(BinRow {
                bin: summary.bin,
                mean_gap: summary.mean_gap,
                n: summary.n,
                micro_f1: summary.micro_f1,
                rmse: summary.rmse,
                macro_f1: metrics::macro_f1(&members)?,
            });
        }
        if let Some(published) = table.study2_axis(&ctx.manifest.dataset, axis) {
            for row in &bin_rows {
                let label = format!("{} bin {}", published.axis.label(), row.bin);
                let i = row.bin as usize;
                for (metric, ours, reference) in [
                    ("micro_f1", row.micro_f1, published.micro_f1[i]),
                    ("rmse", row.rmse, published.rmse[i]),
                ] {
                    deltas.push(DeltaRow {
                        row_label: label.clone(),
                        metric: metric.into(),
                        value: ours,
                        baseline_kind: DeltaBaseline::SameCell,
                        baseline_name: format!("published {label}"),
                        baseline_value: reference,
                        abs_delta: ours - reference,
                        rel_delta_pct: reference::relative_change_pct(ours, reference),
                    });
                }
            }
        }
        axes.push(AxisTable {
            axis,
            bins: bin_rows,
        });
    }

    Ok(Study2Report {
        meta: report_meta(&ctx, config),
        variant: config.analysis_variant,
        axes,
        deltas,
    })
}

/// Study 3: the 5x5 reference-alignment Micro-F1 matrix plus routing shares
/// at the configured threshold.
pub fn study3(config: &RunConfig) -> Result<Study3Report, HarnessError> {
    let ctx = load_context(config)?;
    let pairs = cached_pairs(config, &ctx)?;
    let by_id: HashMap<String, LabeledPrediction> = pairs
        .iter()
        .map(|p| (p.review_id.clone(), p.clone()))
        .collect();
    let matrix = build_error_matrix(&ctx.samples, &by_id)?;

    let decisions: Vec<_> = ctx
        .samples
        .iter()
        .map(|s| route(s, config.routing_threshold))
        .collect();
    let local = decisions
        .iter()
        .filter(|d| d.decision == RouteTarget::Local)
        .count();
    let n = decisions.len();
    let routing = RoutingSummary {
        threshold: config.routing_threshold,
        n,
        local,
        escalate: n - local,
        local_share: local as f64 / n as f64,
        decisions,
    };

    let table = ReferenceTable::bundled();
    let mut deltas = Vec::new();
    if let Some(published) = table.study3_matrix(&ctx.manifest.dataset) {
        for ua in 1..=5u8 {
            for ba in 1..=5u8 {
                let ours = matrix.cell(ua, ba);
                let reference = published.rows[ua as usize - 1][ba as usize - 1];
                if let (Some(cell), Some(reference)) = (ours, reference) {
                    deltas.push(DeltaRow {
                        row_label: format!("UA={ua}, BA={ba}"),
                        metric: "micro_f1".into(),
                        value: cell.micro_f1,
                        baseline_kind: DeltaBaseline::SameCell,
                        baseline_name: format!("published UA={ua}, BA={ba}"),
                        baseline_value: reference,
                        abs_delta: cell.micro_f1 - reference,
                        rel_delta_pct: reference::relative_change_pct(cell.micro_f1, reference),
                    });
                }
            }
        }
    }

    Ok(Study3Report {
        meta: report_meta(&ctx, config),
        variant: config.analysis_variant,
        matrix,
        routing,
        deltas,
    })
}

fn write_file(path: &Path, content: &str) -> Result<PathBuf, HarnessError> {
    fs::write(path, content).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

/// Writes a study report in the requested formats; returns written paths.
pub fn emit_study1(
    report_data: &Study1Report,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Markdown => {
                written.push(write_file(&dir.join("study1.md"), &report::study1_markdown(report_data))?)
            }
            ReportFormat::Csv => {
                written.push(write_file(&dir.join("study1.csv"), &report::study1_csv(report_data))?)
            }
        }
    }
    Ok(written)
}

pub fn emit_study2(
    report_data: &Study2Report,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Markdown => {
                written.push(write_file(&dir.join("study2.md"), &report::study2_markdown(report_data))?)
            }
            ReportFormat::Csv => {
                written.push(write_file(&dir.join("study2.csv"), &report::study2_csv(report_data))?)
            }
        }
    }
    Ok(written)
}

pub fn emit_study3(
    report_data: &Study3Report,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Markdown => {
                written.push(write_file(&dir.join("study3.md"), &report::study3_markdown(report_data))?)
            }
            ReportFormat::Csv => {
                written.push(write_file(
                    &dir.join("study3_matrix.csv"),
                    &report::study3_matrix_csv(report_data),
                )?);
                written.push(write_file(
                    &dir.join("study3_routing.csv"),
                    &report::study3_routing_csv(report_data),
                )?);
            }
        }
    }
    Ok(written)
}

/// Runs predictions for everything the config needs, all three studies,
/// and writes per-study files plus the combined `report.md`.
pub async fn full_report(
    config: &RunConfig,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    predict(config).await?;
    let s1 = study1(config).await?;
    let s2 = study2(config)?;
    let s3 = study3(config)?;
    let dir = config.reports_dir();
    let mut written = Vec::new();
    written.extend(emit_study1(&s1, &dir, formats)?);
    written.extend(emit_study2(&s2, &dir, formats)?);
    written.extend(emit_study3(&s3, &dir, formats)?);
    written.push(write_file(
        &dir.join("report.md"),
        &report::combined_markdown(&s1, &s2, &s3),
    )?);
    Ok(written)
}
