//! Backend-agnostic inference under the one-token decoding protocol:
//! completion backends (HTTP and deterministic mocks), transport retry with
//! exponential backoff, single-token rating parsing, and a resumable
//! prediction cache driven by a bounded-concurrency batch runner.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::round_star;
use crate::corpus::ReviewSample;
use crate::promptgen::{self, PromptVariant, TEMPLATE_VERSION};

/// Environment variable naming the completion endpoint base URL.
pub const ENV_BACKEND_URL: &str = "REFSENT_BACKEND_URL";
/// Environment variable carrying an optional bearer token.
pub const ENV_BACKEND_TOKEN: &str = "REFSENT_BACKEND_TOKEN";

/// Rating recorded when a sample's generations stay unparseable.
pub const IMPUTED_RATING: u8 = 3;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {excerpt}")]
    Protocol { status: u16, excerpt: String },
    #[error("unusable backend response: {0}")]
    InvalidResponse(String),
    #[error("scripted mock has no token for review '{0}'")]
    MissingScript(String),
}

impl BackendError {
    /// Only transport-level failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("prediction cache {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Decoding parameters for the one-token protocol. Temperature 1.0 is the
/// evaluation default; temperature 0 plus a backend seed gives reproducible
/// CI runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 1,
            seed: None,
        }
    }
}

impl DecodingParams {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1,
            seed: Some(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    /// Carried for sample-aware mocks; never sent over the wire.
    pub review_id: String,
    pub prompt: String,
    pub model: String,
    pub params: DecodingParams,
}

#[derive(Debug, Clone)]
pub struct CompletionResponse {
    /// Text of the first generated token.
    pub text: String,
    pub latency_ms: u64,
    /// Raw backend payload, when the backend has one.
    pub raw: Option<serde_json::Value>,
}

/// A single-token completion backend. Implementations must tolerate
/// concurrent in-flight calls.
#[async_trait]
pub trait CompletionBackend: Send + Sync {
    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Stable identifier recorded in manifests and cache keys.
    fn id(&self) -> String;
}

/// Exponential backoff for transient transport failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(2u32.saturating_pow(attempt));
        exp.min(self.max_delay)
    }
}

/// Calls the backend, retrying transient transport failures up to the
/// policy's limit with exponential backoff. Protocol errors are returned
/// immediately.
pub async fn complete(
    request: &CompletionRequest,
    backend: &dyn CompletionBackend,
    retry: &RetryPolicy,
) -> Result<CompletionResponse, BackendError> {
    let mut attempt = 0u32;
    loop {
        match backend.complete(request).await {
            Ok(response) => return Ok(response),
            Err(err) if err.is_transient() && attempt < retry.max_retries => {
                log::warn!(
                    "transient backend failure for {} (attempt {}/{}): {err}",
                    request.review_id,
                    attempt + 1,
                    retry.max_retries
                );
                tokio::time::sleep(retry.delay(attempt)).await;
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

#[derive(Serialize)]
struct CompletionsBody<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct CompletionsReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

/// OpenAI-compatible `/v1/completions` client.
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(
        base_url: &str,
        model: impl Into<String>,
        token: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/v1/completions", base_url.trim_end_matches('/')),
            model: model.into(),
            token,
        })
    }

    /// Builds a backend from `REFSENT_BACKEND_URL` / `REFSENT_BACKEND_TOKEN`.
    pub fn from_env(model: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let base = std::env::var(ENV_BACKEND_URL).map_err(|_| {
            BackendError::InvalidResponse(format!("{ENV_BACKEND_URL} is not set"))
        })?;
        let token = std::env::var(ENV_BACKEND_TOKEN).ok();
        Self::new(&base, model, token, timeout)
    }
}

#[async_trait]
impl CompletionBackend for HttpBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = CompletionsBody {
            model: &self.model,
            prompt: &request.prompt,
            temperature: request.params.temperature,
            max_tokens: request.params.max_tokens,
            seed: request.params.seed,
        };
        let started = Instant::now();
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let response = call
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            let excerpt: String = text.chars().take(200).collect();
            return Err(BackendError::Protocol {
                status: status.as_u16(),
                excerpt,
            });
        }
        let raw: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::InvalidResponse(format!("bad JSON payload: {e}")))?;
        let reply: CompletionsReply = serde_json::from_value(raw.clone())
            .map_err(|e| BackendError::InvalidResponse(format!("unexpected payload shape: {e}")))?;
        let choice = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::InvalidResponse("empty choices array".into()))?;
        Ok(CompletionResponse {
            text: choice.text,
            latency_ms: started.elapsed().as_millis() as u64,
            raw: Some(raw),
        })
    }

    fn id(&self) -> String {
        format!("http:{}", self.model)
    }
}

/// Deterministic test backends.
#[derive(Debug, Clone)]
pub enum MockPolicy {
    /// Always return the same token.
    Fixed(String),
    /// Return the sample's business average, rounded half-up and clamped.
    RoundBusinessAverage,
    /// Per-review scripted tokens; missing ids are an error.
    Scripted(HashMap<String, String>),
}

pub struct MockBackend {
    policy: MockPolicy,
    business_averages: HashMap<String, f64>,
}

impl MockBackend {
    pub fn fixed(token: impl Into<String>) -> Self {
        Self {
            policy: MockPolicy::Fixed(token.into()),
            business_averages: HashMap::new(),
        }
    }

    /// Sample-aware mock: answers with `round_star(business_average)`.
    pub fn round_business_average(samples: &[ReviewSample]) -> Self {
        Self {
            policy: MockPolicy::RoundBusinessAverage,
            business_averages: samples
                .iter()
                .map(|s| (s.review_id.clone(), s.business_average))
                .collect(),
        }
    }

    pub fn scripted(tokens: HashMap<String, String>) -> Self {
        Self {
            policy: MockPolicy::Scripted(tokens),
            business_averages: HashMap::new(),
        }
    }
}

#[async_trait]
impl CompletionBackend for MockBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let text = match &self.policy {
            MockPolicy::Fixed(token) => token.clone(),
            MockPolicy::RoundBusinessAverage => {
                let avg = self
                    .business_averages
                    .get(&request.review_id)
                    .ok_or_else(|| BackendError::MissingScript(request.review_id.clone()))?;
                round_star(*avg).to_string()
            }
            MockPolicy::Scripted(tokens) => tokens
                .get(&request.review_id)
                .cloned()
                .ok_or_else(|| BackendError::MissingScript(request.review_id.clone()))?,
        };
        Ok(CompletionResponse {
            text,
            latency_ms: 0,
            raw: None,
        })
    }

    fn id(&self) -> String {
        match &self.policy {
            MockPolicy::Fixed(token) => format!("mock:fixed:{token}"),
            MockPolicy::RoundBusinessAverage => "mock:round-business-average".into(),
            MockPolicy::Scripted(_) => "mock:scripted".into(),
        }
    }
}

/// An unusable generation; tracked, never silently dropped.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse '{raw}' as a 1-5 star rating")]
pub struct ParseFailure {
    pub raw: String,
}

/// Strips surrounding whitespace and accepts exactly one character in 1-5.
pub fn parse_rating(raw_text: &str) -> Result<u8, ParseFailure> {
    let trimmed = raw_text.trim();
    let mut chars = trimmed.chars();
    match (chars.next(), chars.next()) {
        (Some(c @ '1'..='5'), None) => Ok(c as u8 - b'0'),
        _ => Err(ParseFailure {
            raw: raw_text.to_string(),
        }),
    }
}

/// Per-sample backend outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub review_id: String,
    pub variant: PromptVariant,
    pub rating: Option<u8>,
    pub parse_failed: bool,
    pub imputed: bool,
    pub raw_text: String,
    pub attempts: u32,
    pub latency_ms: u64,
}

/// Identity of a prediction cache file. Any change to the variant, model,
/// template version, or decoding parameters changes the digest and forces
/// regeneration.
#[derive(Debug, Clone)]
pub struct CacheKey {
    pub variant: PromptVariant,
    pub model: String,
    pub template_version: String,
    pub params: DecodingParams,
}

impl CacheKey {
    pub fn new(variant: PromptVariant, model: impl Into<String>, params: DecodingParams) -> Self {
        Self {
            variant,
            model: model.into(),
            template_version: TEMPLATE_VERSION.to_string(),
            params,
        }
    }

    fn canonical(&self) -> String {
        format!(
            "variant={};model={};template={};temperature={};max_tokens={};seed={}",
            self.variant,
            self.model,
            self.template_version,
            self.params.temperature,
            self.params.max_tokens,
            self.params
                .seed
                .map_or_else(|| "none".to_string(), |s| s.to_string()),
        )
    }

    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&hash[..6])
    }

    pub fn file_name(&self) -> String {
        let slug = self.variant.to_string().to_lowercase();
        format!("{slug}-{}.jsonl", self.digest())
    }
}

/// Append-only JSON-lines prediction store, one file per [`CacheKey`].
/// Appends go through a single `&mut` handle, so they are serialized by
/// construction.
pub struct PredictionCache {
    path: PathBuf,
    entries: HashMap<String, Prediction>,
    writer: BufWriter<File>,
}

impl PredictionCache {
    pub fn open(path: &Path) -> Result<Self, InferenceError> {
        let io = |source| InferenceError::CacheIo {
            path: path.to_path_buf(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Prediction>(&line) {
                    Ok(p) => {
                        entries.insert(p.review_id.clone(), p);
                    }
                    Err(e) => {
                        log::warn!("{}:{}: dropping corrupt cache line: {e}", path.display(), idx + 1);
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            entries,
            writer: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, review_id: &str) -> Option<&Prediction> {
        self.entries.get(review_id)
    }

    pub fn append(&mut self, prediction: &Prediction) -> Result<(), InferenceError> {
        let io = |source| InferenceError::CacheIo {
            path: self.path.clone(),
            source,
        };
        let line = serde_json::to_string(prediction).expect("prediction serializes");
        writeln!(self.writer, "{line}").map_err(io)?;
        self.writer.flush().map_err(io)?;
        self.entries
            .insert(prediction.review_id.clone(), prediction.clone());
        Ok(())
    }
}

/// Knobs for [`predict_batch`].
#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub model: String,
    pub params: DecodingParams,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl BatchOptions {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            params: DecodingParams::default(),
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

async fn predict_one(
    sample: &ReviewSample,
    variant: PromptVariant,
    backend: &dyn CompletionBackend,
    options: &BatchOptions,
) -> Prediction {
    let prompt = promptgen::build_prompt(sample, variant);
    let request = CompletionRequest {
        review_id: sample.review_id.clone(),
        prompt: prompt.into_string(),
        model: options.model.clone(),
        params: options.params.clone(),
    };
    let mut raw_text = String::new();
    let mut latency_ms = 0u64;
    let mut attempts = 0u32;
    // One automatic re-generation after a parse failure, then impute.
    for _ in 0..2 {
        attempts += 1;
        match complete(&request, backend, &options.retry).await {
            Ok(response) => {
                latency_ms += response.latency_ms;
                raw_text = response.text;
                if let Ok(rating) = parse_rating(&raw_text) {
                    return Prediction {
                        review_id: sample.review_id.clone(),
                        variant,
                        rating: Some(rating),
                        parse_failed: false,
                        imputed: false,
                        raw_text,
                        attempts,
                        latency_ms,
                    };
                }
            }
            Err(err) => {
                log::warn!("backend error for {}: {err}", sample.review_id);
                break;
            }
        }
    }
    Prediction {
        review_id: sample.review_id.clone(),
        variant,
        rating: Some(IMPUTED_RATING),
        parse_failed: true,
        imputed: true,
        raw_text,
        attempts,
        latency_ms,
    }
}

/// Runs one variant over a sample set with at most `options.concurrency`
/// requests in flight. Results come back in input order. Samples already in
/// the cache are reused without touching the backend; fresh predictions are
/// appended to the cache as they complete. Per-sample backend failures are
/// recorded (flagged and imputed), never fatal to the batch.
pub async fn predict_batch(
    samples: &[ReviewSample],
    variant: PromptVariant,
    backend: &dyn CompletionBackend,
    options: &BatchOptions,
    mut cache: Option<&mut PredictionCache>,
) -> Result<Vec<Prediction>, InferenceError> {
    let jobs: Vec<&ReviewSample> = samples
        .iter()
        .filter(|s| {
            cache
                .as_ref()
                .is_none_or(|c| c.get(&s.review_id).is_none())
        })
        .collect();

    let mut fresh: HashMap<String, Prediction> = HashMap::new();
    let mut stream = futures::stream::iter(
        jobs.into_iter()
            .map(|sample| predict_one(sample, variant, backend, options)),
    )
    .buffered(options.concurrency.max(1));
    while let Some(prediction) = stream.next().await {
        if let Some(cache) = cache.as_mut() {
            cache.append(&prediction)?;
        }
        fresh.insert(prediction.review_id.clone(), prediction);
    }
    drop(stream);

    Ok(samples
        .iter()
        .map(|s| {
            if let Some(p) = fresh.get(&s.review_id) {
                return p.clone();
            }
            cache
                .as_ref()
                .and_then(|c| c.get(&s.review_id))
                .cloned()
                .expect("every sample is cached or freshly predicted")
        })
        .collect())
}
