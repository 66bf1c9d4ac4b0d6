//! Command-line entry point for the evaluation harness.

use std::path::PathBuf;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};

use refsent::harness::report::ReportFormat;
use refsent::harness::{self, BackendConfig, RunConfig};
use refsent::promptgen::PromptVariant;

#[derive(Parser)]
#[command(
    name = "refsent",
    version,
    about = "Reference-point-augmented sentiment analysis harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Dataset preset override
    #[arg(long, value_parser = ["restaurant", "nightlife"])]
    dataset: Option<String>,
    /// Comma-separated variants (e.g. "none,json-ubo"), or "all"
    #[arg(long)]
    variant: Option<String>,
    /// Completion endpoint base URL (http backend only)
    #[arg(long)]
    backend_url: Option<String>,
    /// Routing threshold override
    #[arg(long)]
    threshold: Option<f64>,
    /// Sampling seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report formats to emit (markdown, csv); default both
    #[arg(long)]
    format: Vec<ReportFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Curate the sample set from the raw dataset tables
    Prepare(CommonArgs),
    /// Fill the prediction caches for every configured variant
    Predict(CommonArgs),
    /// Variant comparison: Macro-F1/RMSE and McNemar vs the None variant
    Study1(CommonArgs),
    /// Expectation-gap quintile analysis
    Study2(CommonArgs),
    /// Reference-alignment error matrix and routing shares
    Study3(CommonArgs),
    /// Run everything and write the combined report
    Report(CommonArgs),
}

impl CommonArgs {
    fn load_config(&self) -> anyhow::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(dataset) = &self.dataset {
            config.dataset.name = dataset.clone();
        }
        if let Some(spec) = &self.variant {
            config.variants = parse_variants(spec)?;
        }
        if let Some(url) = &self.backend_url {
            match &mut config.backend {
                BackendConfig::Http { base_url, .. } => *base_url = Some(url.clone()),
                BackendConfig::Mock { .. } => {
                    bail!("--backend-url needs an http backend in the config, found a mock")
                }
            }
        }
        if let Some(threshold) = self.threshold {
            config.routing_threshold = threshold;
        }
        if let Some(seed) = self.seed {
            config.dataset.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        Ok(config)
    }

    fn formats(&self) -> Vec<ReportFormat> {
        if self.format.is_empty() {
            vec![ReportFormat::Markdown, ReportFormat::Csv]
        } else {
            self.format.clone()
        }
    }
}

fn parse_variants(spec: &str) -> anyhow::Result<Vec<PromptVariant>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(PromptVariant::all_seven().to_vec());
    }
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.parse::<PromptVariant>()
                .map_err(|e| anyhow::anyhow!("{e}"))
        })
        .collect()
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Prepare(args) => {
            let config = args.load_config()?;
            let summary = harness::prepare(&config)?;
            println!(
                "prepared {} samples -> {}",
                summary.n,
                summary.samples_path.display()
            );
            println!(
                "skipped lines: businesses={}, users={}, reviews={}",
                summary.skipped_businesses, summary.skipped_users, summary.skipped_reviews
            );
            println!(
                "stars mean={:.3} std={:.3}; chars mean={:.1}; tokens mean={:.1} ({})",
                summary.stats.stars.mean,
                summary.stats.stars.std,
                summary.stats.chars.mean,
                summary.stats.tokens.mean,
                summary.stats.tokenizer
            );
        }
        Command::Predict(args) => {
            let config = args.load_config()?;
            let summary = harness::predict(&config).await?;
            for (variant, n, imputed) in &summary.variants {
                println!("{variant}: {n} predictions ({imputed} imputed)");
            }
            println!("manifest {}", summary.manifest_hash);
        }
        Command::Study1(args) => {
            let config = args.load_config()?;
            let report = harness::study1(&config).await?;
            for path in harness::emit_study1(&report, &config.reports_dir(), &args.formats())? {
                println!("wrote {}", path.display());
            }
        }
        Command::Study2(args) => {
            let config = args.load_config()?;
            let report = harness::study2(&config)?;
            for path in harness::emit_study2(&report, &config.reports_dir(), &args.formats())? {
                println!("wrote {}", path.display());
            }
        }
        Command::Study3(args) => {
            let config = args.load_config()?;
            let report = harness::study3(&config)?;
            for path in harness::emit_study3(&report, &config.reports_dir(), &args.formats())? {
                println!("wrote {}", path.display());
            }
        }
        Command::Report(args) => {
            let config = args.load_config()?;
            for path in harness::full_report(&config, &args.formats()).await? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
