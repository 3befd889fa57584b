//! `bibrecon`: run the reconciliation service, batch-reconcile CSV files,
//! ingest HathiTrust dumps and evaluate against gold sets.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use bibrecon_core::batch::{reconcile_csv, BatchOptions};
use bibrecon_core::config::ServiceConfig;
use bibrecon_core::eval::{load_gold, run_eval, write_outcomes};
use bibrecon_core::extend::{ExtendMode, PropertySettings};
use bibrecon_core::hathitrust::{load_dump, save_artifact, TitleIndex};
use bibrecon_core::record::SourceId;
use bibrecon_core::session::CurationSession;
use bibrecon_core::source::{SourceHandle, SourceRegistry};
use bibrecon_service::{router, RouterOptions, ServiceState, SESSION_FILE};
use clap::{Args, Parser, Subcommand};
use tracing::{info, warn};

#[derive(Debug, Parser)]
#[command(name = "bibrecon", version, about = "Book metadata reconciliation with Work clustering")]
struct Cli {
    /// TOML config file. Environment variables override it; flags override both.
    #[arg(long, global = true, env = "BIBRECON_CONFIG")]
    config: Option<PathBuf>,

    /// Match threshold (0-100).
    #[arg(long, global = true)]
    threshold: Option<u8>,

    /// Source to use; repeat for several, or pass `all` for every source
    /// enabled in the config.
    #[arg(long = "source", global = true)]
    sources: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the reconciliation and curation API.
    Serve(ServeArgs),
    /// Reconcile a CSV file and write an enriched copy.
    Reconcile(ReconcileArgs),
    /// Load a HathiTrust TSV dump and write an index artifact.
    IngestHathitrust(IngestArgs),
    /// Measure accuracy against a gold CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
}

#[derive(Debug, Args)]
struct ReconcileArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "title")]
    title_column: String,
    #[arg(long)]
    author_column: Option<String>,
    #[arg(long)]
    date_column: Option<String>,
    #[arg(long, default_value_t = ExtendMode::Join)]
    mode: ExtendMode,
    #[arg(long, default_value = bibrecon_core::extend::DEFAULT_DELIMITER)]
    delimiter: String,
    /// Rows reconciled concurrently.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Keep only the single best match instead of a Work cluster.
    #[arg(long)]
    no_clustering: bool,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Tab-separated dump, optionally gzip-compressed.
    #[arg(long)]
    input: PathBuf,
    /// Artifact path; defaults to `hathitrust.artifact` from the config,
    /// then `hathitrust-index.json`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Gold CSV with title, author, accepted_ids and optional tags.
    #[arg(long)]
    input: PathBuf,
    /// Directory for `report.json` and `outcomes.csv`.
    #[arg(long, default_value = "eval-output")]
    output: PathBuf,
    /// Allow network sources. Without it only local sources may be used.
    #[arg(long)]
    live: bool,
}

/// Failures mapped onto the process exit code.
#[derive(Debug)]
enum Failure {
    Runtime(anyhow::Error),
    Config(anyhow::Error),
    Bind(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Bind(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Runtime(e) | Failure::Config(e) | Failure::Bind(e) => e,
        }
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .with_writer(io::stderr)
        .init();

    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", describe(failure.error()));
            ExitCode::from(failure.code())
        }
    }
}

/// The error chain on one line, skipping causes whose text an outer
/// message already includes.
fn describe(error: &anyhow::Error) -> String {
    let mut message = error.to_string();
    for cause in error.chain().skip(1) {
        let text = cause.to_string();
        if !message.contains(&text) {
            message = format!("{message}: {text}");
        }
    }
    message
}

async fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Serve(args) => serve(config, args).await,
        Command::Reconcile(args) => reconcile(config, args).await,
        Command::IngestHathitrust(args) => ingest(&config, args),
        Command::Eval(args) => eval(config, args).await,
    }
}

/// File, then environment, then flags.
fn load_config(cli: &Cli) -> Result<ServiceConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => ServiceConfig::load(path).map_err(config_error)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(|name| std::env::var(name).ok()).map_err(config_error)?;
    if let Some(threshold) = cli.threshold {
        config.matching.threshold = threshold;
    }
    if let Command::Serve(args) = &cli.command {
        if let Some(port) = args.port {
            config.port = port;
        }
        if let Some(host) = &args.host {
            config.host = host.clone();
        }
    }
    if !cli.sources.iter().any(|s| s == "all") && !cli.sources.is_empty() {
        let wanted = cli
            .sources
            .iter()
            .flat_map(|s| s.split(','))
            .map(|s| s.trim().parse::<SourceId>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(config_error)?;
        config.enable_only(&wanted);
    }
    Ok(config)
}

fn registry(config: &ServiceConfig) -> Result<SourceRegistry, Failure> {
    config.build_registry().map_err(config_error)
}

fn handles(registry: &SourceRegistry) -> Vec<SourceHandle> {
    registry.handles().cloned().collect()
}

fn load_session(config: &ServiceConfig) -> Result<Option<CurationSession>, Failure> {
    let path = config.session_dir.join(SESSION_FILE);
    if !path.exists() {
        return Ok(None);
    }
    CurationSession::load(&path)
        .map(Some)
        .with_context(|| format!("loading curation session {}", path.display()))
        .map_err(runtime)
}

async fn serve(config: ServiceConfig, _args: ServeArgs) -> Result<(), Failure> {
    let registry = registry(&config)?;
    let options = RouterOptions {
        cors_origin: config.cors_origin.clone(),
        ui_dir: config.ui_dir.clone(),
    };
    let sources: Vec<&str> = registry.ids().map(SourceId::as_str).collect();
    let sources = sources.join(", ");
    let state = ServiceState::from_config(&config, registry)
        .context("loading curation session")
        .map_err(config_error)?;
    let session_path = state.session_path().to_owned();
    let app = router(Arc::new(state), &options).map_err(config_error)?;

    let address = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&address)
        .await
        .with_context(|| format!("binding {address}"))
        .map_err(Failure::Bind)?;
    let local = listener.local_addr().map_err(runtime)?;
    info!(%local, sources, "listening; mounted under /api/<source>/");
    println!("listening on http://{local} (sources: {sources})");
    let _ = io::stdout().flush();

    bibrecon_service::serve(listener, app, async {
        let _ = tokio::signal::ctrl_c().await;
        info!("shutting down");
    })
    .await
    .map_err(runtime)?;
    info!(session = %session_path.display(), "curation decisions are written on every change");
    Ok(())
}

async fn reconcile(config: ServiceConfig, args: ReconcileArgs) -> Result<(), Failure> {
    let settings = PropertySettings {
        mode: args.mode,
        delimiter: args.delimiter,
    };
    settings.validate().map_err(config_error)?;
    if args.concurrency == 0 {
        return Err(config_error(anyhow::anyhow!("--concurrency must be at least 1")));
    }
    let registry = registry(&config)?;
    let sources = handles(&registry);
    let session = load_session(&config)?;
    let options = BatchOptions {
        title_column: args.title_column,
        author_column: args.author_column,
        date_column: args.date_column,
        settings,
        concurrency: args.concurrency,
        clustering: config.clustering && !args.no_clustering,
        ..BatchOptions::default()
    };

    let input = File::open(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))
        .map_err(runtime)?;
    let input = BufReader::new(input);
    let report = match &args.output {
        Some(path) => {
            let file = File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(runtime)?;
            let mut output = BufWriter::new(file);
            let report = reconcile_csv(input, &mut output, &sources, &config.matching, &options, session.as_ref())
                .await
                .map_err(runtime)?;
            output.flush().map_err(runtime)?;
            println!("{report}");
            report
        }
        None => {
            let stdout = io::stdout();
            let report = reconcile_csv(input, stdout.lock(), &sources, &config.matching, &options, session.as_ref())
                .await
                .map_err(runtime)?;
            eprintln!("{report}");
            report
        }
    };
    info!(rows = report.output_rows, "wrote output");
    Ok(())
}

fn ingest(config: &ServiceConfig, args: IngestArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let report = load_dump(&args.input, &config.hathitrust.column_map).map_err(runtime)?;
    let (loaded, skipped) = (report.records.len(), report.skipped);
    let index = TitleIndex::build(report.records).map_err(runtime)?;
    let elapsed = started.elapsed();
    let output = args
        .output
        .or_else(|| config.hathitrust.artifact.clone())
        .unwrap_or_else(|| PathBuf::from("hathitrust-index.json"));
    save_artifact(index.records(), &output).map_err(runtime)?;
    println!("loaded {loaded}, skipped {skipped}");
    println!("index built in {} ms", elapsed.as_millis());
    println!("wrote {}", output.display());
    Ok(())
}

fn is_local(source: SourceId) -> bool {
    matches!(source, SourceId::Fixture | SourceId::HathiTrust)
}

async fn eval(config: ServiceConfig, args: EvalArgs) -> Result<(), Failure> {
    if !args.live {
        let remote: Vec<&str> = config
            .enabled_sources()
            .map(|(id, _)| id)
            .filter(|id| !is_local(*id))
            .map(SourceId::as_str)
            .collect();
        if !remote.is_empty() {
            return Err(config_error(anyhow::anyhow!(
                "{} would be queried over the network; pass --live to allow it",
                remote.join(", ")
            )));
        }
    }
    let gold = load_gold(&args.input).map_err(runtime)?;
    let registry = registry(&config)?;
    let run = run_eval(&gold, &handles(&registry), &config.matching)
        .await
        .map_err(runtime)?;
    println!("{}", run.report);
    write_reports(&args.output, &run).map_err(runtime)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn write_reports(dir: &Path, run: &bibrecon_core::eval::EvalRun) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let report = dir.join("report.json");
    let json = serde_json::to_string_pretty(&run.report)?;
    std::fs::write(&report, json + "\n").with_context(|| format!("writing {}", report.display()))?;
    let log = dir.join("outcomes.csv");
    let file = File::create(&log).with_context(|| format!("creating {}", log.display()))?;
    write_outcomes(BufWriter::new(file), &run.outcomes)?;
    if run.outcomes.iter().any(|o| !o.error.is_empty()) {
        warn!("some queries failed; see the error column of {}", log.display());
    }
    Ok(())
}
