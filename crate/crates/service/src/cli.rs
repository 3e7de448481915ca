//! Command line: `exoar run` for scripted runs, `exoar serve` for the API.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use exoar_core::domain::script::ScriptError;
use exoar_core::gateway::{write_replay_dir, GatewayError, GenerationConfig, DEFAULT_MODEL};
use exoar_core::ocel::{build_ocel, serialize_ocel, ExportManifest, OcelError};
use exoar_core::session::{edits_by_step, run_scripted, Engine, PriceTable, SessionError, SessionStore};
use thiserror::Error;

use crate::http::{router, AppState, SessionDefaults};
use crate::llm::{BackendFactory, LlmSource, DEFAULT_BASE_URL};
use crate::report::{metrics_tsv, CostReport};

/// Environment variables checked, in order, for the model API key.
pub const API_KEY_VARS: [&str; 2] = ["EXOAR_API_KEY", "OPENAI_API_KEY"];

#[derive(Debug, Parser)]
#[command(name = "exoar", version, about = "Object and activity extraction from window-tracking logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run all four steps non-interactively and write the artifacts.
    Run(RunArgs),
    /// Serve the HTTP review API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Response source: live, fixture:<dir> or replay:<dir>.
    #[arg(long, default_value = "live")]
    pub llm: LlmSource,
    #[arg(long, env = "EXOAR_BASE_URL", default_value = DEFAULT_BASE_URL)]
    pub base_url: String,
    #[arg(long, env = "EXOAR_MODEL", default_value = DEFAULT_MODEL)]
    pub model: String,
    /// Price table (TOML) used for the cost estimate.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Titles per step-4 request. Unset sends all titles at once.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: Option<u64>,
    /// Ceiling on total tokens spent by a session.
    #[arg(long)]
    pub token_ceiling: Option<u64>,
}

impl ModelArgs {
    fn config(&self) -> GenerationConfig {
        GenerationConfig {
            model_id: self.model.clone(),
            batch_size: self.batch_size.map(|n| n as usize),
            token_ceiling: self.token_ceiling,
            ..GenerationConfig::default()
        }
    }

    fn prices(&self) -> Result<Option<PriceTable>, RunError> {
        let Some(path) = &self.prices else { return Ok(None) };
        let text = read_text(path)?;
        PriceTable::from_toml(&text)
            .map(Some)
            .map_err(|e| RunError::Input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Profession of the person whose log this is.
    #[arg(long)]
    pub profession: String,
    /// Window-tracking log (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Edit script applied as the review of each step. Without one every
    /// candidate is accepted as generated.
    #[arg(long)]
    pub edits: Option<PathBuf>,
    /// Output directory for session.json, metrics.tsv, ocel.json,
    /// manifest.json, cost.json and the recorded responses.
    #[arg(long)]
    pub out: PathBuf,
    /// Session store directory. Defaults to <out>/store.
    #[arg(long, env = "EXOAR_STORE_DIR")]
    pub store: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "EXOAR_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, env = "EXOAR_STORE_DIR", default_value = "sessions")]
    pub store: PathBuf,
    /// Origin allowed to call the API from a browser. Repeatable.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Failure of `exoar run`, grouped by exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Llm(#[from] GatewayError),
    #[error(transparent)]
    Export(#[from] OcelError),
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Input(_) | RunError::Script(_) => 2,
            RunError::Session(e) => match e {
                SessionError::EmptyProfession | SessionError::Ingest(_) => 2,
                SessionError::StepOrderViolation { .. }
                | SessionError::StepMismatch { .. }
                | SessionError::Domain(_)
                | SessionError::NothingConfirmed => 3,
                SessionError::Gateway(_) => 4,
                _ => 1,
            },
            RunError::Llm(_) => 4,
            RunError::Export(_) | RunError::Output { .. } => 5,
        }
    }
}

fn read_text(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<(), RunError> {
    fs::write(&path, bytes).map_err(|source| RunError::Output { path, source })
}

fn api_key_from_env() -> Option<String> {
    API_KEY_VARS.iter().find_map(|v| std::env::var(v).ok().filter(|k| !k.trim().is_empty()))
}

#[derive(Debug)]
pub struct RunSummary {
    pub session_id: String,
    pub out: PathBuf,
    pub manifest: ExportManifest,
    pub cost: Option<CostReport>,
}

/// Creates a session, runs the four steps with the script's edits and
/// writes the artifacts to `args.out`.
pub fn run(args: &RunArgs) -> Result<RunSummary, RunError> {
    if args.profession.trim().is_empty() {
        return Err(SessionError::EmptyProfession.into());
    }
    let raw = fs::read(&args.data).map_err(|e| RunError::Input(format!("{}: {e}", args.data.display())))?;
    let edits = match &args.edits {
        Some(path) => edits_by_step(&read_text(path)?)?,
        None => Default::default(),
    };
    let prices = args.model.prices()?;
    let llm = BackendFactory::new(&args.model.llm, &args.model.base_url)?;
    let backend = llm.backend(api_key_from_env().as_deref())?.ok_or_else(|| {
        RunError::Input(format!("--llm live needs an API key in {}", API_KEY_VARS.join(" or ")))
    })?;

    fs::create_dir_all(&args.out).map_err(|source| RunError::Output { path: args.out.clone(), source })?;
    let store_dir = args.store.clone().unwrap_or_else(|| args.out.join("store"));
    let store = SessionStore::open(&store_dir).map_err(|source| RunError::Output { path: store_dir, source })?;
    let engine = Engine::new(store);

    let source_name = args.data.file_name().and_then(|n| n.to_str()).unwrap_or("data.csv");
    let (session, _) = engine.create_session(&args.profession, &raw, source_name, args.model.config(), prices)?;
    let id = session.id;
    run_scripted(&engine, &id, backend.as_ref(), edits)?;

    let (session, dataset) = engine.snapshot(&id)?;
    let document = engine.store().document_path(&id)?;
    let bytes = fs::read(&document).map_err(|source| RunError::Output { path: document, source })?;
    write(args.out.join("session.json"), bytes)?;
    write(args.out.join("metrics.tsv"), metrics_tsv(&session.metrics()?))?;
    let responses = args.out.join("responses");
    write_replay_dir(&session.records, &responses).map_err(|source| RunError::Output { path: responses, source })?;

    let (doc, manifest) = build_ocel(&session, &dataset)?;
    write(args.out.join("ocel.json"), serialize_ocel(&doc)?)?;
    write(args.out.join("manifest.json"), to_json(&manifest))?;

    let cost = match session.price_table {
        Some(_) => {
            let report = CostReport::for_session(&session)?;
            write(args.out.join("cost.json"), to_json(&report))?;
            Some(report)
        }
        None => None,
    };
    Ok(RunSummary { session_id: id, out: args.out.clone(), manifest, cost })
}

fn to_json(value: &impl serde::Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports always serialize");
    bytes.push(b'\n');
    bytes
}

pub async fn serve(args: &ServeArgs) -> Result<(), RunError> {
    let llm = BackendFactory::new(&args.model.llm, &args.model.base_url)?;
    let defaults = SessionDefaults { config: args.model.config(), prices: args.model.prices()? };
    let store = SessionStore::open(&args.store).map_err(|source| RunError::Output { path: args.store.clone(), source })?;
    let state = AppState::new(Arc::new(Engine::new(store)), llm, defaults);
    let app = router(state, &args.cors_origins);
    let listener = tokio::net::TcpListener::bind(args.addr)
        .await
        .map_err(|e| RunError::Input(format!("cannot listen on {}: {e}", args.addr)))?;
    tracing::info!(addr = %args.addr, store = %args.store.display(), llm = %args.model.llm, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| RunError::Input(format!("server failed: {e}")))
}

fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => {
            init_logging("warn");
            run(args).map(|summary| print_summary(&summary))
        }
        Command::Serve(args) => {
            init_logging("info");
            match tokio::runtime::Runtime::new() {
                Ok(rt) => rt.block_on(serve(args)),
                Err(e) => Err(RunError::Input(format!("cannot start runtime: {e}"))),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn print_summary(s: &RunSummary) {
    let m = &s.manifest;
    println!("session {}", s.session_id);
    println!(
        "ocel: {} object types, {} event types, {} objects, {} events",
        m.object_types, m.event_types, m.objects, m.events
    );
    if let Some(c) = &s.cost {
        println!(
            "cost: {:.2} {} ({} prompt + {} completion tokens)",
            c.cost, c.currency, c.prompt_tokens, c.completion_tokens
        );
    }
    println!("artifacts in {}", s.out.display());
}
