use std::io::IsTerminal;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use stepverify_core::evidence::{SearchFixtureStore, SearchHit};
use stepverify_core::export::export_all;
use stepverify_core::gateway::{CompletionRequest, CompletionResult, FixtureStore};
use stepverify_core::prompt::compose_prompt;
use stepverify_core::store::AnnotationStore;
use stepverify_service::app::{router, AppState};
use stepverify_service::config::{ServiceConfig, API_TOKEN_ENV};
use stepverify_service::workflow::{export_options, load_library, Workflow, DEFAULT_TEMPLATE};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "stepverify", version, about = "Step-level verification of chain-of-thought explanations")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        /// Replay recorded fixtures instead of calling providers.
        #[arg(long)]
        offline: bool,
    },
    /// Write all datasets and the manifest from the current store.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add hand-written entries to the fixture files named in the config.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Store `text_file` as the completion for `question`'s composed prompt.
    Completion {
        #[arg(long)]
        question: String,
        #[arg(long, default_value = DEFAULT_TEMPLATE)]
        template: String,
        #[arg(long)]
        text_file: PathBuf,
    },
    /// Store a JSON array of `{url, title, body}` hits for `query`.
    Search {
        #[arg(long)]
        query: String,
        #[arg(long)]
        hits_file: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<ServiceConfig> {
    let mut config = match path {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    config.apply_env();
    Ok(config)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stdout)
        .with_ansi(std::io::stdout().is_terminal())
        .init();
    let cli = Cli::parse();
    let mut config = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Serve { port, offline } => {
            if let Some(port) = port {
                config.listen_port = port;
            }
            config.offline_mode |= offline;
            let workflow = tokio::task::spawn_blocking(move || {
                let w = Workflow::from_config(&config);
                w.map(|w| (w, config.listen_port))
            })
            .await??;
            let (workflow, port) = workflow;
            let state = AppState::new(workflow).with_token(std::env::var(API_TOKEN_ENV).ok());
            let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
            tracing::info!(port, "listening");
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
        }
        Command::Export { out } => {
            let dir = out.unwrap_or_else(|| config.export_output_dir.clone());
            let library = load_library(&config)?;
            let items = AnnotationStore::open(&config.store_path)?.export_snapshot();
            let manifest = export_all(&items, &library, &export_options(&config), &dir)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Fixture(FixtureCommand::Completion { question, template, text_file }) => {
            let Some(path) = &config.fixtures.completions else { bail!("config has no fixtures.completions path") };
            let library = load_library(&config)?;
            let t = library.get(&template).with_context(|| format!("no template `{template}`"))?;
            let request =
                CompletionRequest::new(compose_prompt(t, &question)?).with_stop_sequences(t.stop_sequences.clone());
            let text = std::fs::read_to_string(&text_file)?;
            let result = CompletionResult { text, provider_id: "fixture".into(), latency_ms: 0, truncated: false };
            FixtureStore::open(path)?.record(&request, &result)?;
            println!("{}", request.fixture_key());
        }
        Command::Fixture(FixtureCommand::Search { query, hits_file }) => {
            let Some(path) = &config.fixtures.search else { bail!("config has no fixtures.search path") };
            let hits: Vec<SearchHit> = serde_json::from_str(&std::fs::read_to_string(&hits_file)?)?;
            SearchFixtureStore::open(path)?.record(&query, &hits)?;
            println!("{} hits for {:?}", hits.len(), query.trim());
        }
    }
    Ok(())
}
