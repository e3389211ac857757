use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use registerdex_cli::commands::{self, EvalArgs, Format, GenerateArgs};
use registerdex_cli::config::{Overrides, ServiceConfig};
use registerdex_cli::runtime::Runtime;
use registerdex_cli::state::SearchState;

#[derive(Parser)]
#[command(name = "registerdex", version, about = "Paper search over hierarchical registers")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a register for every paper in the corpus.
    BuildRegisters,
    /// Build the per-view index tree from the register store.
    BuildIndex,
    /// Search the index.
    Search {
        query: String,
        /// Comma-separated view paths; skips view recognition.
        #[arg(long, value_delimiter = ',')]
        views: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print the views recognized for a query.
    Identify {
        query: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Recall@5/10 of one or more systems over a query set.
    Eval {
        /// e.g. register:oracle,register:lexical,baseline:abstract,baseline:chunk512:max
        #[arg(long)]
        systems: String,
        /// Query set, one JSON object per line.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only views at these depths (comma-separated).
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
    },
    /// Serve the HTTP API.
    Serve,
    /// Write a planted synthetic corpus with tagged queries.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        papers: usize,
        #[arg(long, default_value_t = 12)]
        key_pool: usize,
    },
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = ServiceConfig::from_process(&cli.overrides)?;
    tracing::debug!(config = %config.to_toml(), "effective config");
    let rt = Runtime::new(config)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::BuildRegisters => commands::build_registers(&rt, &mut out)?,
        Command::BuildIndex => {
            commands::build_index(&rt, &mut out)?;
        }
        Command::Search { query, views, format } => commands::search(&rt, &query, views, format, &mut out)?,
        Command::Identify { query, format } => commands::identify(&rt, &query, format, &mut out)?,
        Command::Eval {
            systems,
            dataset,
            out: out_dir,
            layers,
        } => commands::eval(
            &rt,
            EvalArgs {
                systems: &systems,
                dataset: &dataset,
                out_dir: &out_dir,
                layers: layers.map(|l| l.into_iter().collect::<BTreeSet<_>>()),
            },
            &mut out,
        )?,
        Command::Serve => {
            let state = SearchState::load(&rt)?;
            let bind = rt.config.bind.clone();
            tokio::runtime::Runtime::new()
                .context("starting async runtime")?
                .block_on(registerdex_cli::server::serve(state, &bind))?;
        }
        Command::Generate { out: dir, papers, key_pool } => {
            commands::generate_corpus(&rt, GenerateArgs { out_dir: &dir, papers, key_pool }, &mut out)?
        }
    }
    out.flush()?;
    Ok(())
}
