use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use kgrag::kg::{Depth, ReviewFlags, ReviewStatus};
use kgrag::llm::CannedLlm;
use kgrag::settings::{Settings, SETTINGS_FILE};
use kgrag::{AnswerMode, AskRequest, Engine};

#[derive(Parser)]
#[command(name = "kgrag", version, about = "Knowledge-graph enhanced RAG tutor")]
struct Cli {
    /// Directory holding the corpus, triples, graph, cache and settings.
    #[arg(long, global = true, env = "KGRAG_DATA_DIR", default_value = "kgrag-data")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default kgrag.toml into the data directory.
    Init {
        #[arg(long)]
        force: bool,
    },
    /// Ingest text/markdown files or directories.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Extract triples from every chunk with the configured LLM.
    Extract {
        /// Replay `<chunk_id>.txt` outputs from this directory instead.
        #[arg(long)]
        canned: Option<PathBuf>,
    },
    /// Review extracted triples.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
    /// Build the knowledge graph from approved triples.
    Build,
    /// Ask a question.
    Ask {
        query: String,
        #[arg(long, default_value = "kgrag")]
        mode: String,
        #[arg(long)]
        no_cache: bool,
        #[arg(long)]
        session: Option<String>,
        /// Print the full response as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Show retrieved context without calling the LLM.
    Retrieve { query: String },
    /// Inspect the knowledge graph.
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Static UI bundle served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Estimate provider cost for a number of questions.
    Cost {
        #[arg(long)]
        provider: String,
        #[arg(long, default_value_t = 1)]
        n: u64,
        #[arg(long, default_value_t = 0.0)]
        hit_rate: f64,
    },
    /// Manage the answer cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Print engine statistics.
    Health,
}

#[derive(Subcommand)]
enum ReviewAction {
    /// Write all triples to a CSV file for review.
    Export { csv: PathBuf },
    /// Replace the triple store with a reviewed CSV file.
    Import { csv: PathBuf },
    /// List triples with their ids.
    List,
    /// Approve or reject one triple.
    Set {
        id: usize,
        status: String,
        #[arg(long)]
        precision: Option<bool>,
        #[arg(long)]
        completeness: Option<bool>,
        #[arg(long)]
        relevance: Option<bool>,
    },
}

#[derive(Subcommand)]
enum GraphAction {
    /// Print the whole graph as JSON.
    Export,
    /// Print the neighborhood of one entity as JSON.
    Neighborhood {
        entity: String,
        #[arg(long, default_value = "1")]
        depth: String,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Flush,
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let data_dir = cli.data_dir;

    if let Command::Init { force } = cli.command {
        fs::create_dir_all(&data_dir)?;
        let path = data_dir.join(SETTINGS_FILE);
        if path.exists() && !force {
            bail!("{} already exists (use --force to overwrite)", path.display());
        }
        fs::write(&path, Settings::default().to_toml())?;
        println!("wrote {}", path.display());
        return Ok(());
    }

    if let Command::Cost { provider, n, hit_rate } = &cli.command {
        // Cost estimates only need the table, not a full engine.
        fs::create_dir_all(&data_dir)?;
        let costs = kgrag::cost::CostModel::load_or_seed(&data_dir.join("costs.csv"))?;
        let usd = costs.estimate_cost(provider, *n, *hit_rate)?;
        println!("{provider}: {n} question(s) at hit rate {hit_rate} -> {usd:.6} USD");
        if let Ok(ratio) = costs.cost_ratio(provider, kgrag::cost::BASELINE_PROVIDER) {
            println!("cost ratio vs {}: {ratio:.2}x", kgrag::cost::BASELINE_PROVIDER);
        }
        return Ok(());
    }

    let engine = Engine::open(&data_dir)
        .with_context(|| format!("opening data directory {}", data_dir.display()))?;

    match cli.command {
        Command::Init { .. } | Command::Cost { .. } => unreachable!(),
        Command::Ingest { paths } => {
            for path in paths {
                let report = engine.ingest_path(&path)?;
                println!(
                    "ingested {} document(s) from {}: {} chunk(s); corpus has {} documents, {} chunks",
                    report.doc_ids.len(),
                    path.display(),
                    report.chunks_added,
                    report.document_count,
                    report.chunk_count
                );
            }
        }
        Command::Extract { canned } => {
            let report = match canned {
                Some(dir) => engine.extract_with(&CannedLlm::new(dir))?,
                None => engine.extract()?,
            };
            println!(
                "{} run(s): {} ok, {} failed; {} triple(s) parsed, {} warning(s); {} pending review",
                report.runs,
                report.succeeded,
                report.failed,
                report.triples_parsed,
                report.warnings,
                report.pending_triples
            );
        }
        Command::Review { action } => match action {
            ReviewAction::Export { csv } => {
                fs::write(&csv, engine.export_triples()?)?;
                println!("wrote {} triple(s) to {}", engine.triples().len(), csv.display());
            }
            ReviewAction::Import { csv } => {
                let bytes = fs::read(&csv).with_context(|| format!("reading {}", csv.display()))?;
                let report = engine.import_triples(&bytes)?;
                for e in &report.errors {
                    eprintln!("{}: {e}", csv.display());
                }
                println!(
                    "imported {} triple(s), {} row error(s)",
                    report.triples.len(),
                    report.errors.len()
                );
            }
            ReviewAction::List => {
                for (id, t) in engine.triples().iter().enumerate() {
                    println!(
                        "{id}\t{}\t[{}, {}, {}]\t{}",
                        t.status, t.subject, t.predicate, t.object, t.source_chunk_id
                    );
                }
            }
            ReviewAction::Set {
                id,
                status,
                precision,
                completeness,
                relevance,
            } => {
                let status: ReviewStatus = status.parse().map_err(anyhow::Error::msg)?;
                let flags = ReviewFlags {
                    precision,
                    completeness,
                    relevance,
                };
                let t = engine.review(id, status, flags)?;
                println!("{id} -> {} [{}, {}, {}]", t.status, t.subject, t.predicate, t.object);
            }
        },
        Command::Build => {
            let report = engine.build_graph()?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "graph built from {} triple(s): {} node(s), {} edge(s)",
                report.built_from, report.nodes, report.edges
            );
        }
        Command::Ask {
            query,
            mode,
            no_cache,
            session,
            json,
        } => {
            let mode: AnswerMode = mode.parse()?;
            let request = AskRequest {
                session_id: session.unwrap_or_else(|| "cli".into()),
                query,
                mode,
                use_cache: !no_cache,
            };
            let response = engine.ask(&request)?;
            if json {
                print_json(&response)?;
            } else {
                println!("{}", response.answer_text);
                println!();
                println!(
                    "mode: {}  cache_hit: {}  cost: {:.2e} USD  time: {} ms",
                    response.mode, response.cache_hit, response.cost_estimate_usd, response.timing_ms
                );
                for c in &response.chunk_refs {
                    println!("  chunk {} ({:.3})", c.chunk_id, c.score);
                }
                for n in &response.node_refs {
                    println!("  node  {} ({})", n.node_id, n.display_name);
                }
            }
        }
        Command::Retrieve { query } => print_json(&engine.retrieve(&query, None)?)?,
        Command::Graph { action } => match action {
            GraphAction::Export => {
                let graph = engine.graph().ok_or(kgrag::Error::GraphNotBuilt)?;
                print_json(&graph.to_json())?;
            }
            GraphAction::Neighborhood { entity, depth } => {
                let depth: Depth = depth.parse().map_err(anyhow::Error::msg)?;
                print_json(&engine.neighborhood(&entity, depth)?)?;
            }
        },
        Command::Serve { port, host, ui_dir } => {
            let runtime = tokio::runtime::Runtime::new()?;
            let addr = SocketAddr::new(host, port);
            runtime.block_on(kgrag::service::serve(Arc::new(engine), addr, ui_dir))?;
        }
        Command::Cache { action } => match action {
            CacheAction::Flush => println!("flushed {} cache entries", engine.flush_cache()?),
        },
        Command::Health => print_json(&engine.health())?,
    }
    Ok(())
}
