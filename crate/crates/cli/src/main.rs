use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ctg_core::blanket::{generate_dataset, DatasetConfig, Query};
use ctg_core::evaluation::{build_report, read_jsonl, write_plots, EvalConfig, ResultRecord, SplitReport, DEFAULT_OUTLIER_PCT};
use ctg_core::extraction::{ingest, Document, ExtractionConfig};
use ctg_core::fixtures::{synthetic_world_graph, SyntheticConfig};
use ctg_core::inference::{execute, plan_inference, ChatReasoner, DeterministicReasoner, ExecuteConfig, Reasoner};
use ctg_core::llm::{backend_from_spec, ChatBackend};
use ctg_core::retrieval::{retrieve_for_document, Direction, EmbeddingBackend, HashingEmbedder, HttpEmbedder, RetrieveConfig, VectorIndex};
use ctg_core::scm::{ScmInstance, ScmOverlay};
use ctg_core::world_graph::{graph_stats, StatsConfig, WorldGraph, DEFAULT_MAX_CYCLE_LEN};
use ctg_service::{AppState, Reasoners, ServiceConfig};

#[derive(Parser)]
#[command(name = "ctg", version, about = "Multi-world causal graphs: extraction, query generation, step-wise inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract one world per document and merge it into a graph file.
    Ingest {
        /// JSONL of `{doc_id, title?, body, source?, date?, world_id?}`.
        docs: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// `live` (CTG_CHAT_URL/KEY) or `mock:<transcript.jsonl>`.
        #[arg(long)]
        backend: String,
        #[arg(long, default_value = "gpt-4o")]
        model: String,
        #[arg(long, default_value = "hash")]
        embed: String,
        /// Writes one ingest record (transcript and merge report) per document.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Structural statistics of a graph file.
    Stats {
        graph: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_CYCLE_LEN)]
        max_cycle_len: usize,
        #[arg(long)]
        json: bool,
    },
    /// Show the context retrieved for a document.
    Retrieve {
        graph: PathBuf,
        #[arg(long)]
        text_file: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, value_enum, default_value_t = Dir::Undirected)]
        direction: Dir,
        #[arg(long, default_value = "hash")]
        embed: String,
    },
    /// Generate a balanced query dataset.
    GenDataset {
        graph: PathBuf,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        path_cap: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Answer every query of a dataset.
    Infer {
        dataset: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum)]
        reasoner: ReasonerKind,
        /// SCM overlay JSON; required by `det`.
        #[arg(long)]
        scm: Option<PathBuf>,
        /// Chat backend for `chat`: `live` or `mock:<file>`.
        #[arg(long, default_value = "live")]
        backend: String,
        #[arg(long, default_value = "gpt-4o")]
        model: String,
        #[arg(long, default_value_t = 5)]
        max_retries: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write each full result with its per-step trace.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Score a results file against its dataset.
    Eval {
        results: PathBuf,
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OUTLIER_PCT)]
        outlier_pct: f64,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        plots: Option<PathBuf>,
        #[arg(long, default_value = "hash")]
        embed: String,
    },
    /// Serve the HTTP API over one graph.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        graph: PathBuf,
        /// SCM overlay enabling the `deterministic` reasoner.
        #[arg(long)]
        scm: Option<PathBuf>,
        /// Chat backend enabling the `chat` reasoner: `live` or `mock:<file>`.
        #[arg(long)]
        chat: Option<String>,
        #[arg(long, default_value = "gpt-4o")]
        model: String,
        #[arg(long, default_value_t = 1)]
        max_jobs: usize,
    },
    /// Write a seeded synthetic graph and its SCM overlay.
    Synth {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        scm: PathBuf,
        #[arg(long, default_value_t = 60)]
        nodes: usize,
        #[arg(long, default_value_t = 12)]
        worlds: usize,
        #[arg(long, default_value_t = 0.7)]
        observed: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Undirected,
    Forward,
    Backward,
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Self {
        match d {
            Dir::Undirected => Direction::Undirected,
            Dir::Forward => Direction::Forward,
            Dir::Backward => Direction::Backward,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReasonerKind {
    Det,
    Chat,
}

/// `hash`, `hash:<dim>` or `live[:<model>]`.
fn embedder(spec: &str) -> Result<Box<dyn EmbeddingBackend>> {
    let (kind, arg) = spec.split_once(':').map_or((spec, None), |(k, a)| (k, Some(a)));
    match kind {
        "hash" => {
            let dim = arg.map(str::parse).transpose().context("embedding dimension")?.unwrap_or(256);
            Ok(Box::new(HashingEmbedder::new(dim)))
        }
        "live" => HttpEmbedder::from_env(arg.unwrap_or("text-embedding-3-small"))
            .map(|e| Box::new(e) as Box<dyn EmbeddingBackend>)
            .context("CTG_EMBED_URL is not set"),
        other => bail!("unknown embedding backend `{other}` (expected `hash[:dim]` or `live[:model]`)"),
    }
}

fn load_graph(path: &Path) -> Result<WorldGraph> {
    WorldGraph::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_scm(path: &Path, graph: &WorldGraph) -> Result<ScmInstance> {
    let overlay = ScmOverlay::load(path).with_context(|| format!("loading {}", path.display()))?;
    overlay.build_for_graph(graph).with_context(|| format!("checking {} against the graph", path.display()))
}

fn chat_backend(spec: &str, model: &str) -> Result<Arc<dyn ChatBackend>> {
    Ok(Arc::from(backend_from_spec(spec, model)?))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_ingest(docs: &Path, graph_path: &Path, backend: &str, model: &str, embed: &str, transcripts: Option<&Path>) -> Result<()> {
    let docs: Vec<Document> = read_jsonl(docs)?;
    let mut graph = if graph_path.exists() { load_graph(graph_path)? } else { WorldGraph::new() };
    let embedder = embedder(embed)?;
    let mut index = VectorIndex::new(embedder.model_tag());
    index.index_graph(embedder.as_ref(), &graph)?;
    let chat = backend_from_spec(backend, model)?;
    let records = ingest(&docs, &mut graph, &mut index, embedder.as_ref(), chat.as_ref(), &ExtractionConfig::default());
    graph.save(graph_path)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    for r in &records {
        match (&r.report, &r.error) {
            (_, Some(e)) => eprintln!("{} -> {}: failed: {e}", r.doc_id, r.world_id),
            (Some(rep), None) => println!(
                "{} -> {}: {} new nodes, {} matched, {} new edges, {} skipped",
                r.doc_id, r.world_id, rep.new_nodes, rep.matched_nodes, rep.new_edges, rep.skipped_edges
            ),
            (None, None) => {}
        }
    }
    if let Some(path) = transcripts {
        write_jsonl(path, &records)?;
    }
    println!("{} documents, {failed} failed; graph has {} nodes and {} edges", records.len(), graph.node_count(), graph.edge_count());
    Ok(())
}

fn cmd_stats(path: &Path, max_cycle_len: usize, json: bool) -> Result<()> {
    let graph = load_graph(path)?;
    let s = graph_stats(&graph, StatsConfig { max_cycle_len });
    if json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    println!("nodes            {}", s.node_count);
    println!("edges            {}", s.edge_count);
    println!("density          {:.6}", s.density);
    println!("worlds           {}", s.world_count);
    println!("largest weak cc  {}", s.largest_weak_component);
    println!("weak cc by size  {:?}", s.weakly_connected_components);
    println!("strong cc by size {:?}", s.strongly_connected_components);
    println!("cycles (len<={}) {:?}", s.max_cycle_len, s.cycle_count_by_length);
    println!("bridge nodes     {}", s.bridge_nodes.len());
    Ok(())
}

fn cmd_retrieve(path: &Path, text_file: &Path, config: RetrieveConfig, embed: &str) -> Result<()> {
    let graph = load_graph(path)?;
    let text = fs::read_to_string(text_file).with_context(|| format!("reading {}", text_file.display()))?;
    let embedder = embedder(embed)?;
    let mut index = VectorIndex::new(embedder.model_tag());
    index.index_graph(embedder.as_ref(), &graph)?;
    let ctx = retrieve_for_document(&graph, &index, embedder.as_ref(), &text, &config)?;
    for (id, score) in &ctx.seeds {
        println!("seed {id} {score:.6}");
    }
    print!("{}", ctx.render());
    Ok(())
}

fn cmd_gen_dataset(path: &Path, config: DatasetConfig, output: &Path) -> Result<()> {
    let graph = load_graph(path)?;
    let outcome = generate_dataset(&graph, &config)?;
    fs::write(output, outcome.to_jsonl()).with_context(|| format!("writing {}", output.display()))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} queries written ({} observation / {} counterfactual candidates)",
        outcome.queries.len(),
        outcome.observation_candidates,
        outcome.counterfactual_candidates
    );
    Ok(())
}

fn cmd_infer(dataset: &Path, reasoner: &dyn Reasoner, max_retries: usize, output: &Path, traces: Option<&Path>) -> Result<()> {
    let queries: Vec<Query> = read_jsonl(dataset)?;
    let cfg = ExecuteConfig { max_retries };
    let mut records = Vec::with_capacity(queries.len());
    let mut full = Vec::new();
    for q in &queries {
        let outcome = plan_inference(q).and_then(|plan| execute(&plan, q, reasoner, &cfg));
        match outcome {
            Ok(r) => {
                records.push(ResultRecord::from_result(&r));
                full.push(serde_json::to_value(&r)?);
            }
            Err(e) => {
                tracing::warn!(query = %q.id, error = %e, "inference failed");
                records.push(ResultRecord::failure(&q.id, e.to_string()));
                full.push(serde_json::json!({ "query_id": q.id, "error": e.to_string() }));
            }
        }
    }
    write_jsonl(output, &records)?;
    if let Some(path) = traces {
        write_jsonl(path, &full)?;
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!("{} queries, {failed} failed", records.len());
    Ok(())
}

fn print_split(name: &str, s: &SplitReport) {
    let mut line = format!("{name:<15} n={:<4} failed={:<3}", s.count, s.failed);
    if s.counts.boolean > 0 {
        line += &format!(" bool_acc={:.3}", s.bool_accuracy);
    }
    if s.counts.trend > 0 {
        line += &format!(" trend_acc={:.3}", s.trend_accuracy);
    }
    if s.numeric.scored > 0 {
        line += &format!(" median_rel_err={:.2}% outliers={:.3}", s.numeric.median_relative_error, s.numeric.outlier_fraction);
    }
    if s.text.scored > 0 {
        line += &format!(" text_sim={:.3} bleu={:.3}", s.text.mean_similarity, s.text.mean_bleu);
    }
    println!("{line} steps={:.2}", s.efficiency.mean_steps);
}

fn cmd_eval(results: &Path, dataset: &Path, outlier_pct: f64, report: Option<&Path>, plots: Option<&Path>, embed: &str) -> Result<()> {
    let results: Vec<ResultRecord> = read_jsonl(results)?;
    let dataset: Vec<Query> = read_jsonl(dataset)?;
    let embedder = embedder(embed)?;
    let eval = build_report(&results, &dataset, embedder.as_ref(), &EvalConfig { outlier_pct })?;
    print_split("overall", &eval.report.overall);
    print_split("observation", &eval.report.observation);
    print_split("counterfactual", &eval.report.counterfactual);
    if let Some(path) = report {
        fs::write(path, serde_json::to_string_pretty(&eval)? + "\n")?;
    }
    if let Some(dir) = plots {
        fs::create_dir_all(dir)?;
        for p in write_plots(&eval, dir)? {
            println!("wrote {p}");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_serve(host: &str, port: u16, graph: &Path, scm: Option<&Path>, chat: Option<&str>, model: &str, max_jobs: usize) -> Result<()> {
    let graph = load_graph(graph)?;
    let mut reasoners = Reasoners::new();
    if let Some(path) = scm {
        reasoners = reasoners.with_scm(load_scm(path, &graph)?);
    }
    if let Some(spec) = chat {
        reasoners = reasoners.with_chat(chat_backend(spec, model)?);
    }
    let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
    let state = AppState::new(Some(graph), reasoners, ServiceConfig { max_concurrent_jobs: max_jobs, ..Default::default() });
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(ctg_service::serve(state, addr))?;
    Ok(())
}

fn cmd_synth(graph: &Path, scm: &Path, config: SyntheticConfig) -> Result<()> {
    let (g, instance) = synthetic_world_graph(&config);
    g.save(graph)?;
    fs::write(scm, instance.to_overlay().to_json_string())?;
    println!("{} nodes, {} edges, {} worlds", g.node_count(), g.edge_count(), g.worlds().len());
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("CTG_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest { docs, graph, backend, model, embed, transcripts } => {
            cmd_ingest(&docs, &graph, &backend, &model, &embed, transcripts.as_deref())
        }
        Command::Stats { graph, max_cycle_len, json } => cmd_stats(&graph, max_cycle_len, json),
        Command::Retrieve { graph, text_file, k, p, direction, embed } => {
            cmd_retrieve(&graph, &text_file, RetrieveConfig { k, p, direction: direction.into() }, &embed)
        }
        Command::GenDataset { graph, n, k, path_cap, seed, output } => {
            cmd_gen_dataset(&graph, DatasetConfig { n_samples: n, k, path_cap, seed }, &output)
        }
        Command::Infer { dataset, graph, reasoner, scm, backend, model, max_retries, output, traces } => {
            let reasoner: Box<dyn Reasoner> = match reasoner {
                ReasonerKind::Det => {
                    let Some(scm) = scm else { bail!("`--reasoner det` needs `--scm overlay.json`") };
                    Box::new(DeterministicReasoner::new(load_scm(&scm, &load_graph(&graph)?)?))
                }
                ReasonerKind::Chat => Box::new(ChatReasoner::new(chat_backend(&backend, &model)?)),
            };
            cmd_infer(&dataset, reasoner.as_ref(), max_retries, &output, traces.as_deref())
        }
        Command::Eval { results, dataset, outlier_pct, report, plots, embed } => {
            cmd_eval(&results, &dataset, outlier_pct, report.as_deref(), plots.as_deref(), &embed)
        }
        Command::Serve { port, host, graph, scm, chat, model, max_jobs } => {
            cmd_serve(&host, port, &graph, scm.as_deref(), chat.as_deref(), &model, max_jobs)
        }
        Command::Synth { graph, scm, nodes, worlds, observed, seed } => cmd_synth(
            &graph,
            &scm,
            SyntheticConfig { n_nodes: nodes, n_worlds: worlds, observed_fraction: observed, seed, ..Default::default() },
        ),
    }
}
