//! Command-line front end. Each expensive stage is its own subcommand so
//! runs can be cached and resumed: extract writes the LLM dump, index
//! persists the graph and embeddings, query and eval work against the
//! stored index. One JSON config drives everything; flags override single
//! fields. Exit codes: 0 success, 1 usage or config error, 2 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hippograph::corpus::Corpus;
use hippograph::error::Error;
use hippograph::graph::load_index;
use hippograph::pipeline;
use hippograph::retrieval::{retrieve, DiagnosticsRecord, QueryBackends, RankMode};
use hippograph::{Result, RunConfig};

#[derive(Parser)]
#[command(name = "hippograph", version, about = "Graph-based passage retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run entity and triple extraction over the corpus and write the dump.
    Extract {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build and persist the index: graph, embeddings, synonym edges.
    Index {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Ask one question against the index and print ranked passages.
    Query {
        /// The question text.
        question: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the query file through retrieval and write metric reports.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Report directory; defaults to eval/ inside the index directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print statistics for a persisted index.
    Stats {
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Flag-level overrides applied on top of the config file. Only knobs
/// worth flipping per run get flags; everything else stays in the file.
#[derive(Args)]
struct Overrides {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Passage corpus (JSON Lines).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Query file (JSON Lines).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Directory holding the persisted index.
    #[arg(long)]
    index_dir: Option<PathBuf>,
    /// Node scoring mode: ppr, query-nodes-only, nodes-and-neighbors.
    #[arg(long)]
    mode: Option<RankMode>,
    /// Walk continuation probability, in (0,1).
    #[arg(long)]
    damping: Option<f64>,
    /// Synonym edge similarity threshold, in (0,1].
    #[arg(long)]
    tau: Option<f64>,
    /// Ensemble trigger threshold on the weakest link score, in (0,1].
    #[arg(long)]
    theta: Option<f64>,
    /// Cutoffs for recall metrics, comma-separated and ascending.
    #[arg(long, value_delimiter = ',')]
    top_k: Option<Vec<usize>>,
    /// Worker threads for eval.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Fixture file with recorded extraction responses.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Drop node specificity weighting from the personalization vector.
    #[arg(long)]
    no_specificity: bool,
    /// Leave synonym edges out of the walk.
    #[arg(long)]
    no_synonymy: bool,
    /// Average graph scores with the dense scorer on weak entity links.
    #[arg(long)]
    ensemble: bool,
}

impl Overrides {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.corpus {
            config.corpus = Some(v);
        }
        if let Some(v) = self.queries {
            config.queries = Some(v);
        }
        if let Some(v) = self.index_dir {
            config.index_dir = Some(v);
        }
        if let Some(v) = self.mode {
            config.mode = v;
        }
        if let Some(v) = self.damping {
            config.damping = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.theta {
            config.theta = v;
        }
        if let Some(v) = self.top_k {
            config.top_k = v;
        }
        if let Some(v) = self.parallelism {
            config.parallelism = v;
        }
        if let Some(v) = self.fixtures {
            config.extraction.fixtures = Some(v);
        }
        if self.no_specificity {
            config.use_specificity = false;
        }
        if self.no_synonymy {
            config.use_synonymy = false;
        }
        if self.ensemble {
            config.ensemble = true;
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests come through as errors too, but
            // are successful runs.
            let ok = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Config(_) | Error::Invalid(_) => 1,
                _ => 2,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract { overrides } => cmd_extract(&overrides.into_config()?),
        Command::Index { overrides } => cmd_index(&overrides.into_config()?),
        Command::Query { question, overrides } => cmd_query(&overrides.into_config()?, &question),
        Command::Eval { overrides, out } => cmd_eval(&overrides.into_config()?, out),
        Command::Stats { overrides } => cmd_stats(&overrides.into_config()?),
    }
}

fn cmd_extract(config: &RunConfig) -> Result<()> {
    let corpus = Corpus::load(config.corpus_path()?)?;
    let extractor = pipeline::build_extractor(config)?;
    let extractions = pipeline::ensure_extractions(config, &corpus, &extractor)?;
    println!(
        "extracted {} passages -> {}",
        extractions.len(),
        config.extractions_path()?.display()
    );
    Ok(())
}

fn cmd_index(config: &RunConfig) -> Result<()> {
    let index = pipeline::ensure_index(config)?;
    let stats = index.graph().stats();
    println!(
        "index at {}: {} nodes, {} triples, {} synonym edges, {} passages",
        config.index_dir_path()?.display(),
        stats.unique_nodes,
        stats.unique_triples,
        stats.synonym_edge_count,
        index.corpus().len()
    );
    Ok(())
}

fn cmd_query(config: &RunConfig, question: &str) -> Result<()> {
    let index = pipeline::ensure_index(config)?;
    let extractor = pipeline::build_extractor(config)?;
    let embedder = pipeline::build_embedder(config)?;
    let dense = pipeline::build_dense(config);
    let backends = QueryBackends {
        extractor: &extractor,
        embedder: &embedder,
        dense: dense.as_deref(),
    };
    let options = pipeline::retrieve_options(config);
    let result = retrieve(question, &index, &backends, &options)?;

    let top_n = config.top_k.last().copied().unwrap_or(5);
    let record = DiagnosticsRecord::new("query", &result, &index, top_n);
    if record.entities.is_empty() {
        println!("entities: (none)");
    } else {
        println!("entities: {}", record.entities.join(", "));
    }
    for link in &record.links {
        println!("  {} -> {} ({:.4})", link.entity, link.node, link.score);
    }
    println!(
        "fallback: {}, iterations: {}, converged: {}",
        record.fallback, record.iterations, result.diagnostics.converged
    );
    if record.top.is_empty() {
        println!("no passages scored above zero");
    }
    for (rank, scored) in record.top.iter().enumerate() {
        println!("{:>3}. {:<28} {:.6}", rank + 1, scored.passage_id, scored.score);
    }
    Ok(())
}

fn cmd_eval(config: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out_dir = match out {
        Some(dir) => dir,
        None => config.index_dir_path()?.join("eval"),
    };
    let (_, table) = hippograph::eval::run_eval(config, &out_dir)?;
    print!("{table}");
    println!("reports written to {}", out_dir.display());
    Ok(())
}

fn cmd_stats(config: &RunConfig) -> Result<()> {
    let loaded = load_index(config.index_dir_path()?)?;
    let stats = loaded.graph.stats();
    println!("nodes:            {}", stats.unique_nodes);
    println!("relation labels:  {}", stats.unique_relation_labels);
    println!("distinct triples: {}", stats.unique_triples);
    println!("synonym edges:    {}", stats.synonym_edge_count);
    println!("passages:         {}", loaded.corpus.len());
    println!("tau:              {}", loaded.tau);
    Ok(())
}
