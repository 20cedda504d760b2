mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::info;

use helprag_core::encoding::{
    EncodeError, Encoder, HashEncoder, OracleEncoder, RemoteEncoder, RemoteEncoderConfig,
};
use helprag_core::evaluation::{
    gen_synthetic, load_qa, parse_sweep, run_benchmark, run_sweep, sweep_table, BenchConfig,
    BenchError, SyntheticError, SyntheticParams,
};
use helprag_core::hypernode::ExpansionError;
use helprag_core::ingestion::{
    build_and_embed, extract_triples, extraction_prompt_sha256, load_corpus, load_index,
    save_index, ExtractionConfig, IngestError,
};
use helprag_core::localization::{retrieve, HybridConfig, RetrievalError};
use helprag_core::service::{ChatClient, ServiceError};
use helprag_core::ExpansionConfig;

#[derive(Parser)]
#[command(
    name = "helprag",
    version,
    about = "Hypernode path retrieval over knowledge-graph triplets"
)]
struct Cli {
    /// More log output on stderr (repeatable). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index bundle from a JSONL corpus.
    Index(IndexArgs),
    /// Retrieve context passages for one question.
    Query(QueryArgs),
    /// Run a QA set against an index, optionally sweeping parameters.
    Bench(BenchArgs),
    /// Write a synthetic multi-hop fixture (corpus, QA set, oracle table).
    GenSynthetic(GenArgs),
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// hash | oracle:<file> | remote
    #[arg(long, default_value = "hash")]
    encoder: String,
    /// Extract triples for records without them (needs HELP_LLM_URL).
    #[arg(long)]
    extract: bool,
}

#[derive(Args, Clone, Copy)]
struct RetrievalArgs {
    /// Expansion hops N.
    #[arg(long, default_value_t = 2)]
    hops: usize,
    /// Seed hypernodes n.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    /// Beam width k.
    #[arg(long, default_value_t = 50)]
    beam: usize,
    /// Context slots reserved for path-scored passages M.
    #[arg(long, default_value_t = 4)]
    quota: usize,
    /// Total context size K.
    #[arg(long, default_value_t = 5)]
    topk: usize,
}

impl RetrievalArgs {
    fn configs(&self) -> (ExpansionConfig, HybridConfig) {
        (
            ExpansionConfig {
                hops: self.hops,
                seeds: self.seeds,
                beam: self.beam,
            },
            HybridConfig {
                quota: self.quota,
                total: self.topk,
            },
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    question: String,
    /// hash | oracle:<file> | remote. Defaults to what the bundle was built with.
    #[arg(long)]
    encoder: Option<String>,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Leave timings out so output is reproducible byte for byte.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    qa: PathBuf,
    #[arg(long)]
    encoder: Option<String>,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// One report per value, e.g. `quota=0..5` or `hops=1..4`.
    #[arg(long, conflicts_with = "grid")]
    sweep: Option<String>,
    /// One report per grid point, e.g. `seeds=1..5,beam=30,50,70,100`.
    #[arg(long)]
    grid: Option<String>,
    /// Generate answers and score F1/EM (needs HELP_LLM_URL).
    #[arg(long)]
    generate: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Timed retrievals per question; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    chains: usize,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 10)]
    distractors: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Dense cutoff that gold passages must stay outside of.
    #[arg(long, default_value_t = 5)]
    check_k: usize,
}

/// An error plus the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_INPUT: u8 = 2;
const EXIT_SERVICE: u8 = 3;

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    fn context(mut self, msg: impl std::fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(msg);
        self
    }
}

fn service_code(e: &ServiceError) -> u8 {
    match e {
        ServiceError::NotConfigured(_) => EXIT_INPUT,
        _ => EXIT_SERVICE,
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let code = match &e {
            IngestError::Service(s) => service_code(s),
            IngestError::Encode(_) => EXIT_SERVICE,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        let code = match &e {
            RetrievalError::Encode(_) | RetrievalError::Expansion(ExpansionError::Encode(_)) => {
                EXIT_SERVICE
            }
            _ => EXIT_INPUT,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Retrieval { id, source } => {
                Failure::from(source).context(format!("question `{id}`"))
            }
            BenchError::Generation { ref source, .. } => Self {
                code: service_code(source),
                error: e.into(),
            },
            BenchError::Pool(_) => Failure::input(e),
        }
    }
}

fn make_encoder(spec: &str) -> Result<Box<dyn Encoder>, Failure> {
    match spec {
        "hash" => Ok(Box::new(HashEncoder::new())),
        "remote" => {
            let config = RemoteEncoderConfig::from_env()
                .map_err(|e| Failure::input(e).context("--encoder remote"))?;
            let enc = RemoteEncoder::new(config).map_err(Failure::input)?;
            Ok(Box::new(enc))
        }
        other => match other.strip_prefix("oracle:") {
            Some(path) => OracleEncoder::load(Path::new(path))
                .map(|e| Box::new(e) as Box<dyn Encoder>)
                .map_err(|e: EncodeError| {
                    Failure::input(e).context(format!("oracle table {path}"))
                }),
            None => Err(Failure::input(anyhow!(
                "unknown encoder `{other}` (expected hash, oracle:<file> or remote)"
            ))),
        },
    }
}

/// Picks the encoder for an existing bundle: the explicit flag if given,
/// otherwise the family recorded in the manifest.
fn encoder_for_bundle(flag: Option<&str>, encoder_id: &str) -> Result<Box<dyn Encoder>, Failure> {
    if let Some(spec) = flag {
        return make_encoder(spec);
    }
    if encoder_id == HashEncoder::new().id() {
        make_encoder("hash")
    } else if encoder_id.starts_with("remote-") {
        make_encoder("remote")
    } else {
        Err(Failure::input(anyhow!(
            "index was built with `{encoder_id}`; pass --encoder oracle:<file> or --encoder remote"
        )))
    }
}

fn cmd_index(args: &IndexArgs) -> Result<(), Failure> {
    let encoder = make_encoder(&args.encoder)?;
    let mut records = load_corpus(&args.corpus)?;
    let mut prompt_sha = None;
    if args.extract && records.iter().any(|r| r.triples.is_none()) {
        let client = ChatClient::from_env().map_err(|e| Failure {
            code: service_code(&e),
            error: anyhow::Error::new(e).context("--extract"),
        })?;
        records = extract_triples(records, &client, &ExtractionConfig::default())?;
        prompt_sha = Some(extraction_prompt_sha256());
    }
    let graph = build_and_embed(&records, encoder.as_ref())?;
    let manifest = save_index(&args.out, &graph, prompt_sha)?;
    info!(out = %args.out.display(), "index written");
    println!(
        "{}: {} passages, {} triplets, encoder {} (d={}), content {}",
        args.out.display(),
        manifest.passage_count,
        manifest.triplet_count,
        manifest.encoder_id,
        manifest.dimension,
        &manifest.content_sha256[..16]
    );
    Ok(())
}

fn cmd_query(args: &QueryArgs) -> Result<(), Failure> {
    let (graph, manifest) = load_index(&args.index)?;
    let encoder = encoder_for_bundle(args.encoder.as_deref(), &manifest.encoder_id)?;
    let (expansion, hybrid) = args.retrieval.configs();
    let result = retrieve(
        &graph,
        encoder.as_ref(),
        &args.question,
        &expansion,
        &hybrid,
    )?;
    let text = match args.format {
        Format::Json => output::query_json(&args.question, &graph, &result, !args.no_timings),
        Format::Text => output::query_text(&args.question, &result, !args.no_timings),
    };
    print!("{text}");
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let qa = load_qa(&args.qa).map_err(Failure::input)?;
    let (graph, manifest) = load_index(&args.index)?;
    let encoder = encoder_for_bundle(args.encoder.as_deref(), &manifest.encoder_id)?;
    let generator = if args.generate {
        Some(ChatClient::from_env().map_err(|e| Failure {
            code: service_code(&e),
            error: anyhow::Error::new(e).context("--generate"),
        })?)
    } else {
        None
    };
    let (expansion, hybrid) = args.retrieval.configs();
    let base = BenchConfig {
        expansion,
        hybrid,
        jobs: args.jobs,
        repeats: args.repeats,
    };

    let spec = match args.sweep.as_deref().or(args.grid.as_deref()) {
        Some(s) => Some(parse_sweep(s).map_err(Failure::input)?),
        None => None,
    };
    let rendered = match spec {
        None => {
            let report = run_benchmark(&graph, encoder.as_ref(), &qa, &base, generator.as_ref())?;
            match args.format {
                Format::Json => output::pretty(serde_json::to_value(&report)),
                Format::Text => output::bench_text(&report),
            }
        }
        Some(spec) => {
            let report = run_sweep(
                &graph,
                encoder.as_ref(),
                &qa,
                &base,
                &spec,
                generator.as_ref(),
            )?;
            match args.format {
                Format::Json => output::pretty(serde_json::to_value(&report)),
                Format::Text => sweep_table(&report),
            }
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::input)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_gen_synthetic(args: &GenArgs) -> Result<(), Failure> {
    let params = SyntheticParams {
        chains: args.chains,
        hops: args.hops,
        distractors: args.distractors,
        seed: args.seed,
        check_k: args.check_k,
    };
    let fixture = gen_synthetic(&params).map_err(Failure::input)?;
    fixture
        .write(&args.out)
        .map_err(|e: SyntheticError| Failure::input(e))?;
    println!(
        "{}: {} passages, {} questions",
        args.out.display(),
        fixture.corpus.len(),
        fixture.qa.len()
    );
    Ok(())
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Query(a) => cmd_query(a),
        Command::Bench(a) => cmd_bench(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
