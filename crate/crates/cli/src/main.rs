//! `affectrec`: preprocessing, index building, ad hoc recommendation,
//! evaluation and export run in-process; `serve` hosts the session service
//! and `session` talks to a running one.

mod offline;
mod remote;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use affectrec_client::ClientError;
use affectrec_core::engine::{Engine, SalieriMetric};
use affectrec_core::session::MoodPhase;
use affectrec_core::{Error, ErrorClass};

#[derive(Debug, Parser)]
#[command(
    name = "affectrec",
    version,
    about = "Affect-aware music to painting recommendation"
)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic clustered catalog as two JSONL feature files.
    Synth(SynthArgs),
    /// Train encoders and the projection head; write an embedding bundle.
    Preprocess(PreprocessArgs),
    /// Build engine similarity indices.
    BuildIndex(BuildIndexArgs),
    /// Rank paintings for a ratings file against one index.
    Recommend(RecommendArgs),
    /// Offline evaluation reports.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Dump indices or logged sessions.
    #[command(subcommand)]
    Export(ExportCommand),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Drive a session on a running service.
    Session(SessionArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    music_count: usize,
    #[arg(long, default_value_t = 200)]
    painting_count: usize,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 64)]
    music_dim: usize,
    #[arg(long, default_value_t = 64)]
    painting_dim: usize,
    /// Directory for music.jsonl and paintings.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CatalogArgs {
    #[arg(long)]
    music: PathBuf,
    #[arg(long)]
    paintings: PathBuf,
    /// Word to valence/arousal lexicon for emotion-labelled records.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    margin: f64,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Autoencoder layer sizes after the input, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1024, 512, 256])]
    dims: Vec<usize>,
    /// Projection head layer sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [256, 128])]
    projection_dims: Vec<usize>,
    /// Bundle directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Mozart,
    Haydn,
    Salieri,
    Visual,
    All,
}

impl EngineArg {
    fn expand(args: &[EngineArg]) -> Vec<Engine> {
        let mut out = Vec::new();
        for a in args {
            let add: &[Engine] = match a {
                EngineArg::Mozart => &[Engine::Mozart],
                EngineArg::Haydn => &[Engine::Haydn],
                EngineArg::Salieri => &[Engine::Salieri],
                EngineArg::Visual => &[Engine::Visual],
                EngineArg::All => &Engine::ALL,
            };
            for e in add {
                if !out.contains(e) {
                    out.push(*e);
                }
            }
        }
        out
    }
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    engine: Vec<EngineArg>,
    /// Preprocessed bundle; required for every engine but haydn.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Catalogs for building haydn without a bundle.
    #[arg(long, requires = "paintings")]
    music: Option<PathBuf>,
    #[arg(long, requires = "music")]
    paintings: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "cosine")]
    salieri_metric: SalieriMetric,
    /// Also write the matrix as CSV (single engine only; `-` for stdout).
    #[arg(long)]
    dump_csv: Option<PathBuf>,
    /// Directory receiving `<engine>.afix`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RatingSource {
    /// JSON file: an array of {item_id, rating, is_attention_check?} or an
    /// object with a `ratings` array.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Inline rating `ID=1..5`; repeatable.
    #[arg(long = "rate", value_name = "ID=RATING")]
    rate: Vec<String>,
}

#[derive(Debug, Args)]
struct CurationArgs {
    /// Catalogs used to restrict results to curated paintings.
    #[arg(long, requires = "paintings")]
    music: Option<PathBuf>,
    #[arg(long, requires = "music")]
    paintings: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Reviewer allowlist of painting ids (needs the catalogs).
    #[arg(long, requires = "paintings")]
    allowlist: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    ratings: RatingSource,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[command(flatten)]
    curation: CurationArgs,
}

#[derive(Debug, Subcommand)]
enum EvaluateCommand {
    /// Compare the full rankings two indices give for the same ratings.
    Overlap(OverlapArgs),
    /// Cluster retrieval accuracy of an index, optionally against shuffled copies.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
struct OverlapArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    ratings: RatingSource,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    index: PathBuf,
    /// Tab-separated `id<TAB>label` file.
    #[arg(long, conflicts_with = "music")]
    labels: Option<PathBuf>,
    /// Catalogs whose metadata carry the label.
    #[arg(long, requires = "paintings")]
    music: Option<PathBuf>,
    #[arg(long, requires = "music")]
    paintings: Option<PathBuf>,
    #[arg(long, default_value = "cluster")]
    label_key: String,
    /// Also probe this many shuffled copies of the index.
    #[arg(long, default_value_t = 0)]
    null_seeds: usize,
}

#[derive(Debug, Subcommand)]
enum ExportCommand {
    /// Index matrix as CSV.
    Index {
        #[arg(long)]
        index: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sessions reconstructed from an event log, one JSON object per line.
    Sessions {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "AFFECTREC_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, env = "AFFECTREC_INDEX_DIR")]
    index_dir: PathBuf,
    #[arg(
        long,
        env = "AFFECTREC_ENGINES",
        value_enum,
        value_delimiter = ',',
        default_value = "all"
    )]
    engine: Vec<EngineArg>,
    #[arg(long, env = "AFFECTREC_MUSIC")]
    music: PathBuf,
    #[arg(long, env = "AFFECTREC_PAINTINGS")]
    paintings: PathBuf,
    #[arg(long, env = "AFFECTREC_LEXICON")]
    lexicon: Option<PathBuf>,
    #[arg(long, env = "AFFECTREC_ALLOWLIST")]
    allowlist: Option<PathBuf>,
    #[arg(long, env = "AFFECTREC_LOG", default_value = "events.jsonl")]
    log: PathBuf,
    #[arg(long, env = "AFFECTREC_ATTENTION_MUSIC_ASSET")]
    attention_music_asset: Option<String>,
    #[arg(long, env = "AFFECTREC_ATTENTION_PAINTING_ASSET")]
    attention_painting_asset: Option<String>,
}

#[derive(Debug, Args)]
struct SessionArgs {
    #[arg(long, env = "AFFECTREC_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    command: SessionCommand,
}

#[derive(Debug, Subcommand)]
enum SessionCommand {
    Health,
    Create {
        #[arg(long, value_enum)]
        engine: EngineArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    Show {
        id: String,
    },
    Items {
        id: String,
    },
    Rate {
        id: String,
        #[command(flatten)]
        ratings: RatingSource,
    },
    Recommend {
        id: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
    },
    Mood {
        id: String,
        #[arg(long, value_enum)]
        phase: PhaseArg,
        #[arg(long)]
        category: String,
        /// PANAS short-form item scores, comma separated.
        #[arg(long, value_delimiter = ',')]
        panas: Option<Vec<u8>>,
    },
    Reflect {
        id: String,
        #[arg(long)]
        painting: String,
        #[arg(long)]
        text: String,
        #[arg(long)]
        aspects: Option<String>,
    },
    /// Quality ratings as `metric=score`; repeatable.
    Feedback {
        id: String,
        #[arg(long = "score", value_name = "METRIC=SCORE", required = true)]
        scores: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PhaseArg {
    Pre,
    Post,
}

impl From<PhaseArg> for MoodPhase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Pre => MoodPhase::Pre,
            PhaseArg::Post => MoodPhase::Post,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Client(ClientError),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Client(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Client(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let class = match self {
            CliError::Core(e) => e.class(),
            CliError::Usage(_) => ErrorClass::Input,
            CliError::Client(e) => match e.status().map(|s| s.as_u16()) {
                Some(400) => ErrorClass::Input,
                Some(s) if s < 500 => ErrorClass::Domain,
                _ if e.code() == Some("integrity") => ErrorClass::Integrity,
                _ => return 1,
            },
        };
        match class {
            ErrorClass::Input => 2,
            ErrorClass::Domain => 3,
            ErrorClass::Integrity => 4,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Prints `value` as pretty JSON, or `text` otherwise.
pub fn emit<T: serde::Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("serializable output")
        );
    } else {
        let t = text();
        print!("{t}");
        if !t.ends_with('\n') {
            println!();
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let json = cli.json;
    match cli.command {
        Command::Synth(a) => offline::synth(a, json),
        Command::Preprocess(a) => offline::preprocess(a, json),
        Command::BuildIndex(a) => offline::build_index(a, json),
        Command::Recommend(a) => offline::recommend(a, json),
        Command::Evaluate(EvaluateCommand::Overlap(a)) => offline::overlap(a, json),
        Command::Evaluate(EvaluateCommand::Probe(a)) => offline::probe(a, json),
        Command::Export(c) => offline::export(c),
        Command::Serve(a) => remote::serve(a),
        Command::Session(a) => remote::session(a, json),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("AFFECTREC_LOG_LEVEL")
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
