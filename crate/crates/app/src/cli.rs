use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use currikg::error::{MetricsError, ProjectError};
use currikg::extract::ConceptKind;
use currikg::metrics::{create_detector, structure_report, AdcConvention, DEFAULT_DETECTOR};
use currikg::ontology::KnowledgeGraph;
use currikg::project::{Project, ProjectConfig};
use currikg::provider::{request_key, OnMissingFixture};
use currikg::review::{Aspect, Decision, EditPolicy, MissingEntry, Verdict};

use crate::server::{self, AppState, ServeError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_ENV: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "currikg", version, about = "Build and review curriculum knowledge graphs")]
pub struct Cli {
    /// Project directory.
    #[arg(long, short = 'p', global = true, env = "CURRIKG_PROJECT", default_value = ".")]
    pub project: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a new project directory.
    Init(InitArgs),
    /// Load a session manifest and its materials.
    Ingest { manifest: PathBuf },
    /// Extract candidate topics and sub-topics with the chat provider.
    Extract {
        #[arg(long)]
        session: Option<String>,
        /// Print the request keys instead of calling the provider.
        #[arg(long)]
        dry_run: bool,
    },
    /// Record a review decision.
    Decide(DecideArgs),
    /// Report a concept that extraction missed (used for recall).
    Missing {
        #[arg(long)]
        session: String,
        #[arg(long, value_parser = parse_kind)]
        kind: ConceptKind,
        #[arg(long)]
        title: String,
        #[arg(long)]
        parent: Option<String>,
    },
    /// Write accepted candidates into the graph.
    Promote,
    /// Propose SIMILAR_TO relations between modules.
    Link {
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Draw a reproducible review sample of proposed relations.
    SampleRelations {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Structure metrics before/after linking, or extraction metrics.
    Metrics(MetricsArgs),
    /// Print the graph export document.
    Export {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Serve the review API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Allow POST /api/runs to start pipeline stages.
        #[arg(long)]
        allow_runs: bool,
    },
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Chat provider: `http` or `mock`.
    #[arg(long, default_value = "http")]
    pub chat_provider: String,
    /// Fixture directory for the mock chat provider, relative to the project.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Reply with the prompt instead of failing when a mock fixture is missing.
    #[arg(long)]
    pub echo_missing: bool,
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    /// Candidate or relation id.
    #[arg(required_unless_present = "accept_all")]
    pub id: Option<String>,
    #[arg(value_parser = parse_verdict, required_unless_present = "accept_all")]
    pub verdict: Option<Verdict>,
    /// Accept every pending candidate.
    #[arg(long, conflicts_with_all = ["id", "verdict"])]
    pub accept_all: bool,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub description: Option<String>,
    #[arg(long)]
    pub parent: Option<String>,
    /// Judge only the description of the candidate.
    #[arg(long)]
    pub description_only: bool,
    #[arg(long = "override")]
    pub override_previous: bool,
    #[arg(long, default_value = "cli")]
    pub reviewer: String,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Graph before linking; requires --after.
    #[arg(long, requires = "after")]
    pub before: Option<PathBuf>,
    #[arg(long, requires = "before")]
    pub after: Option<PathBuf>,
    #[arg(long, value_parser = parse_convention)]
    pub convention: Option<AdcConvention>,
    #[arg(long)]
    pub detector: Option<String>,
    /// Report extraction precision/recall/F1 instead.
    #[arg(long, conflicts_with_all = ["before", "after"])]
    pub extraction: bool,
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<EditPolicy>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

fn parse_verdict(s: &str) -> Result<Verdict, String> {
    s.parse()
}

fn parse_policy(s: &str) -> Result<EditPolicy, String> {
    s.parse()
}

fn parse_convention(s: &str) -> Result<AdcConvention, String> {
    s.parse().map_err(|e: MetricsError| e.to_string())
}

fn parse_kind(s: &str) -> Result<ConceptKind, String> {
    match s {
        "Topic" | "topic" => Ok(ConceptKind::Topic),
        "SubTopic" | "subtopic" | "sub-topic" => Ok(ConceptKind::SubTopic),
        _ => Err(format!("unknown kind {s:?} (expected Topic or SubTopic)")),
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Project(e) if e.is_environmental() => EXIT_ENV,
            CliError::Project(_) | CliError::Usage(_) => EXIT_USER,
            CliError::Serve(_) | CliError::Io { .. } => EXIT_ENV,
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &mut dyn Write, text: impl AsRef<str>) -> Result<(), CliError> {
    out.write_all(text.as_ref().as_bytes()).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn read_graph(path: &Path) -> Result<KnowledgeGraph, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    KnowledgeGraph::import(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let root = cli.project;
    match cli.command {
        Command::Init(args) => {
            let mut config = ProjectConfig::default();
            config.chat.provider = args.chat_provider;
            config.chat.fixture_dir = args.fixtures;
            if args.echo_missing {
                config.chat.on_missing = OnMissingFixture::Echo;
            }
            if let Some(model) = args.model {
                config.chat.model = model;
            }
            Project::init(&root, config)?;
            emit(out, format!("initialized project in {}\n", root.display()))
        }
        Command::Ingest { manifest } => {
            let report = Project::open(&root)?.ingest(&manifest)?;
            for path in &report.empty_materials {
                tracing::warn!(%path, "material is empty");
            }
            emit(
                out,
                format!(
                    "ingested module {}: {} materials, {} nodes and {} edges added\n",
                    report.module_id, report.materials, report.nodes_created, report.edges_created
                ),
            )
        }
        Command::Extract { session, dry_run } => {
            let project = Project::open(&root)?;
            if dry_run {
                let (requests, _, _) = project.plan_extraction(session.as_deref())?;
                let mut text = String::new();
                for r in &requests {
                    text.push_str(&format!(
                        "{}\t{}\t{}\n",
                        request_key(&r.request),
                        r.session_id,
                        r.chunk_index
                    ));
                }
                return emit(out, text);
            }
            let report = project.extract(session.as_deref())?;
            let mut text = format!(
                "extracted {} sessions with {} requests: {} new candidates\n",
                report.sessions.len(),
                report.requests,
                report.candidates_added
            );
            if !report.skipped_sessions.is_empty() {
                text.push_str(&format!(
                    "skipped (already extracted or empty): {}\n",
                    report.skipped_sessions.join(", ")
                ));
            }
            emit(out, text)
        }
        Command::Decide(args) => decide(&root, args, out),
        Command::Missing {
            session,
            kind,
            title,
            parent,
        } => {
            let project = Project::open(&root)?;
            let mut store = project.store()?;
            store
                .add_missing(MissingEntry {
                    session_id: session,
                    kind,
                    title,
                    parent,
                })
                .map_err(ProjectError::from)?;
            emit(out, "recorded missing entry\n")
        }
        Command::Promote => {
            let report = Project::open(&root)?.promote()?;
            let mut text = String::new();
            for s in &report.sessions {
                text.push_str(&format!(
                    "{}: {} nodes, {} edges created\n",
                    s.session_id, s.nodes_created, s.edges_created
                ));
            }
            text.push_str(&format!(
                "relations: {} validated, {} removed\n",
                report.relations_validated, report.relations_removed
            ));
            emit(out, text)
        }
        Command::Link { threshold } => {
            let report = Project::open(&root)?.link(threshold)?;
            emit(
                out,
                format!(
                    "threshold {}: {} relations proposed, {} edges added\n{}",
                    report.threshold,
                    report.proposed,
                    report.edges_added,
                    report.structure.render_table()
                ),
            )
        }
        Command::SampleRelations { seed, fraction } => {
            let sample = Project::open(&root)?.sample(seed, fraction)?;
            emit(out, json_line(&sample))
        }
        Command::Metrics(args) => metrics(&root, args, out),
        Command::Export { output } => {
            let bytes = Project::open(&root)?.load_graph()?.export();
            match output {
                Some(path) => fs::write(&path, bytes).map_err(|source| CliError::Io { path, source }),
                None => out.write_all(&bytes).map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                }),
            }
        }
        Command::Serve { port, host, allow_runs } => {
            let project = Project::open(&root)?;
            let state = Arc::new(AppState::new(project, allow_runs)?);
            let runtime = tokio::runtime::Runtime::new().map_err(ServeError::Io)?;
            runtime.block_on(async move {
                let listener = server::bind(SocketAddr::new(host, port)).await?;
                tracing::info!(addr = %listener.local_addr()?, "serving");
                server::serve(listener, state, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
            })?;
            Ok(())
        }
    }
}

fn decide(root: &Path, args: DecideArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let project = Project::open(root)?;
    if args.accept_all {
        let n = project.accept_all(&args.reviewer)?;
        return emit(out, format!("accepted {n} pending candidates\n"));
    }
    let (Some(id), Some(verdict)) = (args.id, args.verdict) else {
        return Err(CliError::Usage("decide needs an id and a verdict".into()));
    };
    let mut d = Decision::new(id, verdict, args.reviewer);
    d.edited_title = args.title;
    d.edited_description = args.description;
    d.edited_parent = args.parent;
    d.override_previous = args.override_previous;
    if args.description_only {
        d.aspect = Aspect::Description;
    }
    let reviewed = project.decide(d)?;
    emit(out, json_line(&reviewed))
}

fn metrics(root: &Path, args: MetricsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.extraction {
        let m = Project::open(root)?.extraction_metrics(args.policy)?;
        if args.json {
            return emit(out, json_line(&m));
        }
        let mut text = format!("{:<12} {:>9} {:>9} {:>9}\n", "kind", "precision", "recall", "f1");
        for (kind, k) in &m.kinds {
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
            text.push_str(&format!(
                "{:<12} {:>9.2} {:>9} {:>9}\n",
                kind.as_str(),
                k.precision,
                opt(k.recall),
                opt(k.f1)
            ));
        }
        return emit(out, text);
    }
    let report = match (args.before, args.after) {
        (Some(before), Some(after)) => {
            // Works without a project; project settings apply when one exists.
            let config = Project::open(root)
                .map(|p| p.config().metrics.clone())
                .unwrap_or_default();
            let convention = args.convention.unwrap_or(config.adc_convention);
            let name = args.detector.as_deref().unwrap_or(if config.detector.is_empty() {
                DEFAULT_DETECTOR
            } else {
                &config.detector
            });
            let detector = create_detector(name).map_err(ProjectError::from)?;
            structure_report(
                &read_graph(&before)?,
                &read_graph(&after)?,
                convention,
                detector.as_ref(),
                config.seed,
            )
            .map_err(ProjectError::from)?
        }
        _ => {
            let mut project = Project::open(root)?;
            if let Some(c) = args.convention {
                project.config_mut().metrics.adc_convention = c;
            }
            if let Some(d) = args.detector {
                project.config_mut().metrics.detector = d;
            }
            project.structure_metrics()?
        }
    };
    if args.json {
        return emit(out, json_line(&report));
    }
    emit(
        out,
        format!(
            "ADC {:.4} -> {:.4}, modularity {:.4} -> {:.4}\n{}",
            report.adc_before,
            report.adc_after,
            report.modularity_before,
            report.modularity_after,
            report.render_table()
        ),
    )
}
