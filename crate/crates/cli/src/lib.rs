//! `threadreq` command line: batch runs of the elicitation pipeline.
//!
//! Exit codes: 0 success, 1 validation or pipeline failure (structured
//! error on stderr), 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use threadreq_core::analytics::{ranked_csv, stats_json, timeline_csv};
use threadreq_core::config::ProjectConfig;
use threadreq_core::error::{IngestError, PrioritizeError};
use threadreq_core::extract::AnnotationSet;
use threadreq_core::ingest::{parse_export, validate_capabilities};
use threadreq_core::prioritize::RatingSheet;
use threadreq_core::project::{Mutation, Project, ProjectError, RecomputeScope};
use threadreq_core::store::{atomic_write, ProjectStore, StoreError};

const ACTOR: &str = "cli";

#[derive(Parser, Debug)]
#[command(name = "threadreq", version, about = "Requirements elicitation from moderated discussion threads")]
pub struct Cli {
    /// Project directory.
    #[arg(long, global = true, default_value = ".")]
    pub project: PathBuf,
    /// Output directory for artifacts [default: <project>/out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Threshold overrides for this invocation only. When any is given the
/// project file is left untouched and only artifacts are written.
#[derive(Args, Debug, Default, Clone, Copy)]
pub struct Overrides {
    /// Cosine similarity that links two candidates into one cluster
    #[arg(long, global = true)]
    pub theta_link: Option<f64>,
    /// Cosine similarity at which two cluster members count as duplicates
    #[arg(long, global = true)]
    pub theta_dup: Option<f64>,
    /// Lowest score kept in the final set
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub min_score: Option<f64>,
    /// Lowest topic relevance kept in the final set
    #[arg(long, global = true)]
    pub min_relevance: Option<f64>,
}

impl Overrides {
    fn any(&self) -> bool {
        self.theta_link.is_some() || self.theta_dup.is_some() || self.min_score.is_some() || self.min_relevance.is_some()
    }

    fn apply(&self, config: &mut ProjectConfig) -> Result<(), Failure> {
        let t = &mut config.thresholds;
        t.theta_link = self.theta_link.unwrap_or(t.theta_link);
        t.theta_dup = self.theta_dup.unwrap_or(t.theta_dup);
        t.min_score = self.min_score.unwrap_or(t.min_score);
        t.min_relevance = self.min_relevance.unwrap_or(t.min_relevance);
        t.validate().map_err(|e| Failure::new("invalid_threshold", e.to_string()))
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create a project from a discussion export.
    Init {
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Project config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replaces the export's topic statement.
        #[arg(long)]
        topic: Option<String>,
    },
    /// Check an export against the discussion-room checklist.
    Validate {
        /// Export to check [default: the project's export].
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Extract candidate requirements.
    Extract,
    /// Cluster candidates and count duplicates.
    Cluster,
    /// Import ratings, then score, rank and prune.
    Prioritize {
        #[arg(long, required = true)]
        ratings: PathBuf,
    },
    /// Write the report bundle from the current state.
    Report,
    /// Serve the triage API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory with the console's static files.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Full pipeline and report bundle.
    RunAll {
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
}

/// Structured error printed to stderr as JSON.
#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
    pub details: Vec<String>,
}

impl Failure {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Failure { code, message: message.into(), details: Vec::new() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::new("io_error", format!("{}: {e}", path.display()))
    }

    fn to_json(&self) -> Value {
        json!({ "code": self.code, "message": self.message, "details": self.details })
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Ingest(e) => e.into(),
            e => Failure::new("project_error", e.to_string()),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::new("export_error", e.to_string())
    }
}

impl From<PrioritizeError> for Failure {
    fn from(e: PrioritizeError) -> Self {
        Failure::new("ratings_error", e.to_string())
    }
}

impl From<ProjectError> for Failure {
    fn from(e: ProjectError) -> Self {
        let message = e.to_string();
        match e {
            ProjectError::MissingRatings(cells) => Failure { code: "missing_ratings", message, details: cells },
            ProjectError::Prioritize(PrioritizeError::UndecidedFeasibility(ids)) => {
                Failure { code: "undecided_feasibility", message, details: ids }
            }
            ProjectError::StaleState(_) => Failure::new("stale_state", message),
            _ => Failure::new("pipeline_error", message),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn read_string(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?).map_err(|_| Failure::new("encoding_error", format!("{} is not UTF-8", path.display())))
}

struct Ctx<'a> {
    cli: &'a Cli,
    store: ProjectStore,
    out: PathBuf,
}

impl Ctx<'_> {
    fn now() -> chrono::DateTime<chrono::Utc> {
        chrono::Utc::now()
    }

    fn load(&self) -> Result<Project, Failure> {
        let mut p = self.store.load()?;
        if self.cli.overrides.any() {
            self.cli.overrides.apply(&mut p.file.config)?;
        }
        Ok(p)
    }

    fn apply(&self, p: &mut Project, m: Mutation) -> Result<(), Failure> {
        p.apply(m, ACTOR, Self::now())?;
        Ok(())
    }

    /// Persists unless overrides are active.
    fn save(&self, p: &Project) -> Result<bool, Failure> {
        if self.cli.overrides.any() {
            return Ok(false);
        }
        self.store.save(p)?;
        Ok(true)
    }

    fn write(&self, name: &str, contents: &str, written: &mut Vec<String>) -> Result<(), Failure> {
        fs::create_dir_all(&self.out).map_err(|e| Failure::io(&self.out, e))?;
        let path = self.out.join(name);
        atomic_write(&path, contents.as_bytes()).map_err(|e| Failure::io(&path, e))?;
        written.push(path.display().to_string());
        Ok(())
    }

    fn import_ratings(&self, p: &mut Project, path: &Path) -> Result<(), Failure> {
        let sheet = RatingSheet::from_csv(read(path)?.as_slice(), &p.file.config.weights)?;
        self.apply(p, Mutation::ReplaceRatings { sheet })
    }
}

fn clusters_json(p: &Project) -> String {
    let summaries: Vec<_> = p.file.clusters.iter().map(|c| c.summary()).collect();
    let mut s = serde_json::to_string_pretty(&summaries).expect("clusters serialize");
    s.push('\n');
    s
}

fn bundle(ctx: &Ctx, p: &Project, written: &mut Vec<String>) -> Result<(), Failure> {
    let stats = p.stats_or_provisional();
    ctx.write("report.md", &p.report(), written)?;
    if let Some(r) = &p.file.ranking {
        let csv = ranked_csv(&r.outcome, &p.file.candidates, &p.file.clusters)
            .map_err(|e| Failure::new("io_error", e.to_string()))?;
        ctx.write("ranked.csv", &csv, written)?;
    }
    ctx.write("stats.json", &stats_json(&stats), written)?;
    ctx.write("timeline.csv", &timeline_csv(stats.timeline.as_ref()), written)?;
    ctx.write("clusters.json", &clusters_json(p), written)?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<(Value, i32), Failure> {
    let store = ProjectStore::new(&cli.project);
    let out = cli.out.clone().unwrap_or_else(|| cli.project.join("out"));
    let ctx = Ctx { cli, store, out };
    let mut written = Vec::new();

    let summary = match &cli.command {
        Command::Init { export, annotations, ratings, config, topic } => {
            let config = match config {
                Some(path) => ProjectConfig::from_toml(&read_string(path)?)
                    .map_err(|e| Failure::new("config_error", e.to_string()))?,
                None => ProjectConfig::default(),
            };
            let mut bytes = read(export)?;
            if let Some(topic) = topic {
                let mut e = parse_export(&bytes)?.export;
                e.topic_statement = topic.clone();
                bytes = e.to_json().into_bytes();
            }
            let annotations = match annotations {
                Some(path) => AnnotationSet::from_json(&read_string(path)?)
                    .map_err(|e| Failure::new("annotation_error", e.to_string()))?,
                None => AnnotationSet::default(),
            };
            let ratings = match ratings {
                Some(path) => RatingSheet::from_csv(read(path)?.as_slice(), &config.weights)?,
                None => RatingSheet::default(),
            };
            let p = ctx.store.init(&bytes, config, annotations, ratings)?;
            json!({ "command": "init", "project": cli.project, "revision": p.revision() })
        }
        Command::Validate { export } => {
            let bytes = match export {
                Some(path) => read(path)?,
                None => {
                    let p = ctx.store.load()?;
                    read(&cli.project.join(&p.file.export.path))?
                }
            };
            let parsed = parse_export(&bytes)?;
            let violations = validate_capabilities(&parsed.export);
            let warnings: Vec<String> = parsed.warnings.iter().map(|w| w.to_string()).collect();
            let code = if violations.is_empty() { 0 } else { 1 };
            let summary = json!({
                "command": "validate",
                "ok": violations.is_empty(),
                "violations": violations,
                "warnings": warnings,
            });
            return Ok((summary, code));
        }
        Command::Extract => {
            let mut p = ctx.load()?;
            ctx.apply(&mut p, Mutation::Recompute { scope: RecomputeScope::Candidates })?;
            let mut s = serde_json::to_string_pretty(&p.file.candidates).expect("candidates serialize");
            s.push('\n');
            ctx.write("candidates.json", &s, &mut written)?;
            let saved = ctx.save(&p)?;
            let nfr = p.file.candidates.iter().filter(|c| c.req_type == threadreq_core::extract::ReqType::Nonfunctional).count();
            json!({ "command": "extract", "revision": p.revision(), "saved": saved,
                    "candidates": p.file.candidates.len(), "nonfunctional": nfr, "artifacts": written })
        }
        Command::Cluster => {
            let mut p = ctx.load()?;
            ctx.apply(&mut p, Mutation::Recompute { scope: RecomputeScope::Clusters })?;
            ctx.write("clusters.json", &clusters_json(&p), &mut written)?;
            let saved = ctx.save(&p)?;
            let review = p.file.clusters.iter().filter(|c| c.needs_review).count();
            json!({ "command": "cluster", "revision": p.revision(), "saved": saved,
                    "clusters": p.file.clusters.len(), "needs_review": review, "artifacts": written })
        }
        Command::Prioritize { ratings } => {
            let mut p = ctx.load()?;
            ctx.import_ratings(&mut p, ratings)?;
            ctx.apply(&mut p, Mutation::Recompute { scope: RecomputeScope::RankingOnly })?;
            let outcome = &p.file.ranking.as_ref().expect("ranking computed").outcome;
            let csv = ranked_csv(outcome, &p.file.candidates, &p.file.clusters)
                .map_err(|e| Failure::new("io_error", e.to_string()))?;
            ctx.write("ranked.csv", &csv, &mut written)?;
            let saved = ctx.save(&p)?;
            json!({ "command": "prioritize", "revision": p.revision(), "saved": saved,
                    "final": outcome.final_set.len(), "dropped": outcome.dropped.len(), "artifacts": written })
        }
        Command::Report => {
            let p = ctx.load()?;
            bundle(&ctx, &p, &mut written)?;
            json!({ "command": "report", "revision": p.revision(), "stale": p.file.stale, "artifacts": written })
        }
        Command::Serve { bind, static_dir } => {
            let p = ctx.load()?;
            let state = Arc::new(threadreq_service::ServiceState::new(ctx.store.clone(), p));
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new("io_error", e.to_string()))?;
            rt.block_on(threadreq_service::serve(state, *bind, static_dir.clone()))
                .map_err(|e| Failure::new("io_error", e.to_string()))?;
            json!({ "command": "serve" })
        }
        Command::RunAll { ratings } => {
            let mut p = ctx.load()?;
            if let Some(path) = ratings {
                ctx.import_ratings(&mut p, path)?;
            }
            ctx.apply(&mut p, Mutation::Recompute { scope: RecomputeScope::All })?;
            bundle(&ctx, &p, &mut written)?;
            let saved = ctx.save(&p)?;
            let outcome = &p.file.ranking.as_ref().expect("ranking computed").outcome;
            json!({ "command": "run-all", "revision": p.revision(), "saved": saved,
                    "candidates": p.file.candidates.len(), "clusters": p.file.clusters.len(),
                    "final": outcome.final_set.len(), "dropped": outcome.dropped.len(), "artifacts": written })
        }
    };
    Ok((summary, 0))
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok((summary, code)) => {
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            code
        }
        Err(f) => {
            let _ = writeln!(stderr, "{}", f.to_json());
            1
        }
    }
}
