//! The subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use synthforge_core::checks::{self, CheckConfig, CheckReport};
use synthforge_core::design::emit::{MANIFEST_FILE, REPORT_FILE, SYSTEM_DESIGN_FILE};
use synthforge_core::design::{run_design, DesignConfig, DesignContext, DesignRun, DesignStatus};
use synthforge_core::gateway::{parse_transcript, Backend, Clock, GatewayError, LogicalClock, OpenAiBackend, OpenAiConfig, SystemClock, API_KEY_ENV};
use synthforge_core::knowledge::{self, run_knowledge, KnowledgeConfig, KnowledgeContext};
use synthforge_core::model::DesignObjectives;
use synthforge_core::prompt::TemplateSet;
use synthforge_core::rag::{Collection, Embedder, HashedEmbedder, RemoteEmbedder, VectorStore};
use synthforge_core::session::{AgentEnv, BackendSource, ScriptBook, Session};
use synthforge_core::tools::{
    ExecConfig, FixtureSearch, HttpSearch, PythonRunTool, RetrieveTool, SearchProvider, SearchWebTool, ThoughtTool,
    ToolRegistry, THOUGHT_TOOL,
};

use crate::config::{EmbedderConfig, SearchConfig, WorkspaceConfig};
use crate::exit::{gateway_cause, CliError, OK, QUALITY};
use crate::trials::{select_best, TrialResult};
use crate::workspace::{copy_tree, relative, remove_dir, walk_files, Workspace, REPLAY_DIR, RUN_FILE, TRIALS_FILE};

/// Where completions come from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Source {
    #[default]
    Live,
    /// A JSON script of canned responses per agent key.
    Script(PathBuf),
    /// A workspace holding recorded `transcripts/`.
    Replay(PathBuf),
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub workspace: PathBuf,
    pub config: Option<PathBuf>,
    pub source: Source,
    pub record: bool,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub message: String,
}

impl Outcome {
    fn ok(message: impl Into<String>) -> Self {
        Outcome { code: OK, message: message.into() }
    }
}

/// What a recorded run did, so `replay` can redo it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub trials: usize,
    pub no_review: bool,
    pub config: WorkspaceConfig,
}

/// Loaded once per command.
struct Env {
    ws: Workspace,
    config: WorkspaceConfig,
    objectives: DesignObjectives,
    templates: TemplateSet,
    script: Option<Arc<ScriptBook>>,
    live: Option<Arc<dyn Backend>>,
    opts: Options,
}

impl Env {
    fn load(opts: &Options) -> Result<Env> {
        if opts.parallel && matches!(opts.source, Source::Script(_)) {
            return Err(CliError::usage("--parallel cannot be combined with --script").into());
        }
        let ws = Workspace::new(&opts.workspace);
        let objectives = ws.load_objectives()?;
        let config = ws.load_config(opts.config.as_deref())?;
        let tdir = ws.resolve(&config.templates);
        let templates = if tdir.is_dir() {
            TemplateSet::load_dir(&tdir).map_err(|e| CliError::usage(e.to_string()))?
        } else {
            TemplateSet::builtin()
        };
        let script = match &opts.source {
            Source::Script(p) => Some(Arc::new(
                ScriptBook::from_file(p).map_err(|e| CliError::usage(format!("script {}: {e}", p.display())))?,
            )),
            _ => None,
        };
        let live: Option<Arc<dyn Backend>> = match &opts.source {
            Source::Live => {
                let mut c = OpenAiConfig::new(&config.models.endpoint, config.models.roster());
                c.timeout = Duration::from_secs(config.models.timeout_s.max(1));
                c.max_attempts = config.models.max_attempts.max(1);
                Some(Arc::new(OpenAiBackend::new(c)?))
            }
            _ => None,
        };
        Ok(Env { ws, config, objectives, templates, script, live, opts: opts.clone() })
    }

    fn session(&self, scope: Option<String>) -> Session {
        let (source, clock): (BackendSource, Arc<dyn Clock>) = match &self.opts.source {
            Source::Live => (
                BackendSource::Live(self.live.clone().expect("live backend built")),
                Arc::new(SystemClock),
            ),
            Source::Script(_) => (
                BackendSource::Scripted(self.script.clone().expect("script loaded")),
                Arc::new(LogicalClock::new()),
            ),
            Source::Replay(dir) => (BackendSource::Replay(dir.clone()), Arc::new(LogicalClock::new())),
        };
        let mut s = Session::new(source, clock);
        if self.opts.record {
            s = s.recording_to(&self.ws.root);
        }
        match scope {
            Some(scope) => s.scoped(scope),
            None => s,
        }
    }

    fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        Ok(match &self.config.rag.embedder {
            EmbedderConfig::Hashed {} => Arc::new(HashedEmbedder::new(self.config.rag.dimension)),
            EmbedderConfig::Remote { endpoint, model } => Arc::new(RemoteEmbedder::new(
                endpoint,
                model.clone(),
                self.config.rag.dimension,
                std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            )?),
        })
    }

    fn search(&self) -> Result<Arc<dyn SearchProvider>> {
        Ok(match &self.config.tools.search {
            SearchConfig::None {} => Arc::new(FixtureSearch::new(BTreeMap::new())),
            SearchConfig::Fixture { dir } => Arc::new(
                FixtureSearch::load_dir(&self.ws.resolve(dir)).map_err(|e| CliError::usage(e.to_string()))?,
            ),
            SearchConfig::Http { endpoint } => Arc::new(HttpSearch::new(
                endpoint.clone(),
                std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            )?),
        })
    }

    fn tools(&self, store: Arc<VectorStore>, embedder: Arc<dyn Embedder>, search: Arc<dyn SearchProvider>) -> Result<ToolRegistry> {
        let mut r = ToolRegistry::new();
        r.register(Arc::new(ThoughtTool::new()))?;
        r.register(Arc::new(SearchWebTool::new(search, self.config.tools.max_search_results)))?;
        let mut exec = ExecConfig::python(self.ws.scratch_dir());
        exec.interpreter = self.config.tools.interpreter.clone();
        r.register(Arc::new(PythonRunTool::new(exec, self.config.tools.exec_timeout_s)))?;
        r.register(Arc::new(RetrieveTool::new(store, embedder, self.config.rag.retrieve_k)))?;
        Ok(r)
    }

    fn check_config(&self) -> CheckConfig {
        check_config(&self.config, Some(&self.objectives))
    }

    fn record_run(&self, command: &str, trials: usize, no_review: bool) -> Result<()> {
        if !self.opts.record {
            return Ok(());
        }
        let rec = RunRecord { command: command.into(), trials, no_review, config: self.config.clone() };
        let dir = self.ws.transcripts_dir();
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(RUN_FILE), serde_json::to_string_pretty(&rec)? + "\n")?;
        Ok(())
    }
}

fn check_config(config: &WorkspaceConfig, objectives: Option<&DesignObjectives>) -> CheckConfig {
    CheckConfig {
        optimization_requested: config
            .checks
            .optimization_requested
            .unwrap_or_else(|| objectives.is_some_and(checks::optimization_requested)),
        syntax_hook: config.checks.syntax_hook.clone(),
        synth_hook: config.checks.synth_hook.clone(),
    }
}

fn replay_error(e: &GatewayError) -> Option<CliError> {
    match e {
        GatewayError::ReplayMismatch { sequence_no, diff } => {
            Some(CliError::replay(format!("replay mismatch at sequence_no {sequence_no}: {diff}")))
        }
        _ => None,
    }
}

pub fn init(opts: &Options) -> Result<Outcome> {
    let ws = Workspace::new(&opts.workspace);
    std::fs::create_dir_all(&ws.root)?;
    let written = ws.init()?;
    let mut msg = format!("initialized {}", ws.root.display());
    for p in written {
        msg.push_str(&format!("\n  wrote {}", relative(&ws.root, &p)));
    }
    Ok(Outcome::ok(msg))
}

/// Rebuilds the index from `knowledge/sources/` and saves it.
fn build_index(env: &Env, embedder: &dyn Embedder) -> Result<VectorStore> {
    let mut store = VectorStore::new(embedder, env.config.rag.chunking())?;
    let docs = env.ws.source_documents()?;
    for c in Collection::ALL {
        let batch: Vec<(String, String)> =
            docs.iter().filter(|d| d.0 == c).map(|d| (d.1.clone(), d.2.clone())).collect();
        if !batch.is_empty() {
            store.ingest(embedder, c, &batch).with_context(|| format!("indexing {c} sources"))?;
        }
    }
    remove_dir(&env.ws.index_dir())?;
    store.save(&env.ws.index_dir())?;
    Ok(store)
}

fn load_index(env: &Env, embedder: &dyn Embedder) -> Result<VectorStore> {
    let dir = env.ws.index_dir();
    if dir.join("meta.json").is_file() {
        let store = VectorStore::load(&dir)?;
        if store.embedder_id() != embedder.id() {
            log::warn!("index was built with {}; rebuilding with {}", store.embedder_id(), embedder.id());
            return build_index(env, embedder);
        }
        Ok(store)
    } else {
        build_index(env, embedder)
    }
}

fn gather_in(env: &Env) -> Result<String> {
    let embedder = env.embedder()?;
    let store = Arc::new(build_index(env, embedder.as_ref())?);
    let search = env.search()?;
    let tools = env.tools(store.clone(), embedder.clone(), search.clone())?;
    if env.opts.record {
        remove_dir(&env.ws.transcripts_dir().join(knowledge::PIPELINE))?;
    }
    let session = env.session(None);
    let ctx = KnowledgeContext {
        env: AgentEnv { session: &session, templates: &env.templates, tools: &tools },
        objectives: &env.objectives,
        store: &store,
        embedder: embedder.as_ref(),
        search: search.as_ref(),
        config: KnowledgeConfig {
            eval_cap: env.config.caps.knowledge_eval,
            retrieve_k: env.config.rag.retrieve_k,
            max_search_results: env.config.tools.max_search_results,
            insufficient_score: env.config.rag.insufficient_score,
            collections: Vec::new(),
            parallel: env.opts.parallel,
        },
    };
    let out = run_knowledge(&ctx, &env.ws.knowledge_dir())?;
    session.verify_replay_complete(knowledge::PIPELINE)?;
    Ok(format!("gather: {out}; review in {}", relative(&env.ws.root, &env.ws.knowledge_dir().join(knowledge::REVIEW_FILE))))
}

pub fn gather(opts: &Options) -> Result<Outcome> {
    let env = Env::load(opts)?;
    let _lock = env.ws.lock()?;
    let msg = gather_in(&env)?;
    env.record_run("gather", 0, false)?;
    Ok(Outcome::ok(msg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsSummary {
    pub best: Option<usize>,
    pub trials: Vec<TrialResult>,
}

fn run_trial(env: &Env, i: usize, review: &str, tools: &ToolRegistry) -> Result<(TrialResult, Option<CheckReport>)> {
    let scope = format!("trial_{i}");
    let session = env.session(Some(scope));
    let mut module_tools = vec![THOUGHT_TOOL.to_string()];
    module_tools.extend(env.config.tools.module_tools.iter().filter(|t| *t != THOUGHT_TOOL).cloned());
    let ctx = DesignContext {
        env: AgentEnv { session: &session, templates: &env.templates, tools },
        objectives: &env.objectives,
        review,
        config: DesignConfig {
            design_eval_cap: env.config.caps.design_eval,
            final_eval_cap: env.config.caps.final_eval,
            max_modules: env.config.caps.max_modules,
            module_tools,
        },
        checks: env.check_config(),
        run_label: String::new(),
    };
    let out = env.ws.trial_dir(i);
    let result: Result<DesignRun> = run_design(&ctx, &out)
        .map_err(anyhow::Error::from)
        .and_then(|r| session.verify_replay_complete(synthforge_core::design::PIPELINE).map(|_| r).map_err(Into::into));
    match result {
        Ok(r) => {
            let status = r.status.to_string();
            Ok(match r.report {
                Some(report) => {
                    let t = TrialResult::scored(i, status, &report, r.status == DesignStatus::Approved);
                    (t, Some(report))
                }
                None => (TrialResult::failed(i, status), None),
            })
        }
        Err(e) => {
            if let Some(r) = gateway_cause(&e).and_then(replay_error) {
                return Err(anyhow::Error::from(r).context(format!("trial {i}")));
            }
            log::error!("trial {i}: {e:#}");
            Ok((TrialResult::failed(i, format!("error: {e:#}")), None))
        }
    }
}

fn design_in(env: &Env, trials: usize, no_review: bool) -> Result<Outcome> {
    let review = if no_review {
        String::new()
    } else {
        knowledge::read_review_body(&env.ws.knowledge_dir()).ok_or_else(|| {
            CliError::usage("no literature review found; run `synthforge gather` first or pass --no-review")
        })?
    };
    let embedder = env.embedder()?;
    let store = Arc::new(load_index(env, embedder.as_ref())?);
    let tools = env.tools(store, embedder, env.search()?)?;

    remove_dir(&env.ws.trials_dir())?;
    if env.opts.record {
        let dir = env.ws.transcripts_dir();
        if dir.is_dir() {
            for e in std::fs::read_dir(&dir)? {
                let p = e?.path();
                if p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("trial_")) {
                    remove_dir(&p)?;
                }
            }
        }
    }
    let results: Vec<Result<(TrialResult, Option<CheckReport>)>> = if env.opts.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..trials).map(|i| s.spawn({
                let (review, tools) = (&review, &tools);
                move || run_trial(env, i, review, tools)
            })).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("trial thread panicked"))))
                .collect()
        })
    } else {
        (0..trials).map(|i| run_trial(env, i, &review, &tools)).collect()
    };
    let mut scored = Vec::with_capacity(trials);
    let mut reports = BTreeMap::new();
    for r in results {
        let (t, report) = r?;
        if let Some(rep) = report {
            reports.insert(t.index, rep);
        }
        scored.push(t);
    }
    let best = select_best(&scored);
    let summary = TrialsSummary { best, trials: scored };
    std::fs::create_dir_all(env.ws.design_dir())?;
    std::fs::write(env.ws.design_dir().join(TRIALS_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;

    let mut lines: Vec<String> = summary
        .trials
        .iter()
        .map(|t| match (t.score, t.findings) {
            (Some(s), Some(f)) => format!("trial {}: {} (score {s}/5, {f} finding(s))", t.index, t.status),
            _ => format!("trial {}: {}", t.index, t.status),
        })
        .collect();
    let Some(best) = best else {
        return Err(CliError::quality(format!("all {trials} trial(s) failed:\n{}", lines.join("\n"))).into());
    };
    copy_tree(&env.ws.trial_dir(best), &env.ws.best_dir())?;
    for f in [SYSTEM_DESIGN_FILE, MANIFEST_FILE, REPORT_FILE] {
        std::fs::copy(env.ws.best_dir().join(f), env.ws.design_dir().join(f)).with_context(|| format!("copying {f}"))?;
    }
    lines.push(format!("best: trial {best} -> {}", relative(&env.ws.root, &env.ws.best_dir())));
    lines.push(reports[&best].to_table());
    Ok(Outcome::ok(lines.join("\n")))
}

pub fn design(opts: &Options, trials: Option<usize>, no_review: bool) -> Result<Outcome> {
    let env = Env::load(opts)?;
    let _lock = env.ws.lock()?;
    let n = trials.unwrap_or(env.config.trials).max(1);
    let out = design_in(&env, n, no_review)?;
    env.record_run("design", n, no_review)?;
    Ok(out)
}

/// Gather, then design; a failed gather stops the run.
pub fn run(opts: &Options, trials: Option<usize>, no_review: bool) -> Result<Outcome> {
    let env = Env::load(opts)?;
    let _lock = env.ws.lock()?;
    let n = trials.unwrap_or(env.config.trials).max(1);
    let mut msg = if no_review {
        String::from("gather: skipped (--no-review)")
    } else {
        gather_in(&env).context("gather failed; design not attempted")?
    };
    let out = design_in(&env, n, no_review)?;
    env.record_run("run", n, no_review)?;
    msg.push('\n');
    msg.push_str(&out.message);
    Ok(Outcome { code: out.code, message: msg })
}

pub fn check(opts: &Options, design_dir: &Path) -> Result<Outcome> {
    if !design_dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", design_dir.display())).into());
    }
    let design = checks::load_design_dir(design_dir).map_err(|e| CliError::usage(e.to_string()))?;
    let ws = Workspace::new(&opts.workspace);
    let config = ws.load_config(opts.config.as_deref())?;
    let objectives = ws.load_objectives().ok();
    let report = checks::report(&design, &check_config(&config, objectives.as_ref()));
    let code = if report.any_automated_failure() { QUALITY } else { OK };
    let mut msg = report.to_table();
    for m in &report.metrics {
        for f in &m.findings {
            msg.push_str(&format!("\n{f}"));
        }
    }
    Ok(Outcome { code, message: msg })
}

/// Files a command emits, relative to the workspace.
fn emitted_files(ws: &Workspace, command: &str) -> Result<Vec<String>> {
    let mut trees = Vec::new();
    let mut out = Vec::new();
    if command != "design" {
        trees.push(ws.index_dir());
        for f in [knowledge::REVIEW_FILE, knowledge::DRAFTS_FILE] {
            out.push(relative(&ws.root, &ws.knowledge_dir().join(f)));
        }
    }
    if command != "gather" {
        trees.push(ws.design_dir());
    }
    for dir in trees.into_iter().filter(|d| d.is_dir()) {
        out.extend(walk_files(&dir)?.iter().map(|f| relative(&ws.root, f)));
    }
    out.sort();
    Ok(out)
}

/// Exchanges that differ between two transcript trees; timestamps are ignored.
fn transcript_diffs(recorded: &Path, replayed: &Path) -> Result<Vec<String>> {
    let jsonl = |dir: &Path| -> Vec<String> {
        synthforge_core::session::list_transcripts(dir).iter().map(|f| relative(dir, f)).collect()
    };
    let load = |p: PathBuf| -> Result<Vec<(u64, String)>> {
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        Ok(parse_transcript(&text)?
            .into_iter()
            .map(|e| (e.sequence_no, serde_json::json!([e.request, e.response]).to_string()))
            .collect())
    };
    let (a, b) = (jsonl(recorded), jsonl(replayed));
    let mut out = Vec::new();
    for f in a.iter().chain(b.iter().filter(|f| !a.contains(f))) {
        if !b.contains(f) {
            out.push(format!("transcript not reproduced: {f}"));
        } else if !a.contains(f) {
            out.push(format!("transcript not in recording: {f}"));
        } else {
            let (x, y) = (load(recorded.join(f))?, load(replayed.join(f))?);
            if let Some(seq) = x.iter().zip(&y).find(|(p, q)| p != q).map(|(p, _)| p.0) {
                out.push(format!("transcript {f} differs at sequence_no {seq}"));
            } else if x.len() != y.len() {
                out.push(format!("transcript {f}: {} exchanges recorded, {} replayed", x.len(), y.len()));
            }
        }
    }
    Ok(out)
}

/// Re-executes a recorded run into `<recorded>/replay/` and compares
/// every emitted file with the recording.
pub fn replay(recorded: &Path) -> Result<Outcome> {
    let rec = Workspace::new(recorded);
    let run_path = rec.transcripts_dir().join(RUN_FILE);
    let text = std::fs::read_to_string(&run_path)
        .map_err(|e| CliError::usage(format!("{}: {e}; was the run recorded?", run_path.display())))?;
    let run_rec: RunRecord = serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", run_path.display())))?;

    let target = Workspace::new(recorded.join(REPLAY_DIR));
    remove_dir(&target.root)?;
    std::fs::create_dir_all(&target.root)?;
    let outputs = emitted_files(&rec, &run_rec.command)?;
    let skip_top = ["design", "transcripts", REPLAY_DIR, crate::workspace::SCRATCH_DIR, crate::workspace::LOCK_FILE];
    for f in walk_files(&rec.root)? {
        let rel = relative(&rec.root, &f);
        let top = rel.split('/').next().unwrap_or("");
        if skip_top.contains(&top) || (outputs.contains(&rel) && !(run_rec.command == "design" && rel.starts_with("knowledge/"))) {
            continue;
        }
        let dst = target.root.join(&rel);
        std::fs::create_dir_all(dst.parent().expect("file has a parent"))?;
        std::fs::copy(&f, &dst)?;
    }
    std::fs::write(target.config_path(), run_rec.config.to_yaml())?;

    let opts = Options {
        workspace: target.root.clone(),
        config: None,
        source: Source::Replay(rec.root.clone()),
        record: true,
        parallel: false,
    };
    let trials = Some(run_rec.trials.max(1));
    let result = match run_rec.command.as_str() {
        "gather" => gather(&opts),
        "design" => design(&opts, trials, run_rec.no_review),
        "run" => run(&opts, trials, run_rec.no_review),
        other => return Err(CliError::usage(format!("{}: unknown command `{other}`", run_path.display())).into()),
    };
    if let Err(e) = &result {
        if let Some(r) = gateway_cause(e).and_then(replay_error) {
            return Err(r.into());
        }
    }
    result?;

    let replayed = emitted_files(&target, &run_rec.command)?;
    let mut diffs = Vec::new();
    for f in outputs.iter().chain(replayed.iter().filter(|f| !outputs.contains(f))) {
        let a = std::fs::read(rec.root.join(f)).ok();
        let b = std::fs::read(target.root.join(f)).ok();
        match (a, b) {
            (Some(a), Some(b)) if a == b => {}
            (Some(_), Some(_)) => diffs.push(format!("differs: {f}")),
            (Some(_), None) => diffs.push(format!("not reproduced: {f}")),
            (None, _) => diffs.push(format!("not in recording: {f}")),
        }
    }
    diffs.extend(transcript_diffs(&rec.transcripts_dir(), &target.transcripts_dir())?);
    if !diffs.is_empty() {
        return Err(CliError::replay(format!("replay produced {} file difference(s):\n{}", diffs.len(), diffs.join("\n"))).into());
    }
    Ok(Outcome::ok(format!(
        "replay of `{}` matched: {} file(s) identical ({})",
        run_rec.command,
        outputs.len(),
        relative(&rec.root, &target.root)
    )))
}
