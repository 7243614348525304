//! Backend wiring for a pipeline run.
//!
//! Every agent run asks the session for a backend keyed by
//! `<pipeline>/<node>`; the `n`-th run of a key reads or writes
//! `transcripts/<pipeline>/<node>/<n>.jsonl`.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::agent::{run_agent, AgentConfig, AgentError, AgentOutcome};
use crate::gateway::{
    Backend, Clock, CompletionRequest, CompletionResponse, GatewayError, Recorder, ReplayBackend, TranscriptSink,
};
use crate::prompt::{render_template, AncillaryText, PromptError, RoleTag, TemplateSet};
use crate::tools::ToolRegistry;

pub const TRANSCRIPTS_DIR: &str = "transcripts";

/// Canned responses per agent key. Lookup tries `<scope>/<pipeline>/<node>`
/// (for scoped sessions), `<pipeline>/<node>`, then the bare node name, so
/// one script can drive repeated trials.
#[derive(Debug, Default)]
pub struct ScriptBook {
    queues: Mutex<BTreeMap<String, VecDeque<CompletionResponse>>>,
}

impl ScriptBook {
    pub fn new(entries: BTreeMap<String, Vec<CompletionResponse>>) -> Self {
        ScriptBook {
            queues: Mutex::new(entries.into_iter().map(|(k, v)| (k, v.into())).collect()),
        }
    }

    /// JSON object mapping agent key to an array of responses.
    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let entries: BTreeMap<String, Vec<CompletionResponse>> =
            serde_json::from_str(text).map_err(|e| GatewayError::Parse {
                line: e.line(),
                message: e.to_string(),
            })?;
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// First response queued under any of `keys`, tried in order.
    fn pop(&self, keys: &[String]) -> Option<CompletionResponse> {
        let mut q = self.queues.lock().expect("script lock");
        keys.iter().find_map(|k| q.get_mut(k).and_then(VecDeque::pop_front))
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().expect("script lock").values().map(VecDeque::len).sum()
    }
}

struct ScriptedRun {
    book: Arc<ScriptBook>,
    keys: Vec<String>,
    calls: Mutex<usize>,
}

impl Backend for ScriptedRun {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let mut calls = self.calls.lock().expect("calls lock");
        match self.book.pop(&self.keys) {
            Some(r) => {
                *calls += 1;
                Ok(r)
            }
            None => {
                log::error!("script has no response left for {}", self.keys[0]);
                Err(GatewayError::ScriptExhausted { calls: *calls })
            }
        }
    }
}

/// A replayed run; running past the recording is a divergence.
struct ReplayRun(Arc<ReplayBackend>);

impl Backend for ReplayRun {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        match self.0.complete(request) {
            Err(GatewayError::ScriptExhausted { calls }) => Err(GatewayError::ReplayMismatch {
                sequence_no: calls as u64,
                diff: "the run requested more completions than were recorded".into(),
            }),
            other => other,
        }
    }
}

pub enum BackendSource {
    Live(Arc<dyn Backend>),
    Scripted(Arc<ScriptBook>),
    /// Directory containing a recorded `transcripts/` tree.
    Replay(PathBuf),
}

pub struct Session {
    source: BackendSource,
    record_root: Option<PathBuf>,
    scope: Option<String>,
    clock: Arc<dyn Clock>,
    runs: Mutex<BTreeMap<String, usize>>,
    replays: Mutex<Vec<(PathBuf, Arc<ReplayBackend>)>>,
}

impl Session {
    pub fn new(source: BackendSource, clock: Arc<dyn Clock>) -> Self {
        Session {
            source,
            record_root: None,
            scope: None,
            clock,
            runs: Mutex::new(BTreeMap::new()),
            replays: Mutex::new(Vec::new()),
        }
    }

    /// Records every exchange under `<root>/transcripts/`.
    pub fn recording_to(mut self, root: impl Into<PathBuf>) -> Self {
        self.record_root = Some(root.into());
        self
    }

    /// Nests transcripts and side files under `transcripts/<scope>/`, so
    /// repeated runs of one pipeline (e.g. design trials) stay apart.
    pub fn scoped(mut self, scope: impl Into<String>) -> Self {
        self.scope = Some(scope.into());
        self
    }

    fn transcripts_base(&self) -> PathBuf {
        match &self.scope {
            Some(s) => Path::new(TRANSCRIPTS_DIR).join(s),
            None => PathBuf::from(TRANSCRIPTS_DIR),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.source, BackendSource::Replay(_))
    }

    /// Relative transcript path of the next run of `<pipeline>/<node>`.
    fn next_path(&self, pipeline: &str, node: &str) -> PathBuf {
        let key = format!("{pipeline}/{node}");
        let mut runs = self.runs.lock().expect("runs lock");
        let n = runs.entry(key).or_insert(0);
        let p = self.transcripts_base().join(pipeline).join(node).join(format!("{n}.jsonl"));
        *n += 1;
        p
    }

    /// The backend for one agent run.
    pub fn backend_for(&self, pipeline: &str, node: &str) -> Result<Box<dyn Backend>, GatewayError> {
        let rel = self.next_path(pipeline, node);
        let base: Box<dyn Backend> = match &self.source {
            BackendSource::Live(b) => Box::new(b.clone()),
            BackendSource::Scripted(book) => Box::new(ScriptedRun {
                book: book.clone(),
                keys: self
                    .scope
                    .iter()
                    .map(|s| format!("{s}/{pipeline}/{node}"))
                    .chain([format!("{pipeline}/{node}"), node.to_string()])
                    .collect(),
                calls: Mutex::new(0),
            }),
            BackendSource::Replay(root) => {
                let path = root.join(&rel);
                if !path.exists() {
                    return Err(GatewayError::ReplayMismatch {
                        sequence_no: 0,
                        diff: format!("no recorded transcript at {}", path.display()),
                    });
                }
                let r = Arc::new(ReplayBackend::open(&path)?);
                self.replays.lock().expect("replay lock").push((path, r.clone()));
                Box::new(ReplayRun(r))
            }
        };
        match &self.record_root {
            Some(root) => {
                let sink = TranscriptSink::create(&root.join(&rel), self.clock.clone())?;
                Ok(Box::new(Recorder::new(base, sink)))
            }
            None => Ok(base),
        }
    }

    /// Writes a JSON artifact (e.g. an execution trace) next to the
    /// transcripts when recording.
    pub fn write_side_file<T: Serialize>(&self, pipeline: &str, name: &str, value: &T) -> Result<(), GatewayError> {
        let Some(root) = &self.record_root else { return Ok(()) };
        let dir = root.join(self.transcripts_base()).join(pipeline);
        std::fs::create_dir_all(&dir).map_err(|e| GatewayError::Io(e.to_string()))?;
        let text = serde_json::to_string_pretty(value).map_err(|e| GatewayError::Io(e.to_string()))?;
        std::fs::write(dir.join(name), text + "\n").map_err(|e| GatewayError::Io(e.to_string()))
    }

    /// After a replayed run: every opened transcript must have been fully
    /// consumed, and every transcript recorded under `pipeline` opened.
    pub fn verify_replay_complete(&self, pipeline: &str) -> Result<(), GatewayError> {
        let BackendSource::Replay(root) = &self.source else { return Ok(()) };
        let replays = self.replays.lock().expect("replay lock");
        for (path, r) in replays.iter() {
            if r.consumed() != r.len() {
                return Err(GatewayError::ReplayMismatch {
                    sequence_no: r.consumed() as u64,
                    diff: format!("{}: only {} of {} exchanges were replayed", path.display(), r.consumed(), r.len()),
                });
            }
        }
        let opened: Vec<&PathBuf> = replays.iter().map(|(p, _)| p).collect();
        for f in list_transcripts(&root.join(self.transcripts_base()).join(pipeline)) {
            if !opened.contains(&&f) {
                return Err(GatewayError::ReplayMismatch {
                    sequence_no: 0,
                    diff: format!("{} was recorded but never replayed", f.display()),
                });
            }
        }
        Ok(())
    }
}

/// What a pipeline needs to run its agents.
#[derive(Clone, Copy)]
pub struct AgentEnv<'a> {
    pub session: &'a Session,
    pub templates: &'a TemplateSet,
    pub tools: &'a ToolRegistry,
}

impl<'a> AgentEnv<'a> {
    pub fn render(&self, role: RoleTag, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let map = bindings.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        render_template(self.templates.select(role)?, &map)
    }

    /// One agent run with its own backend for `<pipeline>/<node>`.
    pub fn run(
        &self,
        pipeline: &str,
        node: &str,
        config: &AgentConfig,
        task: &str,
        ancillary: Option<AncillaryText>,
    ) -> Result<AgentOutcome, AgentError> {
        let backend = self.session.backend_for(pipeline, node)?;
        run_agent(config, task, ancillary, self.tools, backend.as_ref())
    }
}

/// Every `.jsonl` file below `dir`, sorted.
pub fn list_transcripts(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(rd) = std::fs::read_dir(&d) else { continue };
        for e in rd.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "jsonl") {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}
