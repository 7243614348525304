//! Knowledge gathering: research questions, retrieval-grounded answers
//! checked by an evaluator with web-search fallback, and a literature review.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError};
use crate::gateway::ModelRole;
use crate::graph::{execute, Caps, ExecutionTrace, Graph, GraphError, Halt, NodeError};
use crate::model::{DesignObjectives, LiteratureReview, Source};
use crate::prompt::{assemble, ActionOutcome, AncillaryText, PromptError, RoleTag};
use crate::rag::{format_chunks, is_insufficient, Collection, Embedder, ScoredChunk, VectorStore};
use crate::schema::builtin;
use crate::session::AgentEnv;
use crate::tools::{format_results, search_web, SearchProvider, SearchResult, SearchWebTool};

pub const PIPELINE: &str = "knowledge";
pub const REVIEW_FILE: &str = "literature_review.md";
pub const DRAFTS_FILE: &str = "drafts.json";
const RETRIEVE_TOOL: &str = "retrieve";

const ANSWER_CRITERIA: &str = "the answer addresses the question directly and correctly; it is supported by the \
reference material in the observations; it is specific enough for a hardware designer to act on";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeConfig {
    /// Evaluations per question before giving up.
    pub eval_cap: usize,
    pub retrieve_k: usize,
    pub max_search_results: usize,
    /// Top-1 retrieval score below which the evaluator is told retrieval was thin.
    pub insufficient_score: f64,
    pub collections: Vec<Collection>,
    /// Answer questions on separate threads.
    pub parallel: bool,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        KnowledgeConfig {
            eval_cap: 5,
            retrieve_k: 5,
            max_search_results: 5,
            insufficient_score: crate::rag::INSUFFICIENT_SCORE,
            collections: Vec::new(),
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginKind {
    Goal,
    Requirement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionOrigin {
    pub kind: OriginKind,
    /// Zero-based index into the goals or requirements.
    pub index: usize,
}

impl QuestionOrigin {
    /// Parses `goal 2` / `requirement 1` (one-based, as shown to the model).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_lowercase();
        let (kind, rest) = if let Some(r) = s.strip_prefix("goal") {
            (OriginKind::Goal, r)
        } else if let Some(r) = s.strip_prefix("requirement") {
            (OriginKind::Requirement, r)
        } else {
            return None;
        };
        let n: usize = rest.trim_start_matches([' ', '#', '_', '-']).trim().parse().ok()?;
        (n >= 1).then(|| QuestionOrigin { kind, index: n - 1 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchQuestion {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<QuestionOrigin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Chunk {
        locator: String,
        doc_id: String,
        collection: Collection,
        score: f64,
    },
    Web {
        locator: String,
        title: String,
    },
}

impl Evidence {
    pub fn locator(&self) -> &str {
        match self {
            Evidence::Chunk { locator, .. } | Evidence::Web { locator, .. } => locator,
        }
    }

    pub fn source(&self) -> Source {
        match self {
            Evidence::Chunk { locator, doc_id, .. } => Source {
                title: doc_id.clone(),
                locator: locator.clone(),
            },
            Evidence::Web { locator, title } => Source {
                title: title.clone(),
                locator: locator.clone(),
            },
        }
    }

    fn from_chunk(c: &ScoredChunk) -> Self {
        Evidence::Chunk {
            locator: c.chunk.locator(),
            doc_id: c.chunk.doc_id.clone(),
            collection: c.chunk.source_collection,
            score: c.score,
        }
    }

    fn from_web(r: &SearchResult) -> Self {
        Evidence::Web {
            locator: r.locator.clone(),
            title: r.title.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDraft {
    pub question: ResearchQuestion,
    pub answer: String,
    pub evidence: Vec<Evidence>,
    /// Evaluations performed.
    pub rounds: usize,
    pub searches: usize,
    pub satisfied: bool,
    #[serde(default)]
    pub last_feedback: String,
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("question generation produced no questions")]
    NoQuestions,
    #[error("no drafts to review")]
    NoDrafts,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("knowledge pipeline halted: {0}")]
    Halted(String),
    #[error("malformed {what}: {message}")]
    Malformed { what: &'static str, message: String },
    #[error("writing outputs: {0}")]
    Io(String),
}

/// Everything the knowledge pipeline reads.
pub struct KnowledgeContext<'a> {
    pub env: AgentEnv<'a>,
    pub objectives: &'a DesignObjectives,
    pub store: &'a VectorStore,
    pub embedder: &'a dyn Embedder,
    pub search: &'a dyn SearchProvider,
    pub config: KnowledgeConfig,
}

fn question_agent() -> AgentConfig {
    AgentConfig::new(RoleTag::QuestionGen, ModelRole::Generator, builtin::questions())
}

fn generation_agent() -> AgentConfig {
    AgentConfig::new(RoleTag::Generation, ModelRole::Generator, builtin::answer())
}

fn evaluation_agent() -> AgentConfig {
    AgentConfig::new(RoleTag::Evaluation, ModelRole::Evaluator, builtin::verdict()).format_retries(1)
}

fn review_agent() -> AgentConfig {
    AgentConfig::new(RoleTag::Review, ModelRole::Evaluator, builtin::literature_review())
}

fn normalized(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Asks the question agent for questions; deduplicated by normalized text,
/// first occurrence kept.
pub fn generate_questions(ctx: &KnowledgeContext<'_>) -> Result<Vec<ResearchQuestion>, KnowledgeError> {
    let objectives = ctx.objectives.as_prompt_text();
    let task = ctx.env.render(RoleTag::QuestionGen, &[("objectives", &objectives)])?;
    let out = ctx.env.run(PIPELINE, "questions", &question_agent(), &task, None)?;
    let items = out.response.payload.get("questions").and_then(Value::as_array).cloned().unwrap_or_default();
    let mut seen = BTreeSet::new();
    let mut questions = Vec::new();
    for item in items {
        let text = item.get("text").and_then(Value::as_str).unwrap_or("").trim().to_string();
        if text.is_empty() || !seen.insert(normalized(&text)) {
            continue;
        }
        let origin = item.get("origin").and_then(Value::as_str).and_then(QuestionOrigin::parse);
        questions.push(ResearchQuestion { text, origin });
    }
    if questions.is_empty() {
        return Err(KnowledgeError::NoQuestions);
    }
    for (i, _) in ctx.objectives.goals.iter().enumerate() {
        let covered = questions
            .iter()
            .any(|q| q.origin == Some(QuestionOrigin { kind: OriginKind::Goal, index: i }));
        if !covered && questions.iter().any(|q| q.origin.is_some()) {
            log::warn!("no research question is tagged with goal {}", i + 1);
        }
    }
    Ok(questions)
}

/// Per-question loop state.
#[derive(Debug, Clone)]
struct QuestionState {
    question: ResearchQuestion,
    /// Observations so far: the retrieval, then one per web search.
    outcomes: Vec<ActionOutcome>,
    answer: String,
    evidence: Vec<Evidence>,
    rounds: usize,
    searches: usize,
    satisfied: bool,
    feedback: String,
    search_query: Option<String>,
    retrieval_note: Option<String>,
}

impl QuestionState {
    fn draft(self) -> AnswerDraft {
        AnswerDraft {
            question: self.question,
            answer: self.answer,
            evidence: self.evidence,
            rounds: self.rounds,
            searches: self.searches,
            satisfied: self.satisfied,
            last_feedback: self.feedback,
        }
    }
}

fn verdict_fields(payload: &serde_json::Map<String, Value>) -> (bool, String, Option<String>) {
    let satisfied = payload.get("satisfactory").and_then(Value::as_bool).unwrap_or(false);
    let feedback = payload.get("feedback").and_then(Value::as_str).unwrap_or("").to_string();
    let query = payload
        .get("search_query")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|q| !q.is_empty())
        .map(str::to_string);
    (satisfied, feedback, query)
}

/// Answers one question: retrieve, generate, then evaluate until satisfied
/// or the cap, searching the web after each unsatisfactory evaluation.
pub fn answer_with_evaluation(
    ctx: &KnowledgeContext<'_>,
    index: usize,
    question: &ResearchQuestion,
) -> Result<AnswerDraft, KnowledgeError> {
    let node = |n: &str| format!("q{index}/{n}");
    let objectives = ctx.objectives.as_prompt_text();
    let cap = ctx.config.eval_cap.max(1);

    let graph = Graph::new(format!("answer-q{index}"))
        .start("retrieve")
        .function("retrieve", |s: &mut QuestionState| {
            let hits = ctx
                .store
                .query(ctx.embedder, &s.question.text, ctx.config.retrieve_k.max(1), &ctx.config.collections)
                .map_err(NodeError::wrap)?;
            if is_insufficient(&hits, ctx.config.retrieve_k.max(1), ctx.config.insufficient_score) {
                s.retrieval_note = Some(format!(
                    "Local retrieval was thin for this question ({} passage(s), best score {:.3}). Web search may be needed.",
                    hits.len(),
                    hits.first().map_or(0.0, |h| h.score)
                ));
            }
            s.evidence.extend(hits.iter().map(Evidence::from_chunk));
            s.outcomes.push(ActionOutcome {
                step_index: 0,
                tool_name: RETRIEVE_TOOL.into(),
                arguments: [("query".to_string(), s.question.text.clone())].into(),
                output: format_chunks(&hits),
            });
            Ok("ok".into())
        })
        .agent("generate", |s: &mut QuestionState| {
            let rendered = ctx
                .env
                .render(RoleTag::Generation, &[("objectives", &objectives), ("question", &s.question.text)])
                .map_err(NodeError::wrap)?;
            let task = assemble(&rendered, &s.outcomes, None).map_err(NodeError::wrap)?.text;
            s.answer = match ctx.env.run(PIPELINE, &node("generation"), &generation_agent(), &task, None) {
                Ok(out) => out.response.payload.get("answer").and_then(Value::as_str).unwrap_or("").to_string(),
                Err(e @ (AgentError::SchemaViolation { .. } | AgentError::StepCapExceeded { .. })) => {
                    log::warn!("question {index}: generation failed: {e}");
                    format!("(no answer was produced: {e})")
                }
                Err(e) => return Err(NodeError::wrap(e)),
            };
            Ok("ok".into())
        })
        .agent("evaluate", |s: &mut QuestionState| {
            let subject = format!("Question: {}\n\nAnswer:\n{}", s.question.text, s.answer);
            let rendered = ctx
                .env
                .render(
                    RoleTag::Evaluation,
                    &[
                        ("objectives", &objectives),
                        ("subject_kind", "Answer"),
                        ("subject", &subject),
                        ("criteria", ANSWER_CRITERIA),
                    ],
                )
                .map_err(NodeError::wrap)?;
            let task = assemble(&rendered, &s.outcomes, None).map_err(NodeError::wrap)?.text;
            let note = s.retrieval_note.clone().map(|body| AncillaryText {
                body,
                origin: "retrieval".into(),
            });
            s.rounds += 1;
            match ctx.env.run(PIPELINE, &node("evaluation"), &evaluation_agent(), &task, note) {
                Ok(out) => {
                    let (ok, feedback, query) = verdict_fields(&out.response.payload);
                    s.satisfied = ok;
                    s.feedback = feedback;
                    s.search_query = query;
                }
                // an evaluator that cannot produce a verdict counts as unsatisfied
                Err(e @ (AgentError::SchemaViolation { .. } | AgentError::StepCapExceeded { .. })) => {
                    s.satisfied = false;
                    s.feedback = format!("no valid verdict: {e}");
                    s.search_query = None;
                }
                Err(e) => return Err(NodeError::wrap(e)),
            }
            Ok("ok".into())
        })
        .decision("decide", &["satisfied", "search", "give_up"], move |s: &QuestionState| {
            if s.satisfied {
                "satisfied".into()
            } else if s.rounds >= cap {
                "give_up".into()
            } else {
                "search".into()
            }
        })
        .function("web_search", |s: &mut QuestionState| {
            let query = s.search_query.clone().unwrap_or_else(|| s.question.text.clone());
            let outcome = search_web(ctx.search, &query, ctx.config.max_search_results);
            if let Some(w) = &outcome.warning {
                log::warn!("question {index}: search `{query}`: {w}");
            }
            let text = format_results(&outcome);
            s.evidence.extend(outcome.results.iter().map(Evidence::from_web));
            s.outcomes.push(ActionOutcome {
                step_index: s.outcomes.len(),
                tool_name: SearchWebTool::NAME.into(),
                arguments: [("query".to_string(), query)].into(),
                output: text.clone(),
            });
            // the search output becomes the draft under evaluation
            s.answer = text;
            s.searches += 1;
            Ok("ok".into())
        })
        .terminal("done")
        .edge("retrieve", "ok", "generate")
        .edge("generate", "ok", "evaluate")
        .edge("evaluate", "ok", "decide")
        .edge("decide", "satisfied", "done")
        .edge("decide", "give_up", "done")
        .edge("decide", "search", "web_search")
        .edge("web_search", "ok", "evaluate");

    let initial = QuestionState {
        question: question.clone(),
        outcomes: Vec::new(),
        answer: String::new(),
        evidence: Vec::new(),
        rounds: 0,
        searches: 0,
        satisfied: false,
        feedback: String::new(),
        search_query: None,
        retrieval_note: None,
    };
    let caps = Caps::default().with("evaluate", cap);
    let x = execute(&graph, initial, &caps, ctx.env.session.clock().as_ref())?;
    ctx.env
        .session
        .write_side_file(PIPELINE, &format!("q{index}.trace.json"), &x.trace)
        .map_err(|e| KnowledgeError::Io(e.to_string()))?;
    match x.halt {
        Halt::Terminal { .. } => Ok(x.state.data.draft()),
        Halt::NodeFailed { .. } => Err(node_failure(x.error)),
        other => Err(KnowledgeError::Halted(format!("{other:?}"))),
    }
}

fn node_failure(e: Option<NodeError>) -> KnowledgeError {
    let Some(mut e) = e else {
        return KnowledgeError::Halted("node failed".into());
    };
    if let Some(src) = e.source.take() {
        match src.downcast::<AgentError>() {
            Ok(a) => return KnowledgeError::Agent(*a),
            Err(src) => match src.downcast::<KnowledgeError>() {
                Ok(k) => return *k,
                Err(_) => {}
            },
        }
    }
    KnowledgeError::Halted(e.message)
}

/// Drafts as shown to the review agent.
pub fn drafts_prompt_text(drafts: &[AnswerDraft]) -> String {
    let mut s = String::new();
    for (i, d) in drafts.iter().enumerate() {
        let status = if d.satisfied { "APPROVED" } else { "UNAPPROVED" };
        s.push_str(&format!("### Q{}: {} [{status}]\n{}\n", i + 1, d.question.text, d.answer.trim_end()));
        let locs: Vec<&str> = d.evidence.iter().map(Evidence::locator).collect();
        if !locs.is_empty() {
            s.push_str(&format!("Sources: {}\n", locs.join(", ")));
        }
        s.push('\n');
    }
    s
}

/// Unique evidence sources across drafts, in first-seen order.
pub fn collect_sources(drafts: &[AnswerDraft]) -> Vec<Source> {
    let mut seen = BTreeSet::new();
    drafts
        .iter()
        .flat_map(|d| d.evidence.iter())
        .filter(|e| seen.insert(e.locator().to_string()))
        .map(Evidence::source)
        .collect()
}

pub fn synthesize_review(ctx: &KnowledgeContext<'_>, drafts: &[AnswerDraft]) -> Result<LiteratureReview, KnowledgeError> {
    if drafts.is_empty() {
        return Err(KnowledgeError::NoDrafts);
    }
    let objectives = ctx.objectives.as_prompt_text();
    let text = drafts_prompt_text(drafts);
    let task = ctx
        .env
        .render(RoleTag::Review, &[("objectives", &objectives), ("drafts", &text)])?;
    let out = ctx.env.run(PIPELINE, "review", &review_agent(), &task, None)?;
    let body = out.response.payload.get("body").and_then(Value::as_str).unwrap_or("").to_string();
    Ok(LiteratureReview {
        body,
        sources: collect_sources(drafts),
        caveats: drafts.iter().filter(|d| !d.satisfied).map(|d| d.question.text.clone()).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct KnowledgeOutput {
    pub questions: Vec<ResearchQuestion>,
    pub drafts: Vec<AnswerDraft>,
    pub review: LiteratureReview,
    pub trace: ExecutionTrace,
}

impl fmt::Display for KnowledgeOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ok = self.drafts.iter().filter(|d| d.satisfied).count();
        write!(
            f,
            "{} question(s), {ok} approved answer(s), {} source(s)",
            self.questions.len(),
            self.review.sources.len()
        )
    }
}

#[derive(Debug, Default)]
struct TopState {
    questions: Vec<ResearchQuestion>,
    drafts: Vec<AnswerDraft>,
    review: Option<LiteratureReview>,
}

fn answer_all(ctx: &KnowledgeContext<'_>, questions: &[ResearchQuestion]) -> Result<Vec<AnswerDraft>, KnowledgeError> {
    if !ctx.config.parallel {
        return questions.iter().enumerate().map(|(i, q)| answer_with_evaluation(ctx, i, q)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = questions
            .iter()
            .enumerate()
            .map(|(i, q)| scope.spawn(move || answer_with_evaluation(ctx, i, q)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(KnowledgeError::Halted("answer thread panicked".into()))))
            .collect()
    })
}

/// The whole knowledge graph; writes the review and drafts into `out_dir`.
pub fn run_knowledge(ctx: &KnowledgeContext<'_>, out_dir: &Path) -> Result<KnowledgeOutput, KnowledgeError> {
    let graph = Graph::new("knowledge")
        .start("generate_questions")
        .agent("generate_questions", |s: &mut TopState| {
            s.questions = generate_questions(ctx).map_err(NodeError::wrap)?;
            Ok("ok".into())
        })
        .function("answer_questions", |s: &mut TopState| {
            s.drafts = answer_all(ctx, &s.questions).map_err(NodeError::wrap)?;
            Ok("ok".into())
        })
        .agent("review_generation", |s: &mut TopState| {
            s.review = Some(synthesize_review(ctx, &s.drafts).map_err(NodeError::wrap)?);
            Ok("ok".into())
        })
        .function("write_outputs", |s: &mut TopState| {
            let review = s.review.as_ref().expect("review precedes writing");
            write_outputs(out_dir, &ctx.objectives.project_name, review, &s.drafts).map_err(NodeError::wrap)?;
            Ok("ok".into())
        })
        .terminal("done")
        .edge("generate_questions", "ok", "answer_questions")
        .edge("answer_questions", "ok", "review_generation")
        .edge("review_generation", "ok", "write_outputs")
        .edge("write_outputs", "ok", "done");
    let x = execute(&graph, TopState::default(), &Caps::default(), ctx.env.session.clock().as_ref())?;
    ctx.env
        .session
        .write_side_file(PIPELINE, "trace.json", &x.trace)
        .map_err(|e| KnowledgeError::Io(e.to_string()))?;
    match x.halt {
        Halt::Terminal { .. } => {
            let s = x.state.data;
            Ok(KnowledgeOutput {
                questions: s.questions,
                drafts: s.drafts,
                review: s.review.expect("review produced"),
                trace: x.trace,
            })
        }
        Halt::NodeFailed { .. } => Err(node_failure(x.error)),
        other => Err(KnowledgeError::Halted(format!("{other:?}"))),
    }
}

pub fn write_outputs(
    out_dir: &Path,
    project_name: &str,
    review: &LiteratureReview,
    drafts: &[AnswerDraft],
) -> Result<(), KnowledgeError> {
    let io = |e: std::io::Error| KnowledgeError::Io(e.to_string());
    std::fs::create_dir_all(out_dir).map_err(io)?;
    std::fs::write(out_dir.join(REVIEW_FILE), review.to_markdown(project_name)).map_err(io)?;
    let json = serde_json::to_string_pretty(drafts).map_err(|e| KnowledgeError::Io(e.to_string()))?;
    std::fs::write(out_dir.join(DRAFTS_FILE), json + "\n").map_err(io)?;
    Ok(())
}

/// Reads back a review written by [`write_outputs`], without its title line.
pub fn read_review_body(out_dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(out_dir.join(REVIEW_FILE)).ok()?;
    Some(match text.split_once('\n') {
        Some((first, rest)) if first.starts_with("# ") => rest.trim_start().to_string(),
        _ => text,
    })
}
