//! Hardware design: system design with an evaluation/redesign loop, module
//! ordering, per-module coding agents, integration with a final evaluation
//! loop, and file generation.

pub mod emit;
pub mod order;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError};
use crate::checks::{self, CheckConfig, CheckReport, DesignSnapshot, PLACEHOLDER_MARKER};
use crate::gateway::ModelRole;
use crate::graph::{execute, Caps, ExecutionTrace, Graph, GraphError, Halt, NodeError};
use crate::model::{
    validate_module_artifact, validate_system_design, DesignObjectives, Metric, ModuleArtifact, ModuleSpec,
    SystemDesignGraph, Verdict,
};
use crate::prompt::{AncillaryText, PromptError, RoleTag};
use crate::schema::builtin;
use crate::session::AgentEnv;
use crate::tools::{PythonRunTool, RetrieveTool, SearchWebTool, THOUGHT_TOOL};

pub use emit::{emit_files, read_manifest, verify_manifest, EmitError, IntegratedDesign, Manifest};
pub use order::{degrees, order_modules, ModuleOrder};

pub const PIPELINE: &str = "design";

const DESIGN_CRITERIA: &str = "the modules and their connections form a logically sound system that meets every \
goal and requirement; each module has a clear responsibility, a complete port list and a usable code template";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Design evaluations before the run is abandoned.
    pub design_eval_cap: usize,
    /// Final evaluations before the design is emitted unapproved.
    pub final_eval_cap: usize,
    pub max_modules: usize,
    /// Tools offered to module designers.
    pub module_tools: Vec<String>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            design_eval_cap: 3,
            final_eval_cap: 3,
            max_modules: 32,
            module_tools: vec![
                THOUGHT_TOOL.to_string(),
                SearchWebTool::NAME.to_string(),
                PythonRunTool::NAME.to_string(),
                RetrieveTool::NAME.to_string(),
            ],
        }
    }
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid objectives: {}", .0.join("; "))]
    InvalidObjectives(Vec<String>),
    #[error("system design invalid after a corrective retry: {}", .0.join("; "))]
    InvalidDesign(Vec<String>),
    #[error("integrator returned no usable top module: {0}")]
    InvalidTop(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error("design pipeline halted: {0}")]
    Halted(String),
    #[error("writing outputs: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "kebab-case")]
pub enum DesignStatus {
    /// Final evaluator approved the design.
    Approved,
    /// Emitted after the final-evaluation cap without approval.
    Unapproved,
    /// The system design was never approved; nothing was coded.
    DesignNotApproved,
    /// A module designer failed; earlier modules were written.
    ModuleFailed(String),
}

impl fmt::Display for DesignStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignStatus::Approved => f.write_str("approved"),
            DesignStatus::Unapproved => f.write_str("emitted without final approval"),
            DesignStatus::DesignNotApproved => f.write_str("system design not approved"),
            DesignStatus::ModuleFailed(m) => write!(f, "module `{m}` failed"),
        }
    }
}

/// Everything the design pipeline reads.
pub struct DesignContext<'a> {
    pub env: AgentEnv<'a>,
    pub objectives: &'a DesignObjectives,
    /// Literature review body.
    pub review: &'a str,
    pub config: DesignConfig,
    pub checks: CheckConfig,
    /// Prefix for side files (traces) of this run.
    pub run_label: String,
}

#[derive(Debug, Clone)]
pub struct DesignRun {
    pub status: DesignStatus,
    pub graph: SystemDesignGraph,
    pub order: ModuleOrder,
    pub design: Option<IntegratedDesign>,
    pub manifest: Option<Manifest>,
    pub report: Option<CheckReport>,
    pub design_evaluations: usize,
    pub final_evaluations: usize,
    pub trace: ExecutionTrace,
}

fn design_agent(role: RoleTag) -> AgentConfig {
    AgentConfig::new(role, ModelRole::Generator, builtin::system_design()).with_tools(&[THOUGHT_TOOL])
}

fn evaluator(role: RoleTag) -> AgentConfig {
    AgentConfig::new(role, ModelRole::Evaluator, builtin::verdict()).format_retries(1)
}

fn module_agent(tools: &[String]) -> AgentConfig {
    let names: Vec<&str> = tools.iter().map(String::as_str).collect();
    AgentConfig::new(RoleTag::ModuleDesign, ModelRole::Generator, builtin::code_module()).with_tools(&names)
}

fn integration_agent() -> AgentConfig {
    AgentConfig::new(RoleTag::Integration, ModelRole::Generator, builtin::integration()).with_tools(&[THOUGHT_TOOL])
}

fn graph_json(g: &SystemDesignGraph) -> String {
    serde_json::to_string_pretty(g).expect("graph serializes")
}

fn graph_from_payload(payload: &Map<String, Value>) -> Result<SystemDesignGraph, String> {
    let modules = payload.get("graph").cloned().unwrap_or(Value::Array(vec![]));
    serde_json::from_value::<Vec<ModuleSpec>>(modules)
        .map(|modules| SystemDesignGraph { modules })
        .map_err(|e| e.to_string())
}

/// Verdict from a Verdict-tool payload; unknown metric names are ignored.
pub fn verdict_from_payload(payload: &Map<String, Value>) -> Verdict {
    let metric_flags = payload
        .get("metric_flags")
        .and_then(Value::as_object)
        .map(|m| {
            m.iter()
                .filter_map(|(k, v)| Some((Metric::parse(k)?, v.as_bool()?)))
                .collect()
        })
        .unwrap_or_default();
    Verdict {
        satisfactory: payload.get("satisfactory").and_then(Value::as_bool).unwrap_or(false),
        feedback: payload.get("feedback").and_then(Value::as_str).unwrap_or("").to_string(),
        metric_flags,
    }
}

fn problems(graph: &SystemDesignGraph, max_modules: usize) -> Vec<String> {
    let mut out: Vec<String> = validate_system_design(graph).iter().map(ToString::to_string).collect();
    if graph.modules.len() > max_modules {
        out.push(format!("{} modules exceed the limit of {max_modules}", graph.modules.len()));
    }
    out
}

/// Runs a design-producing agent; on an invalid graph, asks once more with
/// the violations in the ancillary slot.
fn obtain_design(
    ctx: &DesignContext<'_>,
    node: &str,
    role: RoleTag,
    task: &str,
    ancillary: Option<AncillaryText>,
) -> Result<SystemDesignGraph, DesignError> {
    let config = design_agent(role);
    let mut note = ancillary.clone();
    let mut last = Vec::new();
    for attempt in 0..2 {
        let out = ctx.env.run(PIPELINE, node, &config, task, note.clone())?;
        let issues = match graph_from_payload(&out.response.payload) {
            Ok(g) => {
                let p = problems(&g, ctx.config.max_modules);
                if p.is_empty() {
                    return Ok(g);
                }
                p
            }
            Err(e) => vec![format!("graph does not parse: {e}")],
        };
        log::warn!("{node}: attempt {} produced an invalid design: {}", attempt + 1, issues.join("; "));
        let mut body = String::new();
        if let Some(a) = &ancillary {
            body.push_str(&a.body);
            body.push_str("\n\n");
        }
        body.push_str("Your previous design was rejected by validation. Fix these problems:\n");
        for i in &issues {
            body.push_str(&format!("- {i}\n"));
        }
        note = Some(AncillaryText { body, origin: "design-validation".into() });
        last = issues;
    }
    Err(DesignError::InvalidDesign(last))
}

/// System-level design from objectives and the literature review.
pub fn system_design(ctx: &DesignContext<'_>) -> Result<SystemDesignGraph, DesignError> {
    let objectives = ctx.objectives.as_prompt_text();
    let task = ctx.env.render(RoleTag::SystemDesign, &[("objectives", &objectives), ("review", ctx.review)])?;
    obtain_design(ctx, "system_design", RoleTag::SystemDesign, &task, None)
}

/// Revised design; the evaluator's feedback goes in the ancillary slot verbatim.
pub fn redesign(ctx: &DesignContext<'_>, graph: &SystemDesignGraph, feedback: &str) -> Result<SystemDesignGraph, DesignError> {
    let objectives = ctx.objectives.as_prompt_text();
    let design = graph_json(graph);
    let task = ctx.env.render(
        RoleTag::Redesign,
        &[("objectives", &objectives), ("review", ctx.review), ("design", &design)],
    )?;
    let note = AncillaryText { body: feedback.to_string(), origin: "design-evaluation".into() };
    obtain_design(ctx, "redesign", RoleTag::Redesign, &task, Some(note))
}

/// Evaluator verdict on a system design. An evaluator that cannot produce a
/// valid verdict counts as a rejection.
pub fn evaluate_design(ctx: &DesignContext<'_>, graph: &SystemDesignGraph) -> Result<Verdict, DesignError> {
    let objectives = ctx.objectives.as_prompt_text();
    let subject = graph_json(graph);
    let task = ctx.env.render(
        RoleTag::Evaluation,
        &[
            ("objectives", &objectives),
            ("subject_kind", "System design"),
            ("subject", &subject),
            ("criteria", DESIGN_CRITERIA),
        ],
    )?;
    let findings = checks::check_interfaces_graph(graph);
    let note = (!findings.is_empty()).then(|| AncillaryText {
        body: format!(
            "Interface check findings:\n{}",
            findings.iter().map(|f| format!("- {f}")).collect::<Vec<_>>().join("\n")
        ),
        origin: "interface-check".into(),
    });
    match ctx.env.run(PIPELINE, "design_evaluation", &evaluator(RoleTag::Evaluation), &task, note) {
        Ok(out) => Ok(verdict_from_payload(&out.response.payload)),
        Err(e @ (AgentError::SchemaViolation { .. } | AgentError::StepCapExceeded { .. })) => Ok(Verdict {
            satisfactory: false,
            feedback: format!("no valid verdict: {e}"),
            metric_flags: BTreeMap::new(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// What later modules see of earlier ones: name, description and ports.
pub fn prior_context(prior: &[&ModuleArtifact]) -> Option<AncillaryText> {
    if prior.is_empty() {
        return None;
    }
    let mut body = String::from("Modules designed so far:\n");
    for a in prior {
        body.push_str(&format!("- {}: {}\n", a.name, a.description.trim()));
        if a.ports.is_empty() {
            body.push_str("  ports: (none declared)\n");
        }
        for p in &a.ports {
            body.push_str(&format!("  port: {p}\n"));
        }
    }
    Some(AncillaryText { body, origin: "prior-modules".into() })
}

fn spec_text(spec: &ModuleSpec) -> String {
    let mut s = format!("Name: {}\nDescription: {}\n", spec.name, spec.description);
    if !spec.connections.is_empty() {
        s.push_str(&format!("Connections: {}\n", spec.connections.join(", ")));
    }
    s.push_str("Ports:\n");
    for p in &spec.ports {
        s.push_str(&format!("- {p}\n"));
    }
    s.push_str(&format!("Template:\n{}\n", spec.template));
    s
}

fn artifact_from_payload(payload: &Map<String, Value>) -> Result<ModuleArtifact, String> {
    serde_json::from_value(Value::Object(payload.clone())).map_err(|e| e.to_string())
}

/// Designs one module given the modules already designed, in order.
pub fn design_module(
    ctx: &DesignContext<'_>,
    spec: &ModuleSpec,
    prior: &[&ModuleArtifact],
) -> Result<ModuleArtifact, DesignError> {
    let objectives = ctx.objectives.as_prompt_text();
    let spec_text = spec_text(spec);
    let task = ctx.env.render(
        RoleTag::ModuleDesign,
        &[
            ("objectives", &objectives),
            ("review", ctx.review),
            ("module_name", &spec.name),
            ("module_spec", &spec_text),
        ],
    )?;
    let node = format!("module/{}", spec.name);
    let out = ctx.env.run(PIPELINE, &node, &module_agent(&ctx.config.module_tools), &task, prior_context(prior))?;
    let mut a = artifact_from_payload(&out.response.payload).map_err(|e| DesignError::Halted(format!("{node}: {e}")))?;
    if a.name != spec.name {
        log::warn!("{node}: artifact named `{}`, renaming to `{}`", a.name, spec.name);
        a.name = spec.name.clone();
    }
    if a.ports.is_empty() {
        a.ports = spec.ports.clone();
    }
    if a.connections.is_empty() {
        a.connections = spec.connections.clone();
    }
    for v in validate_module_artifact(&a, spec) {
        log::warn!("{node}: {v}");
    }
    Ok(a)
}

fn artifact_text(a: &ModuleArtifact, label: &str) -> String {
    format!(
        "## {label} `{}`\n{}\nPorts: {}\n\n// {}.h\n{}\n\n// {}.cpp\n{}\n\n// {}_tb.cpp\n{}\n",
        a.name,
        a.description,
        a.ports.join("; "),
        a.name,
        a.header_file.trim_end(),
        a.name,
        a.module_code.trim_end(),
        a.name,
        a.test_bench_code.trim_end()
    )
}

/// Lines carrying the placeholder marker, as `file:line: text`.
pub fn placeholder_list(snapshot: &DesignSnapshot) -> Vec<String> {
    checks::check_completeness(snapshot)
        .into_iter()
        .filter(|f| f.message.starts_with("placeholder"))
        .map(|f| f.to_string())
        .collect()
}

/// Integration: the top module plus any rewritten modules.
pub fn integrate(
    ctx: &DesignContext<'_>,
    graph: &SystemDesignGraph,
    order: &ModuleOrder,
    artifacts: &BTreeMap<String, ModuleArtifact>,
    feedback: Option<&str>,
) -> Result<IntegratedDesign, DesignError> {
    let objectives = ctx.objectives.as_prompt_text();
    let modules: String = order
        .iter()
        .filter_map(|n| artifacts.get(n))
        .map(|a| artifact_text(a, "Module"))
        .collect::<Vec<_>>()
        .join("\n");
    let design = graph_json(graph);
    let task = ctx.env.render(
        RoleTag::Integration,
        &[("objectives", &objectives), ("system_design", &design), ("modules", &modules)],
    )?;
    let snapshot = DesignSnapshot {
        graph: graph.clone(),
        modules: artifacts.values().cloned().collect(),
        ..Default::default()
    };
    let mut body = String::new();
    if let Some(f) = feedback {
        body.push_str(&format!("Final evaluator feedback:\n{f}\n\n"));
    }
    let marks = placeholder_list(&snapshot);
    if !marks.is_empty() {
        body.push_str(&format!("Remaining {PLACEHOLDER_MARKER} markers to replace with real code:\n"));
        for m in &marks {
            body.push_str(&format!("- {m}\n"));
        }
    }
    let note = (!body.is_empty()).then(|| AncillaryText { body: body.trim_end().to_string(), origin: "integration".into() });
    let out = ctx.env.run(PIPELINE, "integration", &integration_agent(), &task, note)?;
    let payload = &out.response.payload;

    let tops = payload.get("top_module").and_then(Value::as_array).cloned().unwrap_or_default();
    if tops.len() > 1 {
        log::warn!("integration returned {} top modules; using the first", tops.len());
    }
    let top = tops.into_iter().next().ok_or_else(|| DesignError::InvalidTop("empty top_module".into()))?;
    let top_module: ModuleArtifact = serde_json::from_value(top).map_err(|e| DesignError::InvalidTop(e.to_string()))?;
    if artifacts.contains_key(&top_module.name) {
        return Err(DesignError::InvalidTop(format!("top module `{}` shadows a module", top_module.name)));
    }
    let mut merged = artifacts.clone();
    for m in payload.get("modules").and_then(Value::as_array).into_iter().flatten() {
        match serde_json::from_value::<ModuleArtifact>(m.clone()) {
            Ok(mut a) if merged.contains_key(&a.name) => {
                let old = &merged[&a.name];
                if a.ports.is_empty() {
                    a.ports = old.ports.clone();
                }
                if a.connections.is_empty() {
                    a.connections = old.connections.clone();
                }
                merged.insert(a.name.clone(), a);
            }
            Ok(a) => log::warn!("integration rewrote unknown module `{}`; ignored", a.name),
            Err(e) => log::warn!("integration returned an unreadable module: {e}"),
        }
    }
    Ok(IntegratedDesign { artifacts: merged, top_module })
}

/// Final verdict with the mechanical check report in the ancillary slot.
pub fn final_evaluate(
    ctx: &DesignContext<'_>,
    graph: &SystemDesignGraph,
    order: &ModuleOrder,
    design: &IntegratedDesign,
) -> Result<(Verdict, CheckReport), DesignError> {
    let objectives = ctx.objectives.as_prompt_text();
    let mut text = artifact_text(&design.top_module, "Top module");
    for n in order.iter() {
        if let Some(a) = design.artifacts.get(n) {
            text.push('\n');
            text.push_str(&artifact_text(a, "Module"));
        }
    }
    let task = ctx.env.render(RoleTag::FinalEval, &[("objectives", &objectives), ("design", &text)])?;
    let report = checks::report(&design.snapshot(graph), &ctx.checks);
    let note = AncillaryText { body: format!("Mechanical checks:\n{}", report.to_table()), origin: "design-checks".into() };
    let verdict = match ctx.env.run(PIPELINE, "final_evaluation", &evaluator(RoleTag::FinalEval), &task, Some(note)) {
        Ok(out) => verdict_from_payload(&out.response.payload),
        Err(e @ (AgentError::SchemaViolation { .. } | AgentError::StepCapExceeded { .. })) => Verdict {
            satisfactory: false,
            feedback: format!("no valid verdict: {e}"),
            metric_flags: BTreeMap::new(),
        },
        Err(e) => return Err(e.into()),
    };
    Ok((verdict, report))
}

#[derive(Debug, Default)]
struct DesignState {
    graph: SystemDesignGraph,
    verdict: Verdict,
    design_evals: usize,
    order: ModuleOrder,
    next: usize,
    artifacts: BTreeMap<String, ModuleArtifact>,
    failed_module: Option<String>,
    design: Option<IntegratedDesign>,
    final_verdict: Verdict,
    final_evals: usize,
    manifest: Option<Manifest>,
    report: Option<CheckReport>,
}

fn wrap(e: DesignError) -> NodeError {
    NodeError::wrap(e)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DesignError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| DesignError::Io(e.to_string()))? + "\n";
    std::fs::write(path, text).map_err(|e| DesignError::Io(format!("{}: {e}", path.display())))
}

/// Partial outputs of an aborted run: the graph and any finished modules.
fn write_partial(out_dir: &Path, s: &DesignState) -> Result<(), DesignError> {
    std::fs::create_dir_all(out_dir).map_err(|e| DesignError::Io(e.to_string()))?;
    write_json(&out_dir.join(emit::SYSTEM_DESIGN_FILE), &s.graph)?;
    let snap = DesignSnapshot { modules: s.artifacts.values().cloned().collect(), ..Default::default() };
    snap.materialize(out_dir).map_err(|e| DesignError::Io(e.to_string()))
}

/// The whole design graph. Outputs go to `out_dir`.
pub fn run_design(ctx: &DesignContext<'_>, out_dir: &Path) -> Result<DesignRun, DesignError> {
    let problems = ctx.objectives.problems();
    if !problems.is_empty() {
        return Err(DesignError::InvalidObjectives(problems));
    }
    let eval_cap = ctx.config.design_eval_cap.max(1);
    let final_cap = ctx.config.final_eval_cap.max(1);
    let max_modules = ctx.config.max_modules.max(1);

    let graph = Graph::new("design")
        .start("system_design")
        .agent("system_design", |s: &mut DesignState| {
            s.graph = system_design(ctx).map_err(wrap)?;
            Ok("ok".into())
        })
        .agent("design_evaluation", |s: &mut DesignState| {
            s.verdict = evaluate_design(ctx, &s.graph).map_err(wrap)?;
            s.design_evals += 1;
            Ok("ok".into())
        })
        .decision("design_decision", &["approve", "redesign", "abort"], move |s: &DesignState| {
            if s.verdict.satisfactory {
                "approve".into()
            } else if s.design_evals >= eval_cap {
                "abort".into()
            } else {
                "redesign".into()
            }
        })
        .agent("redesign", |s: &mut DesignState| {
            s.graph = redesign(ctx, &s.graph, &s.verdict.feedback).map_err(wrap)?;
            Ok("ok".into())
        })
        .function("topological_sort", |s: &mut DesignState| {
            s.order = order_modules(&s.graph);
            s.next = 0;
            Ok("ok".into())
        })
        .agent("module_design", |s: &mut DesignState| {
            let name = s.order.names[s.next].clone();
            let spec = s.graph.module(&name).expect("ordered names come from the graph").clone();
            let prior: Vec<&ModuleArtifact> = s.order.names[..s.next].iter().map(|n| &s.artifacts[n]).collect();
            match design_module(ctx, &spec, &prior) {
                Ok(a) => {
                    s.artifacts.insert(name, a);
                    s.next += 1;
                    Ok(if s.next < s.order.len() { "more" } else { "done" }.into())
                }
                Err(DesignError::Agent(e @ (AgentError::SchemaViolation { .. } | AgentError::StepCapExceeded { .. }))) => {
                    log::error!("module `{name}` failed: {e}");
                    s.failed_module = Some(name);
                    Ok("failed".into())
                }
                Err(e) => Err(wrap(e)),
            }
        })
        .agent("integration", |s: &mut DesignState| {
            let feedback = (s.final_evals > 0).then(|| s.final_verdict.feedback.clone());
            s.design = Some(integrate(ctx, &s.graph, &s.order, &s.artifacts, feedback.as_deref()).map_err(wrap)?);
            Ok("ok".into())
        })
        .agent("final_evaluation", |s: &mut DesignState| {
            let design = s.design.as_ref().expect("integration precedes evaluation");
            let (v, report) = final_evaluate(ctx, &s.graph, &s.order, design).map_err(wrap)?;
            s.final_verdict = v;
            s.report = Some(report);
            s.final_evals += 1;
            Ok("ok".into())
        })
        .decision("final_decision", &["approve", "retry", "give_up"], move |s: &DesignState| {
            if s.final_verdict.satisfactory {
                "approve".into()
            } else if s.final_evals >= final_cap {
                "give_up".into()
            } else {
                "retry".into()
            }
        })
        .function("generate_files", |s: &mut DesignState| {
            let design = s.design.as_ref().expect("integrated design present");
            let approved = s.final_verdict.satisfactory;
            let manifest = emit_files(out_dir, &ctx.objectives.project_name, &s.graph, &s.order.names, design, approved)
                .map_err(|e| wrap(e.into()))?;
            let mut snap = checks::load_design_dir(out_dir).map_err(NodeError::wrap)?;
            snap.root = Some(out_dir.to_path_buf());
            let report = checks::report(&snap, &ctx.checks);
            write_json(&out_dir.join(emit::REPORT_FILE), &report).map_err(wrap)?;
            s.report = Some(report);
            s.manifest = Some(manifest);
            Ok("ok".into())
        })
        .function("write_partial", |s: &mut DesignState| {
            write_partial(out_dir, s).map_err(wrap)?;
            Ok("ok".into())
        })
        .terminal("done")
        .terminal("aborted")
        .edge("system_design", "ok", "design_evaluation")
        .edge("design_evaluation", "ok", "design_decision")
        .edge("design_decision", "approve", "topological_sort")
        .edge("design_decision", "redesign", "redesign")
        .edge("design_decision", "abort", "write_partial")
        .edge("redesign", "ok", "design_evaluation")
        .edge("topological_sort", "ok", "module_design")
        .edge("module_design", "more", "module_design")
        .edge("module_design", "done", "integration")
        .edge("module_design", "failed", "write_partial")
        .edge("integration", "ok", "final_evaluation")
        .edge("final_evaluation", "ok", "final_decision")
        .edge("final_decision", "approve", "generate_files")
        .edge("final_decision", "give_up", "generate_files")
        .edge("final_decision", "retry", "integration")
        .edge("generate_files", "ok", "done")
        .edge("write_partial", "ok", "aborted");

    let caps = Caps::default()
        .with("design_evaluation", eval_cap)
        .with("redesign", eval_cap)
        .with("module_design", max_modules)
        .with("integration", final_cap)
        .with("final_evaluation", final_cap);
    let x = execute(&graph, DesignState::default(), &caps, ctx.env.session.clock().as_ref())?;
    ctx.env
        .session
        .write_side_file(PIPELINE, &format!("{}trace.json", ctx.run_label), &x.trace)
        .map_err(|e| DesignError::Io(e.to_string()))?;
    match x.halt {
        Halt::Terminal { .. } => {
            let s = x.state.data;
            let status = if let Some(m) = s.failed_module.clone() {
                DesignStatus::ModuleFailed(m)
            } else if s.design.is_none() {
                DesignStatus::DesignNotApproved
            } else if s.final_verdict.satisfactory {
                DesignStatus::Approved
            } else {
                DesignStatus::Unapproved
            };
            Ok(DesignRun {
                status,
                graph: s.graph,
                order: s.order,
                design: s.design,
                manifest: s.manifest,
                report: s.report,
                design_evaluations: s.design_evals,
                final_evaluations: s.final_evals,
                trace: x.trace,
            })
        }
        Halt::NodeFailed { .. } => Err(node_failure(x.error)),
        other => Err(DesignError::Halted(format!("{other:?}"))),
    }
}

fn node_failure(e: Option<NodeError>) -> DesignError {
    let Some(mut e) = e else {
        return DesignError::Halted("node failed".into());
    };
    if let Some(src) = e.source.take() {
        match src.downcast::<DesignError>() {
            Ok(d) => return *d,
            Err(src) => {
                if let Ok(a) = src.downcast::<AgentError>() {
                    return DesignError::Agent(*a);
                }
            }
        }
    }
    DesignError::Halted(e.message)
}
