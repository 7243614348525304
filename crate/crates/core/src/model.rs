//! Domain types shared by every pipeline stage.
//!
//! All of these are plain values that serialize to JSON with snake_case
//! field names. Structural validation returns violations as data; nothing
//! in this module fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Name reserved for the integrated top-level module.
pub const TOP_MODULE_DIR: &str = "top";

/// Returns true when `name` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Root input of both pipelines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignObjectives {
    pub project_name: String,
    pub goals: Vec<String>,
    pub requirements: Vec<String>,
}

impl DesignObjectives {
    /// Human-readable problems with the objectives; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !is_identifier(&self.project_name) {
            out.push(format!(
                "project_name `{}` is not an identifier",
                self.project_name
            ));
        }
        if self.goals.iter().all(|g| g.trim().is_empty()) {
            out.push("goals must not be empty".to_string());
        }
        if self.requirements.iter().all(|r| r.trim().is_empty()) {
            out.push("requirements must not be empty".to_string());
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.problems().is_empty()
    }

    /// Goals and requirements as a bulleted block for prompts.
    pub fn as_prompt_text(&self) -> String {
        let mut s = format!("Project: {}\n\nGoals:\n", self.project_name);
        for g in &self.goals {
            s.push_str("- ");
            s.push_str(g);
            s.push('\n');
        }
        s.push_str("\nRequirements:\n");
        for r in &self.requirements {
            s.push_str("- ");
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

/// One module of the system-level design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub connections: Vec<String>,
    #[serde(default)]
    pub ports: Vec<String>,
    pub template: String,
    /// Optional producer modules; when any module carries these, ordering
    /// becomes a topological sort over them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depends_on: Vec<String>,
}

/// The system graph: the list of modules produced by system design.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SystemDesignGraph {
    pub modules: Vec<ModuleSpec>,
}

impl SystemDesignGraph {
    pub fn module(&self, name: &str) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.modules.iter().map(|m| m.name.as_str()).collect()
    }
}

/// A finished module, as returned through the code-module response tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleArtifact {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub connections: Vec<String>,
    #[serde(default)]
    pub ports: Vec<String>,
    pub module_code: String,
    pub header_file: String,
    pub test_bench_code: String,
}

/// The six evaluation metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SystemDesign,
    Syntax,
    Interface,
    Completeness,
    Optimization,
    Synthesizable,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::SystemDesign,
        Metric::Syntax,
        Metric::Interface,
        Metric::Completeness,
        Metric::Optimization,
        Metric::Synthesizable,
    ];

    /// Metrics scored mechanically (system design needs a human).
    pub const AUTOMATED: [Metric; 5] = [
        Metric::Syntax,
        Metric::Interface,
        Metric::Completeness,
        Metric::Optimization,
        Metric::Synthesizable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::SystemDesign => "system_design",
            Metric::Syntax => "syntax",
            Metric::Interface => "interface",
            Metric::Completeness => "completeness",
            Metric::Optimization => "optimization",
            Metric::Synthesizable => "synthesizable",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An evaluator's judgement.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub satisfactory: bool,
    #[serde(default)]
    pub feedback: String,
    #[serde(default)]
    pub metric_flags: BTreeMap<Metric, bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub title: String,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureReview {
    pub body: String,
    pub sources: Vec<Source>,
    /// Questions whose answers were never approved by the evaluator.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
}

impl LiteratureReview {
    /// Markdown rendering written to `knowledge/literature_review.md`.
    pub fn to_markdown(&self, project_name: &str) -> String {
        let mut md = format!("# Literature review: {project_name}\n\n");
        md.push_str(self.body.trim_end());
        md.push('\n');
        if !self.caveats.is_empty() {
            md.push_str("\n## Caveats\n\n");
            for c in &self.caveats {
                md.push_str("> Unapproved answer: ");
                md.push_str(c);
                md.push('\n');
            }
        }
        md.push_str("\n## Sources\n\n");
        if self.sources.is_empty() {
            md.push_str("(none)\n");
        }
        for (i, s) in self.sources.iter().enumerate() {
            md.push_str(&format!("{}. {} <{}>\n", i + 1, s.title, s.locator));
        }
        md
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    EmptyGraph,
    InvalidName,
    ReservedName,
    DuplicateName,
    DanglingConnection,
    SelfConnection,
    DanglingDependency,
    EmptyTemplate,
    MissingCode,
    MissingHeader,
    MissingTestbench,
    NameMismatch,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::EmptyGraph => "empty-graph",
            ViolationKind::InvalidName => "invalid-name",
            ViolationKind::ReservedName => "reserved-name",
            ViolationKind::DuplicateName => "duplicate-name",
            ViolationKind::DanglingConnection => "dangling-connection",
            ViolationKind::SelfConnection => "self-connection",
            ViolationKind::DanglingDependency => "dangling-dependency",
            ViolationKind::EmptyTemplate => "empty-template",
            ViolationKind::MissingCode => "missing-code",
            ViolationKind::MissingHeader => "missing-header",
            ViolationKind::MissingTestbench => "missing-testbench",
            ViolationKind::NameMismatch => "name-mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub module: String,
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(module: &str, kind: ViolationKind, message: impl Into<String>) -> Self {
        Violation {
            module: module.to_string(),
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.module, self.kind.as_str(), self.message)
    }
}

/// Checks every structural invariant of a system design.
///
/// Duplicate names are reported once per duplicated name; dangling
/// references once per (module, target) pair.
pub fn validate_system_design(graph: &SystemDesignGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if graph.modules.is_empty() {
        out.push(Violation::new("", ViolationKind::EmptyGraph, "system design has no modules"));
        return out;
    }

    let mut seen = BTreeSet::new();
    let mut reported_dup = BTreeSet::new();
    for m in &graph.modules {
        if !seen.insert(m.name.as_str()) && reported_dup.insert(m.name.as_str()) {
            out.push(Violation::new(
                &m.name,
                ViolationKind::DuplicateName,
                format!("module name `{}` is used more than once", m.name),
            ));
        }
    }
    let names = seen;

    for m in &graph.modules {
        if !is_identifier(&m.name) {
            out.push(Violation::new(
                &m.name,
                ViolationKind::InvalidName,
                format!("module name `{}` is not an identifier", m.name),
            ));
        } else if m.name == TOP_MODULE_DIR {
            out.push(Violation::new(
                &m.name,
                ViolationKind::ReservedName,
                "`top` is reserved for the integrated top module",
            ));
        }
        if m.template.trim().is_empty() {
            out.push(Violation::new(&m.name, ViolationKind::EmptyTemplate, "code template is empty"));
        }
        let mut flagged = BTreeSet::new();
        for c in &m.connections {
            if c == &m.name {
                if flagged.insert(("self", c.as_str())) {
                    out.push(Violation::new(
                        &m.name,
                        ViolationKind::SelfConnection,
                        "module lists itself as a connection",
                    ));
                }
            } else if !names.contains(c.as_str()) && flagged.insert(("conn", c.as_str())) {
                out.push(Violation::new(
                    &m.name,
                    ViolationKind::DanglingConnection,
                    format!("connection `{c}` names no module in the graph"),
                ));
            }
        }
        for d in &m.depends_on {
            if (d == &m.name || !names.contains(d.as_str())) && flagged.insert(("dep", d.as_str())) {
                out.push(Violation::new(
                    &m.name,
                    ViolationKind::DanglingDependency,
                    format!("depends_on `{d}` names no other module in the graph"),
                ));
            }
        }
    }
    out
}

/// Checks a finished artifact against the spec it was designed from.
pub fn validate_module_artifact(artifact: &ModuleArtifact, spec: &ModuleSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if artifact.name != spec.name {
        out.push(Violation::new(
            &spec.name,
            ViolationKind::NameMismatch,
            format!("artifact is named `{}`, expected `{}`", artifact.name, spec.name),
        ));
    }
    if artifact.module_code.trim().is_empty() {
        out.push(Violation::new(&spec.name, ViolationKind::MissingCode, "module_code is empty"));
    }
    if artifact.header_file.trim().is_empty() {
        out.push(Violation::new(&spec.name, ViolationKind::MissingHeader, "header_file is empty"));
    }
    if artifact.test_bench_code.trim().is_empty() {
        out.push(Violation::new(
            &spec.name,
            ViolationKind::MissingTestbench,
            "test_bench_code is empty",
        ));
    }
    out
}
