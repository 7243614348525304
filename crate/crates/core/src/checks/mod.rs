//! Mechanized design rubric: interfaces, completeness, optimization pragmas,
//! syntax and synthesizability, aggregated into a six-metric report.
//!
//! Findings carry a severity. A metric fails when it has at least one
//! error-level finding; warnings are informational.

pub mod hook;
pub mod port;
pub mod source;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_system_design, Metric, ModuleArtifact, SystemDesignGraph, TOP_MODULE_DIR};
pub use hook::{HookError, HookRun, ToolHook};
pub use port::{parse_port, Direction, PortDecl};
use source::{Pragma, Scanned};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub metric: Metric,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
}

impl Finding {
    fn new(metric: Metric, severity: Severity, file: Option<&str>, line: Option<usize>, message: impl Into<String>) -> Self {
        Finding {
            metric,
            severity,
            file: file.map(str::to_string),
            line,
            message: message.into(),
        }
    }

    fn error(metric: Metric, file: Option<&str>, line: Option<usize>, message: impl Into<String>) -> Self {
        Finding::new(metric, Severity::Error, file, line, message)
    }

    fn warning(metric: Metric, file: Option<&str>, line: Option<usize>, message: impl Into<String>) -> Self {
        Finding::new(metric, Severity::Warning, file, line, message)
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match (&self.file, self.line) {
            (Some(file), Some(line)) => write!(f, "{file}:{line}: {sev}: {}", self.message),
            (Some(file), None) => write!(f, "{file}: {sev}: {}", self.message),
            _ => write!(f, "{sev}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricStatus {
    Pass,
    Fail,
    Skipped,
    NeedsHumanReview,
}

impl MetricStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricStatus::Pass => "pass",
            MetricStatus::Fail => "fail",
            MetricStatus::Skipped => "skipped",
            MetricStatus::NeedsHumanReview => "needs-human-review",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub status: MetricStatus,
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricReport {
    fn from_findings(metric: Metric, mut findings: Vec<Finding>, skipped: bool, notes: Vec<String>) -> Self {
        findings.sort();
        findings.dedup();
        let status = if skipped {
            MetricStatus::Skipped
        } else if findings.iter().any(Finding::is_error) {
            MetricStatus::Fail
        } else {
            MetricStatus::Pass
        };
        MetricReport { metric, status, findings, notes }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    /// One entry per metric, in `Metric::ALL` order.
    pub metrics: Vec<MetricReport>,
    /// Count of `#pragma HLS` directives by class.
    pub pragma_inventory: BTreeMap<String, usize>,
}

impl CheckReport {
    pub fn get(&self, metric: Metric) -> &MetricReport {
        self.metrics.iter().find(|m| m.metric == metric).expect("report holds every metric")
    }

    pub fn status(&self, metric: Metric) -> MetricStatus {
        self.get(metric).status
    }

    /// Number of automated metrics that pass (0..=5).
    pub fn score(&self) -> usize {
        Metric::AUTOMATED.iter().filter(|m| self.status(**m) == MetricStatus::Pass).count()
    }

    pub fn total_findings(&self) -> usize {
        self.metrics.iter().map(|m| m.findings.len()).sum()
    }

    pub fn any_automated_failure(&self) -> bool {
        Metric::AUTOMATED.iter().any(|m| self.status(*m) == MetricStatus::Fail)
    }

    /// Plain-text table followed by the findings.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<15} {:<20} {:>8}\n", "metric", "status", "findings");
        for m in &self.metrics {
            s.push_str(&format!("{:<15} {:<20} {:>8}\n", m.metric.as_str(), m.status.as_str(), m.findings.len()));
        }
        for m in &self.metrics {
            for f in &m.findings {
                s.push_str(&format!("[{}] {f}\n", m.metric));
            }
            for n in &m.notes {
                s.push_str(&format!("[{}] note: {n}\n", m.metric));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default)]
    pub optimization_requested: bool,
    #[serde(default)]
    pub syntax_hook: Option<ToolHook>,
    #[serde(default)]
    pub synth_hook: Option<ToolHook>,
}

/// True when the objectives ask for performance work.
pub fn optimization_requested(objectives: &crate::model::DesignObjectives) -> bool {
    let words = ["optimi", "throughput", "latency", "pipelin", "unroll", "high performance", "high-performance"];
    objectives
        .goals
        .iter()
        .chain(&objectives.requirements)
        .any(|t| {
            let t = t.to_lowercase();
            words.iter().any(|w| t.contains(w))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FileRole {
    Code,
    Header,
    Testbench,
}

/// Relative paths of a module's three files inside a design directory.
pub fn artifact_paths(dir_name: &str, name: &str) -> [String; 3] {
    [
        format!("modules/{dir_name}/{name}.cpp"),
        format!("modules/{dir_name}/{name}.h"),
        format!("modules/{dir_name}/{name}_tb.cpp"),
    ]
}

/// An integrated design in memory: graph, per-module artifacts and the top.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DesignSnapshot {
    pub graph: SystemDesignGraph,
    pub modules: Vec<ModuleArtifact>,
    pub top: Option<ModuleArtifact>,
    /// Directory where the files already exist, if any (used by hooks).
    pub root: Option<PathBuf>,
}

struct SourceFile<'a> {
    module: &'a ModuleArtifact,
    role: FileRole,
    path: String,
    scanned: Scanned,
}

impl DesignSnapshot {
    fn artifacts(&self) -> impl Iterator<Item = (&ModuleArtifact, &str)> {
        self.modules
            .iter()
            .map(|m| (m, m.name.as_str()))
            .chain(self.top.iter().map(|t| (t, TOP_MODULE_DIR)))
    }

    fn sources(&self) -> Vec<SourceFile<'_>> {
        let mut out = Vec::new();
        for (a, dir) in self.artifacts() {
            let paths = artifact_paths(dir, &a.name);
            let texts = [&a.module_code, &a.header_file, &a.test_bench_code];
            let roles = [FileRole::Code, FileRole::Header, FileRole::Testbench];
            for ((path, text), role) in paths.into_iter().zip(texts).zip(roles) {
                if text.trim().is_empty() {
                    continue;
                }
                out.push(SourceFile { module: a, role, path, scanned: source::scan(text) });
            }
        }
        out
    }

    /// Writes every non-empty file under `dir` using the standard layout.
    pub fn materialize(&self, dir: &Path) -> std::io::Result<()> {
        for (a, d) in self.artifacts() {
            let paths = artifact_paths(d, &a.name);
            for (p, text) in paths.iter().zip([&a.module_code, &a.header_file, &a.test_bench_code]) {
                if text.trim().is_empty() {
                    continue;
                }
                let full = dir.join(p);
                std::fs::create_dir_all(full.parent().expect("has parent"))?;
                std::fs::write(full, text)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- interfaces

/// One module's view for interface checking.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceView<'a> {
    pub name: &'a str,
    pub connections: &'a [String],
    pub ports: &'a [String],
}

fn parsed_ports(ports: &[String]) -> (BTreeMap<String, PortDecl>, Vec<PortDecl>) {
    let mut ok = BTreeMap::new();
    let mut bad = Vec::new();
    for p in ports {
        let d = parse_port(p);
        if d.is_parsed() {
            ok.entry(d.name.clone()).or_insert(d);
        } else {
            bad.push(d);
        }
    }
    (ok, bad)
}

fn raw_mentions(raw: &str, name: &str) -> bool {
    raw.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).any(|t| t == name)
}

/// Findings for one connected pair. The result does not depend on argument order.
pub fn check_pair(a: InterfaceView<'_>, b: InterfaceView<'_>) -> Vec<Finding> {
    let (a, b) = if a.name <= b.name { (a, b) } else { (b, a) };
    let m = Metric::Interface;
    let mut out = Vec::new();
    let a_lists = a.connections.iter().any(|c| c == b.name);
    let b_lists = b.connections.iter().any(|c| c == a.name);
    if !a_lists && !b_lists {
        return out;
    }
    if a_lists != b_lists {
        let (lister, other) = if a_lists { (a.name, b.name) } else { (b.name, a.name) };
        out.push(Finding::warning(
            m,
            None,
            None,
            format!("`{lister}` lists `{other}` as a connection but `{other}` does not list `{lister}`"),
        ));
    }
    let (pa, bad_a) = parsed_ports(a.ports);
    let (pb, bad_b) = parsed_ports(b.ports);
    for (name, da) in &pa {
        let Some(db) = pb.get(name) else { continue };
        match (da.width_bits, db.width_bits) {
            (Some(wa), Some(wb)) if wa != wb => out.push(Finding::error(
                m,
                None,
                None,
                format!(
                    "width mismatch on `{name}`: `{}` declares {wa} bits, `{}` declares {wb} bits",
                    a.name, b.name
                ),
            )),
            (Some(_), Some(_)) => {}
            _ => out.push(Finding::warning(
                m,
                None,
                None,
                format!("width of `{name}` is unknown in `{}` or `{}`; not compared", a.name, b.name),
            )),
        }
        if let (Some(ta), Some(tb)) = (&da.type_name, &db.type_name) {
            if ta != tb {
                out.push(Finding::error(
                    m,
                    None,
                    None,
                    format!("type mismatch on `{name}`: `{}` declares `{ta}`, `{}` declares `{tb}`", a.name, b.name),
                ));
            }
        }
    }
    for (bad, owner, other) in [(&bad_a, a.name, &pb), (&bad_b, b.name, &pa)] {
        for d in bad {
            for name in other.keys().filter(|n| raw_mentions(&d.raw, n)) {
                out.push(Finding::warning(
                    m,
                    None,
                    None,
                    format!("port `{}` of `{owner}` is unparseable; `{name}` not compared", d.raw.trim()),
                ));
            }
        }
    }
    out.sort();
    out
}

/// Interface findings over every connected pair of modules.
pub fn check_interface_views(views: &[InterfaceView<'_>]) -> Vec<Finding> {
    let mut out = BTreeSet::new();
    for (i, a) in views.iter().enumerate() {
        for b in &views[i + 1..] {
            if a.name != b.name {
                out.extend(check_pair(*a, *b));
            }
        }
    }
    out.into_iter().collect()
}

pub fn check_interfaces_graph(graph: &SystemDesignGraph) -> Vec<Finding> {
    let views: Vec<_> = graph
        .modules
        .iter()
        .map(|m| InterfaceView { name: &m.name, connections: &m.connections, ports: &m.ports })
        .collect();
    check_interface_views(&views)
}

/// Uses graph connectivity, with port lists taken from the artifacts when
/// they declare any (the integrator may revise them).
pub fn check_interfaces(design: &DesignSnapshot) -> Vec<Finding> {
    let mut views: Vec<InterfaceView<'_>> = Vec::new();
    for spec in &design.graph.modules {
        let art = design.modules.iter().find(|a| a.name == spec.name);
        let ports = match art {
            Some(a) if !a.ports.is_empty() => &a.ports,
            _ => &spec.ports,
        };
        views.push(InterfaceView { name: &spec.name, connections: &spec.connections, ports });
    }
    for a in &design.modules {
        if design.graph.module(&a.name).is_none() {
            views.push(InterfaceView { name: &a.name, connections: &a.connections, ports: &a.ports });
        }
    }
    check_interface_views(&views)
}

// -------------------------------------------------------------- completeness

pub const PLACEHOLDER_MARKER: &str = "PLACEHOLDER:";

fn module_identifiers(files: &[SourceFile<'_>], module: &str) -> BTreeSet<String> {
    files
        .iter()
        .filter(|f| f.module.name == module && f.role != FileRole::Testbench)
        .flat_map(|f| source::identifiers(&f.scanned.code))
        .collect()
}

fn completeness_with(design: &DesignSnapshot, files: &[SourceFile<'_>]) -> Vec<Finding> {
    let m = Metric::Completeness;
    let mut out = Vec::new();
    for spec in &design.graph.modules {
        if !design.modules.iter().any(|a| a.name == spec.name) {
            out.push(Finding::error(
                m,
                None,
                None,
                format!("module `{}` is in the system design but has no artifact", spec.name),
            ));
        }
    }
    for (a, dir) in design.artifacts() {
        let paths = artifact_paths(dir, &a.name);
        for ((path, text), what) in paths.iter().zip([&a.module_code, &a.header_file, &a.test_bench_code]).zip([
            "module code",
            "header",
            "testbench",
        ]) {
            if text.trim().is_empty() {
                out.push(Finding::error(m, Some(path), None, format!("{what} of `{}` is missing", a.name)));
            }
        }
    }
    for f in files {
        for c in &f.scanned.comments {
            if let Some(pos) = c.text.find(PLACEHOLDER_MARKER) {
                let line = c.line + c.text[..pos].matches('\n').count();
                let rest = c.text[pos + PLACEHOLDER_MARKER.len()..].lines().next().unwrap_or("").trim();
                out.push(Finding::error(m, Some(&f.path), Some(line), format!("placeholder left in code: {rest}")));
            }
        }
        match f.role {
            FileRole::Testbench => {
                if !source::has_main(&f.scanned.code) {
                    out.push(Finding::error(m, Some(&f.path), None, "testbench has no `int main(`"));
                }
            }
            FileRole::Code => {
                for d in source::function_definitions(&f.scanned.code) {
                    if d.base_name() == f.module.name && d.is_trivial() {
                        out.push(Finding::error(
                            m,
                            Some(&f.path),
                            Some(d.line),
                            format!("function `{}` has an empty body", d.name),
                        ));
                    }
                }
            }
            FileRole::Header => {}
        }
    }
    // INTERFACE pragmas on signals nobody declares.
    for f in files.iter().filter(|f| f.role != FileRole::Testbench) {
        let known = module_identifiers(files, &f.module.name);
        for p in source::pragmas(&f.scanned) {
            if p.kind != source::PragmaKind::Interface {
                continue;
            }
            if let Some(port) = &p.port {
                if port != "return" && !known.contains(port) {
                    out.push(Finding::error(
                        m,
                        Some(&f.path),
                        Some(p.line),
                        format!("INTERFACE pragma names `{port}`, which is never declared"),
                    ));
                }
            }
        }
    }
    out
}

pub fn check_completeness(design: &DesignSnapshot) -> Vec<Finding> {
    completeness_with(design, &design.sources())
}

// -------------------------------------------------------------- optimization

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PragmaInventory {
    pub by_class: BTreeMap<String, usize>,
    pub optimization_count: usize,
}

fn optimization_with(files: &[SourceFile<'_>], requested: bool) -> (Vec<Finding>, PragmaInventory) {
    let m = Metric::Optimization;
    let mut out = Vec::new();
    let mut inv = PragmaInventory::default();
    for f in files.iter().filter(|f| f.role != FileRole::Testbench) {
        let known = module_identifiers(files, &f.module.name);
        let pragmas: Vec<Pragma> = source::pragmas(&f.scanned);
        for p in &pragmas {
            *inv.by_class.entry(p.kind.label().to_string()).or_default() += 1;
            if p.is_optimization() {
                inv.optimization_count += 1;
            }
            if let Some(var) = &p.variable {
                let base = var.split('.').next().unwrap_or(var);
                if !known.contains(base) {
                    out.push(Finding::error(
                        m,
                        Some(&f.path),
                        Some(p.line),
                        format!("superfluous directive: {} names `{var}`, which is never declared", p.directive),
                    ));
                }
            }
        }
    }
    if requested && inv.optimization_count == 0 {
        out.push(Finding::error(m, None, None, "optimization was requested but no optimization pragmas are present"));
    }
    (out, inv)
}

pub fn check_optimization(design: &DesignSnapshot, requested: bool) -> (Vec<Finding>, PragmaInventory) {
    optimization_with(&design.sources(), requested)
}

// -------------------------------------------------------------------- syntax

fn syntax_heuristics(files: &[SourceFile<'_>]) -> Vec<Finding> {
    let m = Metric::Syntax;
    let mut out = Vec::new();
    let mut defs: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
    for f in files {
        if let Some((line, msg)) = source::bracket_imbalance(&f.scanned.code) {
            out.push(Finding::error(m, Some(&f.path), Some(line), format!("unbalanced brackets: {msg}")));
        }
        if f.role == FileRole::Code {
            let own = format!("{}.h", f.module.name);
            let includes = source::quoted_includes(&f.scanned.code_with_strings);
            if !includes.iter().any(|i| i.rsplit('/').next() == Some(own.as_str())) {
                out.push(Finding::error(m, Some(&f.path), None, format!("does not include its own header \"{own}\"")));
            }
            for d in source::function_definitions(&f.scanned.code) {
                defs.entry(d.name.clone()).or_default().push((f.path.clone(), d.line));
            }
        }
    }
    for (name, sites) in defs {
        if sites.len() > 1 {
            let list: Vec<String> = sites.iter().map(|(p, l)| format!("{p}:{l}")).collect();
            out.push(Finding::error(
                m,
                Some(&sites[1].0),
                Some(sites[1].1),
                format!("function `{name}` is defined {} times ({})", sites.len(), list.join(", ")),
            ));
        }
    }
    out
}

pub fn check_syntax_heuristics(design: &DesignSnapshot) -> Vec<Finding> {
    syntax_heuristics(&design.sources())
}

enum HookOutcome {
    Ran(Vec<Finding>),
    Skipped(Vec<Finding>),
}

fn run_hook_per_file(
    metric: Metric,
    hook: &ToolHook,
    root: &Path,
    top: &str,
    files: &[String],
) -> HookOutcome {
    let mut out = Vec::new();
    let dir = root.to_string_lossy().into_owned();
    for file in files {
        match hook.run(root, &[("file", file), ("dir", &dir), ("top", top)]) {
            Ok(run) if run.passed() => {}
            Ok(run) => {
                let detail = if let Some(l) = run.error_lines.first() {
                    l.clone()
                } else if run.timed_out {
                    "timed out".to_string()
                } else {
                    format!("exit code {}", run.exit_code.map_or("none".into(), |c| c.to_string()))
                };
                out.push(Finding::error(metric, Some(file), None, format!("external tool failed: {detail}")));
            }
            Err(e) => {
                return HookOutcome::Skipped(vec![Finding::warning(metric, None, None, e.to_string())]);
            }
        }
    }
    HookOutcome::Ran(out)
}

/// Keeps a temporary copy alive while hooks run on an in-memory design.
fn hook_root(design: &DesignSnapshot) -> std::io::Result<(PathBuf, Option<tempfile::TempDir>)> {
    if let Some(r) = &design.root {
        return Ok((r.clone(), None));
    }
    let tmp = tempfile::tempdir()?;
    design.materialize(tmp.path())?;
    Ok((tmp.path().to_path_buf(), Some(tmp)))
}

// -------------------------------------------------------------------- report

pub fn report(design: &DesignSnapshot, config: &CheckConfig) -> CheckReport {
    let files = design.sources();
    let top_name = design.top.as_ref().map(|t| t.name.clone()).unwrap_or_default();

    let sd: Vec<Finding> = validate_system_design(&design.graph)
        .into_iter()
        .map(|v| Finding::warning(Metric::SystemDesign, None, None, v.to_string()))
        .collect();
    let mut sd_report = MetricReport::from_findings(Metric::SystemDesign, sd, false, vec![]);
    sd_report.status = MetricStatus::NeedsHumanReview;

    let needs_root = config.syntax_hook.is_some() || config.synth_hook.is_some();
    let root = if needs_root { Some(hook_root(design)) } else { None };

    let mut syntax = syntax_heuristics(&files);
    let mut syntax_skipped = false;
    let mut syntax_notes = vec![];
    match (&config.syntax_hook, &root) {
        (None, _) => syntax_notes.push("no external tool configured; heuristics only".to_string()),
        (Some(_), Some(Err(e))) => {
            syntax_skipped = true;
            syntax.push(Finding::warning(Metric::Syntax, None, None, format!("cannot stage files for hook: {e}")));
        }
        (Some(hook), Some(Ok((dir, _)))) => {
            let cpp: Vec<String> = files
                .iter()
                .filter(|f| f.role != FileRole::Header)
                .map(|f| f.path.clone())
                .collect();
            match run_hook_per_file(Metric::Syntax, hook, dir, &top_name, &cpp) {
                HookOutcome::Ran(f) => syntax.extend(f),
                HookOutcome::Skipped(f) => {
                    syntax_skipped = true;
                    syntax.extend(f);
                }
            }
        }
        (Some(_), None) => unreachable!("root staged whenever a hook is configured"),
    }

    let (opt, inv) = optimization_with(&files, config.optimization_requested);
    let mut opt_notes = vec![];
    if inv.optimization_count == 0 && !config.optimization_requested {
        opt_notes.push("no optimization pragmas; optimization not requested".to_string());
    }

    let (synth, synth_skipped, synth_notes) = match (&config.synth_hook, &root) {
        (None, _) => (vec![], true, vec!["no synthesis hook configured".to_string()]),
        (Some(_), Some(Err(e))) => (
            vec![Finding::warning(Metric::Synthesizable, None, None, format!("cannot stage files for hook: {e}"))],
            true,
            vec![],
        ),
        (Some(hook), Some(Ok((dir, _)))) => {
            let top_file = design
                .top
                .as_ref()
                .map(|t| artifact_paths(TOP_MODULE_DIR, &t.name)[0].clone())
                .unwrap_or_default();
            match run_hook_per_file(Metric::Synthesizable, hook, dir, &top_name, &[top_file]) {
                HookOutcome::Ran(f) => (f, false, vec![]),
                HookOutcome::Skipped(f) => (f, true, vec![]),
            }
        }
        (Some(_), None) => unreachable!("root staged whenever a hook is configured"),
    };

    let metrics = vec![
        sd_report,
        MetricReport::from_findings(Metric::Syntax, syntax, syntax_skipped, syntax_notes),
        MetricReport::from_findings(Metric::Interface, check_interfaces(design), false, vec![]),
        MetricReport::from_findings(Metric::Completeness, completeness_with(design, &files), false, vec![]),
        MetricReport::from_findings(Metric::Optimization, opt, false, opt_notes),
        MetricReport::from_findings(Metric::Synthesizable, synth, synth_skipped, synth_notes),
    ];
    CheckReport { metrics, pragma_inventory: inv.by_class }
}

// -------------------------------------------------------------------- loading

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0} has no modules/ directory")]
    NoModules(PathBuf),
}

fn read_opt(path: &Path) -> Result<String, LoadError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(LoadError::Io { path: path.to_path_buf(), source: e }),
    }
}

fn list_dirs(path: &Path) -> Result<Vec<String>, LoadError> {
    let io = |e| LoadError::Io { path: path.to_path_buf(), source: e };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(path).map_err(io)? {
        let entry = entry.map_err(io)?;
        if entry.file_type().map_err(io)?.is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Deserialize)]
struct ManifestView {
    #[serde(default)]
    top_module: Option<ModuleMeta>,
    #[serde(default)]
    modules: Vec<ModuleMeta>,
}

#[derive(Deserialize)]
struct ModuleMeta {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    connections: Vec<String>,
    #[serde(default)]
    ports: Vec<String>,
}

/// Loads a design directory (`system_design.json`, optional `manifest.json`,
/// `modules/<name>/...`, `modules/top/...`). Missing files load as empty.
pub fn load_design_dir(dir: &Path) -> Result<DesignSnapshot, LoadError> {
    let sd_path = dir.join("system_design.json");
    let sd_text = read_opt(&sd_path)?;
    let graph: SystemDesignGraph = if sd_text.trim().is_empty() {
        SystemDesignGraph::default()
    } else {
        serde_json::from_str(&sd_text).map_err(|e| LoadError::Parse { path: sd_path, message: e.to_string() })?
    };
    let mf_path = dir.join("manifest.json");
    let mf_text = read_opt(&mf_path)?;
    let manifest: Option<ManifestView> = if mf_text.trim().is_empty() {
        None
    } else {
        Some(serde_json::from_str(&mf_text).map_err(|e| LoadError::Parse { path: mf_path, message: e.to_string() })?)
    };

    let modules_dir = dir.join("modules");
    if !modules_dir.is_dir() {
        return Err(LoadError::NoModules(dir.to_path_buf()));
    }
    let meta_for = |name: &str| -> (String, Vec<String>, Vec<String>) {
        if let Some(m) = manifest.as_ref().and_then(|m| m.modules.iter().find(|x| x.name == name)) {
            return (m.description.clone(), m.connections.clone(), m.ports.clone());
        }
        if let Some(s) = graph.module(name) {
            return (s.description.clone(), s.connections.clone(), s.ports.clone());
        }
        (String::new(), vec![], vec![])
    };
    let load = |dir_name: &str, name: &str, meta: (String, Vec<String>, Vec<String>)| -> Result<ModuleArtifact, LoadError> {
        let [c, h, t] = artifact_paths(dir_name, name);
        Ok(ModuleArtifact {
            name: name.to_string(),
            description: meta.0,
            connections: meta.1,
            ports: meta.2,
            module_code: read_opt(&dir.join(c))?,
            header_file: read_opt(&dir.join(h))?,
            test_bench_code: read_opt(&dir.join(t))?,
        })
    };

    let mut modules = Vec::new();
    for name in list_dirs(&modules_dir)? {
        if name == TOP_MODULE_DIR {
            continue;
        }
        let meta = meta_for(&name);
        modules.push(load(&name, &name, meta)?);
    }
    let top_dir = modules_dir.join(TOP_MODULE_DIR);
    let top = if top_dir.is_dir() {
        let name = match manifest.as_ref().and_then(|m| m.top_module.as_ref()) {
            Some(t) => Some((t.name.clone(), (t.description.clone(), t.connections.clone(), t.ports.clone()))),
            None => infer_top_name(&top_dir)?.map(|n| (n, (String::new(), vec![], vec![]))),
        };
        match name {
            Some((n, meta)) => Some(load(TOP_MODULE_DIR, &n, meta)?),
            None => None,
        }
    } else {
        None
    };
    Ok(DesignSnapshot { graph, modules, top, root: Some(dir.to_path_buf()) })
}

fn infer_top_name(top_dir: &Path) -> Result<Option<String>, LoadError> {
    let io = |e| LoadError::Io { path: top_dir.to_path_buf(), source: e };
    let mut names = BTreeSet::new();
    for entry in std::fs::read_dir(top_dir).map_err(io)? {
        let file = entry.map_err(io)?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file.strip_suffix(".h").or_else(|| file.strip_suffix(".cpp")) {
            if !stem.ends_with("_tb") {
                names.insert(stem.to_string());
            }
        }
    }
    Ok(names.into_iter().next())
}
