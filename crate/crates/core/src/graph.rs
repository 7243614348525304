//! Decision-graph executor shared by both pipelines.
//!
//! Nodes compute over a caller-owned state `S` and report an outcome label;
//! the edge `(node, label)` picks the successor. Execution stops at a
//! terminal node, at a visit cap, or when a node fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::Clock;

/// Label reported by agent and function nodes that do not branch.
pub const DEFAULT_LABEL: &str = "ok";
pub const DEFAULT_GLOBAL_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Agent,
    Function,
    Decision,
    Terminal,
}

/// Failure raised by a node handler.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct NodeError {
    pub message: String,
    #[source]
    pub source: Option<Box<dyn std::error::Error + Send + Sync>>,
}

impl NodeError {
    pub fn msg(message: impl Into<String>) -> Self {
        NodeError {
            message: message.into(),
            source: None,
        }
    }

    pub fn wrap<E: std::error::Error + Send + Sync + 'static>(e: E) -> Self {
        NodeError {
            message: e.to_string(),
            source: Some(Box::new(e)),
        }
    }

    /// The wrapped error, if it has type `E`.
    pub fn downcast_ref<E: std::error::Error + 'static>(&self) -> Option<&E> {
        self.source.as_deref().and_then(|s| s.downcast_ref::<E>())
    }
}

type Mutating<'a, S> = Box<dyn Fn(&mut S) -> Result<String, NodeError> + Send + Sync + 'a>;
type Deciding<'a, S> = Box<dyn Fn(&S) -> String + Send + Sync + 'a>;

enum Handler<'a, S> {
    Mutating(Mutating<'a, S>),
    Deciding(Deciding<'a, S>),
    None,
}

pub struct NodeDef<'a, S> {
    pub id: String,
    pub kind: NodeKind,
    /// Outcome labels a decision node may return.
    pub labels: Vec<String>,
    handler: Handler<'a, S>,
}

impl<S> fmt::Debug for NodeDef<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeDef")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("labels", &self.labels)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDef {
    pub from: String,
    pub label: String,
    pub to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphViolationKind {
    MissingStart,
    DuplicateNode,
    DanglingEdge,
    DuplicateEdgeLabel,
    Unreachable,
    MissingLabel,
    UndeclaredLabel,
    NoTerminal,
    DeadEnd,
    TerminalWithEdges,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphViolation {
    pub kind: GraphViolationKind,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at `{}`: {}", self.kind, self.subject, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<GraphViolation>),
}

pub struct Graph<'a, S> {
    pub name: String,
    start: Option<String>,
    nodes: Vec<NodeDef<'a, S>>,
    edges: Vec<EdgeDef>,
}

impl<'a, S> Graph<'a, S> {
    pub fn new(name: impl Into<String>) -> Self {
        Graph {
            name: name.into(),
            start: None,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn start(mut self, id: &str) -> Self {
        self.start = Some(id.to_string());
        self
    }

    fn push(mut self, id: &str, kind: NodeKind, labels: Vec<String>, handler: Handler<'a, S>) -> Self {
        self.nodes.push(NodeDef {
            id: id.to_string(),
            kind,
            labels,
            handler,
        });
        self
    }

    pub fn agent<F>(self, id: &str, f: F) -> Self
    where
        F: Fn(&mut S) -> Result<String, NodeError> + Send + Sync + 'a,
    {
        self.push(id, NodeKind::Agent, Vec::new(), Handler::Mutating(Box::new(f)))
    }

    pub fn function<F>(self, id: &str, f: F) -> Self
    where
        F: Fn(&mut S) -> Result<String, NodeError> + Send + Sync + 'a,
    {
        self.push(id, NodeKind::Function, Vec::new(), Handler::Mutating(Box::new(f)))
    }

    pub fn decision<F>(self, id: &str, labels: &[&str], f: F) -> Self
    where
        F: Fn(&S) -> String + Send + Sync + 'a,
    {
        let labels = labels.iter().map(|s| s.to_string()).collect();
        self.push(id, NodeKind::Decision, labels, Handler::Deciding(Box::new(f)))
    }

    pub fn terminal(self, id: &str) -> Self {
        self.push(id, NodeKind::Terminal, Vec::new(), Handler::None)
    }

    pub fn edge(mut self, from: &str, label: &str, to: &str) -> Self {
        self.edges.push(EdgeDef {
            from: from.to_string(),
            label: label.to_string(),
            to: to.to_string(),
        });
        self
    }

    pub fn nodes(&self) -> &[NodeDef<'a, S>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeDef] {
        &self.edges
    }

    pub fn start_id(&self) -> Option<&str> {
        self.start.as_deref()
    }

    fn node(&self, id: &str) -> Option<&NodeDef<'a, S>> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn successor(&self, from: &str, label: &str) -> Option<&str> {
        self.edges
            .iter()
            .find(|e| e.from == from && e.label == label)
            .map(|e| e.to.as_str())
    }

    /// Structural problems, in a stable order. Empty means executable.
    pub fn validate(&self) -> Vec<GraphViolation> {
        let mut out = Vec::new();
        let mut v = |kind, subject: &str, detail: String| {
            out.push(GraphViolation {
                kind,
                subject: subject.to_string(),
                detail,
            })
        };
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                v(GraphViolationKind::DuplicateNode, &n.id, "node id declared twice".into());
            }
        }
        match &self.start {
            None => v(GraphViolationKind::MissingStart, &self.name, "no start node".into()),
            Some(s) if !ids.contains(s.as_str()) => {
                v(GraphViolationKind::MissingStart, s, "start node is not declared".into())
            }
            _ => {}
        }
        let mut pairs = BTreeSet::new();
        for e in &self.edges {
            for end in [&e.from, &e.to] {
                if !ids.contains(end.as_str()) {
                    v(
                        GraphViolationKind::DanglingEdge,
                        end,
                        format!("edge {} -[{}]-> {} names an undeclared node", e.from, e.label, e.to),
                    );
                }
            }
            if !pairs.insert((e.from.as_str(), e.label.as_str())) {
                v(
                    GraphViolationKind::DuplicateEdgeLabel,
                    &e.from,
                    format!("label `{}` has more than one edge", e.label),
                );
            }
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Terminal) {
            v(GraphViolationKind::NoTerminal, &self.name, "graph has no terminal node".into());
        }
        for n in &self.nodes {
            let outgoing: Vec<&EdgeDef> = self.edges.iter().filter(|e| e.from == n.id).collect();
            match n.kind {
                NodeKind::Terminal => {
                    if !outgoing.is_empty() {
                        v(GraphViolationKind::TerminalWithEdges, &n.id, "terminal node has outgoing edges".into());
                    }
                }
                NodeKind::Decision => {
                    for l in &n.labels {
                        if !outgoing.iter().any(|e| &e.label == l) {
                            v(GraphViolationKind::MissingLabel, &n.id, format!("no edge for outcome `{l}`"));
                        }
                    }
                    for e in &outgoing {
                        if !n.labels.contains(&e.label) {
                            v(
                                GraphViolationKind::UndeclaredLabel,
                                &n.id,
                                format!("edge label `{}` is not a declared outcome", e.label),
                            );
                        }
                    }
                    if n.labels.is_empty() {
                        v(GraphViolationKind::DeadEnd, &n.id, "decision node declares no outcomes".into());
                    }
                }
                NodeKind::Agent | NodeKind::Function => {
                    if outgoing.is_empty() {
                        v(GraphViolationKind::DeadEnd, &n.id, "non-terminal node has no outgoing edge".into());
                    }
                }
            }
        }
        if let Some(start) = self.start.as_deref().filter(|s| ids.contains(s)) {
            let mut seen = BTreeSet::from([start]);
            let mut queue = VecDeque::from([start]);
            while let Some(cur) = queue.pop_front() {
                for e in self.edges.iter().filter(|e| e.from == cur) {
                    if ids.contains(e.to.as_str()) && seen.insert(e.to.as_str()) {
                        queue.push_back(e.to.as_str());
                    }
                }
            }
            for n in &self.nodes {
                if !seen.contains(n.id.as_str()) {
                    v(GraphViolationKind::Unreachable, &n.id, "not reachable from the start node".into());
                }
            }
        }
        out
    }
}

/// Visit limits for one execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub global: usize,
    pub per_node: BTreeMap<String, usize>,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            global: DEFAULT_GLOBAL_CAP,
            per_node: BTreeMap::new(),
        }
    }
}

impl Caps {
    pub fn with(mut self, node: &str, cap: usize) -> Self {
        self.per_node.insert(node.to_string(), cap);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub node: String,
    pub entered_at: String,
    /// Outcome label; absent for terminals and for visits that failed.
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub graph: String,
    pub entries: Vec<TraceEntry>,
}

impl ExecutionTrace {
    pub fn visits(&self, node: &str) -> usize {
        self.entries.iter().filter(|e| e.node == node).count()
    }

    pub fn nodes(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.node.as_str()).collect()
    }

    /// Checks every consecutive pair against the graph's edges.
    pub fn consistent_with<S>(&self, graph: &Graph<'_, S>) -> Result<(), String> {
        for w in self.entries.windows(2) {
            let label = w[0]
                .label
                .as_deref()
                .ok_or_else(|| format!("`{}` has no outcome but is followed by `{}`", w[0].node, w[1].node))?;
            match graph.successor(&w[0].node, label) {
                Some(to) if to == w[1].node => {}
                _ => return Err(format!("no edge {} -[{label}]-> {}", w[0].node, w[1].node)),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Halt {
    Terminal { node: String },
    /// A visit to `node` would have exceeded `cap`.
    CapExceeded { node: String, cap: usize, global: bool },
    /// `node` reported `label` but has no edge for it.
    NoEdge { node: String, label: String },
    NodeFailed { node: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionState<S> {
    pub data: S,
    pub visit_counts: BTreeMap<String, usize>,
}

pub struct Execution<S> {
    pub state: ExecutionState<S>,
    pub trace: ExecutionTrace,
    pub halt: Halt,
    /// The handler error behind [`Halt::NodeFailed`].
    pub error: Option<NodeError>,
}

impl<S> Execution<S> {
    pub fn completed(&self) -> bool {
        matches!(self.halt, Halt::Terminal { .. })
    }
}

/// Runs `graph` from its start node.
pub fn execute<S>(graph: &Graph<'_, S>, initial: S, caps: &Caps, clock: &dyn Clock) -> Result<Execution<S>, GraphError> {
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    let mut state = ExecutionState {
        data: initial,
        visit_counts: BTreeMap::new(),
    };
    let mut trace = ExecutionTrace {
        graph: graph.name.clone(),
        entries: Vec::new(),
    };
    let mut current = graph.start.clone().expect("validated start");
    let mut total = 0usize;
    loop {
        let node = graph.node(&current).expect("validated edges");
        let visits = state.visit_counts.get(&current).copied().unwrap_or(0);
        if total >= caps.global {
            return Ok(halted(state, trace, Halt::CapExceeded { node: current, cap: caps.global, global: true }, None));
        }
        if let Some(&cap) = caps.per_node.get(&current) {
            if visits >= cap {
                return Ok(halted(state, trace, Halt::CapExceeded { node: current, cap, global: false }, None));
            }
        }
        total += 1;
        state.visit_counts.insert(current.clone(), visits + 1);
        trace.entries.push(TraceEntry {
            node: current.clone(),
            entered_at: clock.now(),
            label: None,
        });
        let result = match &node.handler {
            Handler::None => {
                return Ok(halted(state, trace, Halt::Terminal { node: current }, None));
            }
            Handler::Deciding(f) => {
                let l = f(&state.data);
                if node.labels.contains(&l) {
                    Ok(l)
                } else {
                    Err(NodeError::msg(format!("decision returned undeclared outcome `{l}`")))
                }
            }
            Handler::Mutating(f) => f(&mut state.data),
        };
        let label = match result {
            Ok(l) => l,
            Err(e) => {
                let halt = Halt::NodeFailed {
                    node: current,
                    message: e.to_string(),
                };
                return Ok(halted(state, trace, halt, Some(e)));
            }
        };
        trace.entries.last_mut().expect("just pushed").label = Some(label.clone());
        match graph.successor(&current, &label) {
            Some(next) => current = next.to_string(),
            None => return Ok(halted(state, trace, Halt::NoEdge { node: current, label }, None)),
        }
    }
}

fn halted<S>(state: ExecutionState<S>, trace: ExecutionTrace, halt: Halt, error: Option<NodeError>) -> Execution<S> {
    Execution {
        state,
        trace,
        halt,
        error,
    }
}
