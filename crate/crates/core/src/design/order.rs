//! Module coding order: fewest connections first.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::SystemDesignGraph;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleOrder {
    pub names: Vec<String>,
}

impl ModuleOrder {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// Undirected connection degree of every module: the number of distinct
/// other modules it lists or is listed by.
pub fn degrees(graph: &SystemDesignGraph) -> BTreeMap<String, usize> {
    let mut nbrs: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for m in &graph.modules {
        nbrs.entry(&m.name).or_default();
        for c in m.connections.iter().filter(|c| **c != m.name) {
            nbrs.entry(&m.name).or_default().insert(c);
            nbrs.entry(c).or_default().insert(&m.name);
        }
    }
    graph
        .modules
        .iter()
        .map(|m| (m.name.clone(), nbrs.get(m.name.as_str()).map_or(0, BTreeSet::len)))
        .collect()
}

/// Ascending degree, ties by name. When any module carries `depends_on`,
/// a topological order over those edges with the same priority; a cycle
/// falls back to the plain degree order.
pub fn order_modules(graph: &SystemDesignGraph) -> ModuleOrder {
    let deg = degrees(graph);
    let key = |name: &str| (deg.get(name).copied().unwrap_or(0), name.to_string());
    let mut plain: Vec<&str> = graph.modules.iter().map(|m| m.name.as_str()).collect();
    plain.sort_by_key(|n| key(n));

    let has_deps = graph.modules.iter().any(|m| !m.depends_on.is_empty());
    if !has_deps {
        return ModuleOrder { names: plain.into_iter().map(str::to_string).collect() };
    }

    let names: BTreeSet<&str> = plain.iter().copied().collect();
    let mut pending: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for m in &graph.modules {
        let deps = m
            .depends_on
            .iter()
            .map(String::as_str)
            .filter(|d| *d != m.name && names.contains(d))
            .collect();
        pending.insert(&m.name, deps);
    }
    let mut ready: BTreeSet<(usize, String)> =
        pending.iter().filter(|(_, d)| d.is_empty()).map(|(n, _)| key(n)).collect();
    let mut out = Vec::with_capacity(plain.len());
    while let Some(first) = ready.pop_first() {
        let name = first.1;
        pending.remove(name.as_str());
        for (other, deps) in pending.iter_mut() {
            if deps.remove(name.as_str()) && deps.is_empty() {
                ready.insert(key(other));
            }
        }
        out.push(name);
    }
    if !pending.is_empty() {
        log::warn!("depends_on annotations form a cycle; using degree order");
        return ModuleOrder { names: plain.into_iter().map(str::to_string).collect() };
    }
    ModuleOrder { names: out }
}
