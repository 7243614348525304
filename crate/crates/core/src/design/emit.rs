//! Writing an integrated design to disk with a content manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checks::{artifact_paths, DesignSnapshot};
use crate::model::{is_identifier, ModuleArtifact, SystemDesignGraph, TOP_MODULE_DIR};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SYSTEM_DESIGN_FILE: &str = "system_design.json";
pub const REPORT_FILE: &str = "report.json";
pub const MODULES_DIR: &str = "modules";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratedDesign {
    pub artifacts: BTreeMap<String, ModuleArtifact>,
    pub top_module: ModuleArtifact,
}

impl IntegratedDesign {
    pub fn snapshot(&self, graph: &SystemDesignGraph) -> DesignSnapshot {
        DesignSnapshot {
            graph: graph.clone(),
            modules: self.artifacts.values().cloned().collect(),
            top: Some(self.top_module.clone()),
            root: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestModule {
    pub name: String,
    pub description: String,
    pub connections: Vec<String>,
    pub ports: Vec<String>,
}

impl ManifestModule {
    fn of(a: &ModuleArtifact) -> Self {
        ManifestModule {
            name: a.name.clone(),
            description: a.description.clone(),
            connections: a.connections.clone(),
            ports: a.ports.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub project_name: String,
    /// False when the final evaluator never approved the design.
    pub approved: bool,
    pub module_order: Vec<String>,
    pub top_module: ManifestModule,
    pub modules: Vec<ManifestModule>,
    /// Sorted by path.
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn file(&self, path: &str) -> Option<&ManifestFile> {
        self.files.iter().find(|f| f.path == path)
    }
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("module name `{0}` cannot be written to disk")]
    BadName(String),
    #[error("artifact stored under `{key}` is named `{name}`")]
    KeyMismatch { key: String, name: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_name(name: &str) -> Result<(), EmitError> {
    if is_identifier(name) && name != TOP_MODULE_DIR {
        Ok(())
    } else {
        Err(EmitError::BadName(name.to_string()))
    }
}

fn write(root: &Path, rel: &str, text: &str, files: &mut Vec<ManifestFile>) -> Result<(), EmitError> {
    let full = root.join(rel);
    let io = |e: std::io::Error| EmitError::Io { path: full.display().to_string(), message: e.to_string() };
    if let Some(parent) = full.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(&full, text).map_err(io)?;
    files.push(ManifestFile { path: rel.to_string(), sha256: sha256_hex(text.as_bytes()), bytes: text.len() });
    Ok(())
}

/// Writes `system_design.json`, every module's three files, the top module
/// under `modules/top/` and `manifest.json` into `dir`. Any previous
/// `modules/` tree in `dir` is replaced.
pub fn emit_files(
    dir: &Path,
    project_name: &str,
    graph: &SystemDesignGraph,
    order: &[String],
    design: &IntegratedDesign,
    approved: bool,
) -> Result<Manifest, EmitError> {
    for (key, a) in &design.artifacts {
        if key != &a.name {
            return Err(EmitError::KeyMismatch { key: key.clone(), name: a.name.clone() });
        }
        check_name(key)?;
    }
    check_name(&design.top_module.name)?;

    let modules_dir = dir.join(MODULES_DIR);
    if modules_dir.exists() {
        std::fs::remove_dir_all(&modules_dir)
            .map_err(|e| EmitError::Io { path: modules_dir.display().to_string(), message: e.to_string() })?;
    }
    let mut files = Vec::new();
    let sd = serde_json::to_string_pretty(graph).expect("graph serializes") + "\n";
    write(dir, SYSTEM_DESIGN_FILE, &sd, &mut files)?;
    let all = design.artifacts.values().map(|a| (a, a.name.as_str())).chain([(&design.top_module, TOP_MODULE_DIR)]);
    for (a, sub) in all {
        let paths = artifact_paths(sub, &a.name);
        for (rel, text) in paths.iter().zip([&a.module_code, &a.header_file, &a.test_bench_code]) {
            write(dir, rel, text, &mut files)?;
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        project_name: project_name.to_string(),
        approved,
        module_order: order.to_vec(),
        top_module: ManifestModule::of(&design.top_module),
        modules: design.artifacts.values().map(ManifestModule::of).collect(),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| EmitError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, EmitError> {
    let path = dir.join(MANIFEST_FILE);
    let err = |m: String| EmitError::Io { path: path.display().to_string(), message: m };
    let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Recomputes every listed file's hash; returns the paths that differ.
pub fn verify_manifest(dir: &Path, manifest: &Manifest) -> Vec<String> {
    manifest
        .files
        .iter()
        .filter(|f| std::fs::read(dir.join(&f.path)).map(|b| sha256_hex(&b) != f.sha256).unwrap_or(true))
        .map(|f| f.path.clone())
        .collect()
}
