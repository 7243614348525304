//! Workspace layout, locking and file helpers.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use synthforge_core::model::DesignObjectives;
use synthforge_core::prompt::BUILTIN_TEMPLATES;
use synthforge_core::rag::Collection;

use crate::config::WorkspaceConfig;
use crate::exit::CliError;

pub const OBJECTIVES_FILE: &str = "objectives.yaml";
pub const CONFIG_FILE: &str = "config.yaml";
pub const LOCK_FILE: &str = ".synthforge.lock";
pub const SCRATCH_DIR: &str = ".scratch";
pub const RUN_FILE: &str = "run.json";
pub const TRIALS_FILE: &str = "trials.json";
pub const REPLAY_DIR: &str = "replay";

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn objectives_path(&self) -> PathBuf {
        self.root.join(OBJECTIVES_FILE)
    }
    pub fn config_path(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }
    pub fn knowledge_dir(&self) -> PathBuf {
        self.root.join("knowledge")
    }
    pub fn sources_dir(&self) -> PathBuf {
        self.knowledge_dir().join("sources")
    }
    pub fn index_dir(&self) -> PathBuf {
        self.knowledge_dir().join("index")
    }
    pub fn design_dir(&self) -> PathBuf {
        self.root.join("design")
    }
    pub fn trials_dir(&self) -> PathBuf {
        self.design_dir().join("trials")
    }
    pub fn trial_dir(&self, i: usize) -> PathBuf {
        self.trials_dir().join(i.to_string())
    }
    pub fn best_dir(&self) -> PathBuf {
        self.design_dir().join("best")
    }
    pub fn transcripts_dir(&self) -> PathBuf {
        self.root.join(synthforge_core::session::TRANSCRIPTS_DIR)
    }
    pub fn scratch_dir(&self) -> PathBuf {
        self.root.join(SCRATCH_DIR)
    }

    /// Resolves a config path against the workspace root.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_objectives(&self) -> Result<DesignObjectives> {
        let path = self.objectives_path();
        if !path.is_file() {
            return Err(CliError::usage(format!("{} not found; run `synthforge init` first", path.display())).into());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let o: DesignObjectives =
            serde_yaml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let problems = o.problems();
        if !problems.is_empty() {
            return Err(CliError::usage(format!("{}: {}", path.display(), problems.join("; "))).into());
        }
        Ok(o)
    }

    /// `--config` wins over `config.yaml`; both absent gives the defaults.
    pub fn load_config(&self, explicit: Option<&Path>) -> Result<WorkspaceConfig> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => self.config_path(),
        };
        if !path.is_file() {
            if explicit.is_some() {
                return Err(CliError::usage(format!("config {} not found", path.display())).into());
            }
            return Ok(WorkspaceConfig::default());
        }
        WorkspaceConfig::load(&path).map_err(|e| CliError::usage(format!("{e:#}")).into())
    }

    pub fn lock(&self) -> Result<WorkspaceLock> {
        let path = self.root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::usage(format!(
                "workspace is locked by another command ({}); remove it if no command is running",
                path.display()
            ))
            .into()),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }

    /// Creates the layout; existing files are left alone. Returns the paths written.
    pub fn init(&self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for c in Collection::ALL {
            std::fs::create_dir_all(self.sources_dir().join(c.as_str()))?;
        }
        std::fs::create_dir_all(self.design_dir())?;
        let templates = self.root.join("templates");
        std::fs::create_dir_all(&templates)?;
        let starter = "project_name: my_design\ngoals:\n  - Describe what the hardware should do\nrequirements:\n  - List constraints such as interfaces, data widths or throughput\n";
        let files: Vec<(PathBuf, String)> = [
            (self.objectives_path(), starter.to_string()),
            (self.config_path(), WorkspaceConfig::default().to_yaml()),
        ]
        .into_iter()
        .chain(BUILTIN_TEMPLATES.iter().map(|(role, body)| (templates.join(format!("{}.txt", role.as_str())), body.to_string())))
        .collect();
        for (path, text) in files {
            if !path.exists() {
                std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// Source documents as `(collection, doc id, text)`, sorted by id.
    /// Files directly under `sources/` belong to the project collection.
    pub fn source_documents(&self) -> Result<Vec<(Collection, String, String)>> {
        let root = self.sources_dir();
        let mut out = Vec::new();
        if !root.is_dir() {
            return Ok(out);
        }
        for file in walk_files(&root)? {
            let rel = relative(&root, &file);
            let collection = match rel.split_once('/') {
                None => Collection::Project,
                Some((dir, _)) => Collection::ALL
                    .into_iter()
                    .find(|c| c.as_str() == dir)
                    .ok_or_else(|| CliError::usage(format!("{}: unknown collection `{dir}`", root.join(dir).display())))?,
            };
            match std::fs::read_to_string(&file) {
                Ok(text) => out.push((collection, rel, text)),
                Err(e) => log::warn!("skipping {}: {e}", file.display()),
            }
        }
        Ok(out)
    }
}

pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Path of `file` below `root` with `/` separators.
pub fn relative(root: &Path, file: &Path) -> String {
    file.strip_prefix(root)
        .unwrap_or(file)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Every regular file below `dir`, sorted.
pub fn walk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.is_file() {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Replaces `dst` with a copy of `src`.
pub fn copy_tree(src: &Path, dst: &Path) -> Result<()> {
    remove_dir(dst)?;
    std::fs::create_dir_all(dst)?;
    for f in walk_files(src)? {
        let target = dst.join(f.strip_prefix(src).expect("walked below src"));
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::copy(&f, &target).with_context(|| format!("copying {}", f.display()))?;
    }
    Ok(())
}

pub fn remove_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    Ok(())
}
