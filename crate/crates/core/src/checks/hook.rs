//! Operator-configured external tools (compiler front end, HLS synthesis).

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolHook {
    /// Program and arguments. `{file}`, `{dir}` and `{top}` are substituted
    /// in every element.
    pub command: Vec<String>,
    /// Matched against stderr; any match fails the run.
    #[serde(default = "default_error_pattern")]
    pub error_pattern: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_error_pattern() -> String {
    r"(?i)\berror\b".to_string()
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Error)]
pub enum HookError {
    #[error("hook command template is empty")]
    EmptyCommand,
    #[error("bad error pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("hook command `{0}` not found")]
    NotFound(String),
    #[error("hook I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HookRun {
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub stderr: String,
    /// Lines of stderr matching the error pattern.
    pub error_lines: Vec<String>,
}

impl HookRun {
    pub fn passed(&self) -> bool {
        self.exit_code == Some(0) && !self.timed_out && self.error_lines.is_empty()
    }
}

impl ToolHook {
    pub fn new(command: &[&str]) -> Self {
        ToolHook {
            command: command.iter().map(|s| s.to_string()).collect(),
            error_pattern: default_error_pattern(),
            timeout_s: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<Regex, HookError> {
        if self.command.is_empty() || self.command[0].trim().is_empty() {
            return Err(HookError::EmptyCommand);
        }
        Ok(Regex::new(&self.error_pattern)?)
    }

    /// Runs the hook with `cwd` as working directory.
    pub fn run(&self, cwd: &Path, vars: &[(&str, &str)]) -> Result<HookRun, HookError> {
        let pattern = self.validate()?;
        let argv: Vec<String> = self
            .command
            .iter()
            .map(|a| vars.iter().fold(a.clone(), |s, (k, v)| s.replace(&format!("{{{k}}}"), v)))
            .collect();
        let mut child = match Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(cwd)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
        {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(HookError::NotFound(argv[0].clone())),
            Err(e) => return Err(e.into()),
        };
        let mut pipe = child.stderr.take().expect("piped stderr");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = std::io::Read::read_to_end(&mut pipe, &mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        });
        let deadline = Instant::now() + Duration::from_secs(self.timeout_s.max(1));
        let status = loop {
            if let Some(s) = child.try_wait()? {
                break Some(s);
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let stderr = reader.join().unwrap_or_default();
        let error_lines = stderr.lines().filter(|l| pattern.is_match(l)).map(str::to_string).collect();
        Ok(HookRun {
            exit_code: status.and_then(|s| s.code()),
            timed_out: status.is_none(),
            stderr,
            error_lines,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_and_fail() {
        let dir = tempfile::tempdir().unwrap();
        let ok = ToolHook::new(&["true"]).run(dir.path(), &[]).unwrap();
        assert!(ok.passed());
        let bad = ToolHook::new(&["false"]).run(dir.path(), &[]).unwrap();
        assert!(!bad.passed());
    }

    #[test]
    fn stderr_pattern_fails_run() {
        let dir = tempfile::tempdir().unwrap();
        let hook = ToolHook::new(&["sh", "-c", "echo 'x.cpp:3: error: boom' >&2; echo {file} >&2"]);
        let run = hook.run(dir.path(), &[("file", "x.cpp")]).unwrap();
        assert_eq!(run.exit_code, Some(0));
        assert_eq!(run.error_lines, vec!["x.cpp:3: error: boom"]);
        assert!(run.stderr.contains("x.cpp\n"));
        assert!(!run.passed());
    }

    #[test]
    fn missing_command() {
        let dir = tempfile::tempdir().unwrap();
        let err = ToolHook::new(&["definitely-not-a-command-xyz"]).run(dir.path(), &[]).unwrap_err();
        assert!(matches!(err, HookError::NotFound(_)));
        assert!(matches!(ToolHook::new(&[]).validate(), Err(HookError::EmptyCommand)));
    }
}
