//! Code execution in a throwaway scratch directory.
//!
//! Isolation is process-level only: fresh directory, scrubbed environment,
//! closed stdin, wall-clock limit and capped output. Network and filesystem
//! isolation beyond that are a deployment concern (containers, seccomp).

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{string_arg, ParamType, Tool, ToolError, ToolSignature};

pub const OUTPUT_CAP_BYTES: usize = 64 * 1024;
const SAFE_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub timed_out: bool,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("interpreter `{0}` not found")]
    InterpreterNotFound(String),
    #[error("timeout must be positive")]
    BadTimeout,
    #[error("sandbox I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    /// Interpreter command line; the script path is appended.
    pub interpreter: Vec<String>,
    /// Parent for per-call scratch directories.
    pub scratch_root: PathBuf,
    pub script_name: String,
    pub output_cap: usize,
}

impl ExecConfig {
    pub fn python(scratch_root: impl Into<PathBuf>) -> Self {
        ExecConfig {
            interpreter: vec!["python3".into()],
            scratch_root: scratch_root.into(),
            script_name: "main.py".into(),
            output_cap: OUTPUT_CAP_BYTES,
        }
    }
}

fn capture<R: Read + Send + 'static>(mut r: R, cap: usize) -> JoinHandle<String> {
    std::thread::spawn(move || {
        let mut kept = Vec::new();
        let mut dropped = 0usize;
        let mut buf = [0u8; 8192];
        loop {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    let take = room.min(n);
                    kept.extend_from_slice(&buf[..take]);
                    dropped += n - take;
                }
            }
        }
        let mut s = String::from_utf8_lossy(&kept).into_owned();
        if dropped > 0 {
            s.push_str(&format!("\n[... truncated {dropped} bytes]"));
        }
        s
    })
}

fn wait_with_deadline(child: &mut Child, timeout: Duration) -> std::io::Result<Option<std::process::ExitStatus>> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(None);
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

/// Runs `source` with the configured interpreter inside a fresh scratch
/// directory, which is deleted afterwards.
pub fn exec_code(config: &ExecConfig, source: &str, timeout_s: f64) -> Result<ExecResult, ExecError> {
    if !(timeout_s > 0.0) || !timeout_s.is_finite() {
        return Err(ExecError::BadTimeout);
    }
    let program = config
        .interpreter
        .first()
        .ok_or_else(|| ExecError::InterpreterNotFound(String::new()))?;
    std::fs::create_dir_all(&config.scratch_root)?;
    let scratch = tempfile::Builder::new().prefix("exec-").tempdir_in(&config.scratch_root)?;
    let script = scratch.path().join(&config.script_name);
    std::fs::write(&script, source)?;

    let mut cmd = Command::new(program);
    cmd.args(&config.interpreter[1..])
        .arg(&config.script_name)
        .current_dir(scratch.path())
        .env_clear()
        .env("PATH", SAFE_PATH)
        .env("HOME", scratch.path())
        .env("TMPDIR", scratch.path())
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONHASHSEED", "0")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ExecError::InterpreterNotFound(program.clone()))
        }
        Err(e) => return Err(e.into()),
    };
    let out = capture(child.stdout.take().expect("piped stdout"), config.output_cap);
    let err = capture(child.stderr.take().expect("piped stderr"), config.output_cap);
    let status = wait_with_deadline(&mut child, Duration::from_secs_f64(timeout_s))?;
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(match status {
        Some(s) => ExecResult {
            stdout,
            stderr,
            exit_code: s.code().unwrap_or(-1),
            timed_out: false,
        },
        None => ExecResult {
            stdout,
            stderr,
            exit_code: -1,
            timed_out: true,
        },
    })
}

/// The `python_run` action.
pub struct PythonRunTool {
    signature: ToolSignature,
    config: ExecConfig,
    timeout_s: f64,
}

impl PythonRunTool {
    pub const NAME: &'static str = "python_run";

    pub fn new(config: ExecConfig, timeout_s: f64) -> Self {
        PythonRunTool {
            signature: ToolSignature::new(
                Self::NAME,
                "Run a Python 3 script and return what it prints. Use it for numeric constants and checks.",
            )
            .param("code", ParamType::String, "Complete Python source to execute."),
            config,
            timeout_s,
        }
    }

    pub fn scratch_root(&self) -> &Path {
        &self.config.scratch_root
    }
}

impl Tool for PythonRunTool {
    fn signature(&self) -> &ToolSignature {
        &self.signature
    }

    fn call(&self, args: &Map<String, Value>) -> Result<String, ToolError> {
        let code = string_arg(args, "code")?;
        let r = exec_code(&self.config, code, self.timeout_s).map_err(|e| ToolError::Failed(e.to_string()))?;
        if r.timed_out {
            return Err(ToolError::Failed(format!(
                "timed out after {}s\nstdout:\n{}\nstderr:\n{}",
                self.timeout_s, r.stdout, r.stderr
            )));
        }
        if r.exit_code != 0 {
            return Err(ToolError::Failed(format!(
                "exit code {}\nstdout:\n{}\nstderr:\n{}",
                r.exit_code, r.stdout, r.stderr
            )));
        }
        if r.stderr.is_empty() {
            Ok(r.stdout)
        } else {
            Ok(format!("{}\n[stderr]\n{}", r.stdout, r.stderr))
        }
    }
}
