//! Line-delimited JSON transcripts: recording and replay.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Backend, Clock, CompletionRequest, CompletionResponse, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub sequence_no: u64,
    pub request: CompletionRequest,
    pub response: CompletionResponse,
    pub timestamp: String,
}

struct SinkState {
    writer: Option<BufWriter<File>>,
    next_seq: u64,
}

/// Append-only transcript file. Appends are serialized and flushed per entry.
pub struct TranscriptSink {
    path: PathBuf,
    clock: Arc<dyn Clock>,
    state: Mutex<SinkState>,
}

impl TranscriptSink {
    /// Creates (truncating) the transcript file, making parent directories.
    pub fn create(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, GatewayError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| GatewayError::Io(format!("{}: {e}", parent.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Ok(TranscriptSink {
            path: path.to_path_buf(),
            clock,
            state: Mutex::new(SinkState {
                writer: Some(BufWriter::new(file)),
                next_seq: 0,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one exchange, assigning the next sequence number.
    pub fn record(
        &self,
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> Result<TranscriptEntry, GatewayError> {
        let mut st = self.state.lock().expect("sink lock");
        let seq = st.next_seq;
        let Some(writer) = st.writer.as_mut() else {
            return Err(GatewayError::Io(format!("transcript {} is closed", self.path.display())));
        };
        let entry = TranscriptEntry {
            sequence_no: seq,
            request: request.clone(),
            response: response.clone(),
            timestamp: self.clock.now(),
        };
        let line = serde_json::to_string(&entry).map_err(|e| GatewayError::Io(e.to_string()))?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .and_then(|_| writer.flush())
            .map_err(|e| GatewayError::Io(format!("{}: {e}", self.path.display())))?;
        st.next_seq += 1;
        Ok(entry)
    }

    pub fn close(&self) -> Result<(), GatewayError> {
        let mut st = self.state.lock().expect("sink lock");
        if let Some(mut w) = st.writer.take() {
            w.flush().map_err(|e| GatewayError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

/// Forwards to `inner` and records every successful exchange.
pub struct Recorder<B> {
    inner: B,
    sink: TranscriptSink,
}

impl<B: Backend> Recorder<B> {
    pub fn new(inner: B, sink: TranscriptSink) -> Self {
        Recorder { inner, sink }
    }

    pub fn sink(&self) -> &TranscriptSink {
        &self.sink
    }
}

impl<B: Backend> Backend for Recorder<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let response = self.inner.complete(request)?;
        self.sink.record(request, &response)?;
        Ok(response)
    }
}

/// Parses a `.jsonl` transcript. Blank lines are ignored; sequence numbers
/// must be strictly increasing.
pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptEntry>, GatewayError> {
    let mut out: Vec<TranscriptEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(line).map_err(|e| GatewayError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if entry.sequence_no <= prev.sequence_no {
                return Err(GatewayError::Parse {
                    line: i + 1,
                    message: format!(
                        "sequence_no {} does not follow {}",
                        entry.sequence_no, prev.sequence_no
                    ),
                });
            }
        }
        out.push(entry);
    }
    Ok(out)
}

/// Serves recorded responses in order, refusing requests that differ from
/// what was recorded.
#[derive(Debug)]
pub struct ReplayBackend {
    source: String,
    entries: Vec<TranscriptEntry>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(source: impl Into<String>, entries: Vec<TranscriptEntry>) -> Self {
        ReplayBackend {
            source: source.into(),
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::new(path.display().to_string(), parse_transcript(&text)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let Some(entry) = self.entries.get(*cursor) else {
            return Err(GatewayError::ScriptExhausted { calls: *cursor });
        };
        if let Some(diff) = request_diff(&entry.request, request) {
            return Err(GatewayError::ReplayMismatch {
                sequence_no: entry.sequence_no,
                diff: format!("{}\n{diff}", self.source),
            });
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}

/// First difference between a recorded and an actual request, if any.
pub(crate) fn request_diff(recorded: &CompletionRequest, actual: &CompletionRequest) -> Option<String> {
    if recorded.model_role != actual.model_role {
        return Some(format!(
            "model role: recorded {:?}, actual {:?}",
            recorded.model_role, actual.model_role
        ));
    }
    if recorded.messages.len() != actual.messages.len() {
        return Some(format!(
            "message count: recorded {}, actual {}",
            recorded.messages.len(),
            actual.messages.len()
        ));
    }
    for (i, (r, a)) in recorded.messages.iter().zip(&actual.messages).enumerate() {
        if r.role != a.role {
            return Some(format!("message {i}: role recorded {:?}, actual {:?}", r.role, a.role));
        }
        if r.content != a.content {
            let rl: Vec<&str> = r.content.split('\n').collect();
            let al: Vec<&str> = a.content.split('\n').collect();
            let n = rl.iter().zip(&al).take_while(|(x, y)| x == y).count();
            return Some(format!(
                "message {i} ({}), line {}:\n- {}\n+ {}",
                r.role.as_str(),
                n + 1,
                rl.get(n).copied().unwrap_or("<end of text>"),
                al.get(n).copied().unwrap_or("<end of text>")
            ));
        }
    }
    None
}
