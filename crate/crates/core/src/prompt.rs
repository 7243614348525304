//! Prompt templates and iterative prompt augmentation.
//!
//! A prompt for step `i` is the selected template text, followed by one
//! observation block per prior action outcome (in step order), followed by
//! the optional ancillary text the controlling node inserted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing binding for slot `{0}`")]
    MissingBinding(String),
    #[error("outcomes are not sorted by step index (step {found} follows step {previous})")]
    UnsortedOutcomes { previous: usize, found: usize },
    #[error("no template registered for role `{0}`")]
    UnknownRole(RoleTag),
    #[error("a template for role `{0}` is already registered")]
    DuplicateRole(RoleTag),
    #[error("template id `{0}` is already registered")]
    DuplicateId(String),
    #[error("template `{id}` references undeclared slot `{slot}`")]
    UndeclaredSlot { id: String, slot: String },
    #[error("assembled prompt is {len} chars, limit is {limit}")]
    TooLong { len: usize, limit: usize },
    #[error("template file `{0}` does not name a known role")]
    UnknownTemplateFile(String),
    #[error("reading templates: {0}")]
    Io(String),
}

/// Which agent a template drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    QuestionGen,
    Generation,
    Evaluation,
    Review,
    SystemDesign,
    ModuleDesign,
    Integration,
    FinalEval,
    Redesign,
}

impl RoleTag {
    pub const ALL: [RoleTag; 9] = [
        RoleTag::QuestionGen,
        RoleTag::Generation,
        RoleTag::Evaluation,
        RoleTag::Review,
        RoleTag::SystemDesign,
        RoleTag::ModuleDesign,
        RoleTag::Integration,
        RoleTag::FinalEval,
        RoleTag::Redesign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::QuestionGen => "question_gen",
            RoleTag::Generation => "generation",
            RoleTag::Evaluation => "evaluation",
            RoleTag::Review => "review",
            RoleTag::SystemDesign => "system_design",
            RoleTag::ModuleDesign => "module_design",
            RoleTag::Integration => "integration",
            RoleTag::FinalEval => "final_eval",
            RoleTag::Redesign => "redesign",
        }
    }

    pub fn parse(s: &str) -> Option<RoleTag> {
        RoleTag::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// Splits a body into literal text and `{slot}` references.
///
/// Slots are `{identifier}`; `{{` and `}}` are literal braces. Any other
/// brace is kept as text, so code snippets survive unescaped as long as
/// they do not look like `{word}`.
fn tokenize(body: &str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut text = String::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < body.len() {
        let rest = &body[i..];
        if rest.starts_with("{{") {
            text.push('{');
            i += 2;
            continue;
        }
        if rest.starts_with("}}") {
            text.push('}');
            i += 2;
            continue;
        }
        if bytes[i] == b'{' {
            if let Some(end) = rest[1..].find('}') {
                let name = &rest[1..1 + end];
                if crate::model::is_identifier(name) {
                    if !text.is_empty() {
                        out.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    out.push(Piece::Slot(name.to_string()));
                    i += end + 2;
                    continue;
                }
            }
        }
        let ch = rest.chars().next().expect("non-empty remainder");
        text.push(ch);
        i += ch.len_utf8();
    }
    if !text.is_empty() {
        out.push(Piece::Text(text));
    }
    out
}

/// Slot names referenced by a template body, in first-use order.
pub fn referenced_slots(body: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    tokenize(body)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Slot(s) if seen.insert(s.clone()) => Some(s),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub role: RoleTag,
    pub body: String,
    pub slots: Vec<String>,
}

impl PromptTemplate {
    /// Builds a template whose declared slots are exactly those its body uses.
    pub fn new(id: impl Into<String>, role: RoleTag, body: impl Into<String>) -> Self {
        let body = body.into();
        let slots = referenced_slots(&body);
        PromptTemplate {
            id: id.into(),
            role,
            body,
            slots,
        }
    }

    /// Builds a template with an explicit slot list, rejecting bodies that
    /// reference anything undeclared.
    pub fn with_slots(
        id: impl Into<String>,
        role: RoleTag,
        body: impl Into<String>,
        slots: &[&str],
    ) -> Result<Self, PromptError> {
        let id = id.into();
        let body = body.into();
        let declared: BTreeSet<&str> = slots.iter().copied().collect();
        if let Some(slot) = referenced_slots(&body).into_iter().find(|s| !declared.contains(s.as_str())) {
            return Err(PromptError::UndeclaredSlot { id, slot });
        }
        Ok(PromptTemplate {
            id,
            role,
            body,
            slots: slots.iter().map(|s| s.to_string()).collect(),
        })
    }
}

/// Replaces every slot in the template body with its binding.
pub fn render_template(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.body.len());
    for piece in tokenize(&template.body) {
        match piece {
            Piece::Text(t) => out.push_str(&t),
            Piece::Slot(s) => {
                let v = bindings.get(&s).ok_or(PromptError::MissingBinding(s))?;
                out.push_str(v);
            }
        }
    }
    Ok(out)
}

/// One template per role.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    by_role: BTreeMap<RoleTag, PromptTemplate>,
}

impl TemplateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, template: PromptTemplate) -> Result<(), PromptError> {
        if self.by_role.contains_key(&template.role) {
            return Err(PromptError::DuplicateRole(template.role));
        }
        if self.by_role.values().any(|t| t.id == template.id) {
            return Err(PromptError::DuplicateId(template.id));
        }
        self.by_role.insert(template.role, template);
        Ok(())
    }

    /// Registers or overwrites the template for its role.
    pub fn replace(&mut self, template: PromptTemplate) {
        self.by_role.insert(template.role, template);
    }

    pub fn select(&self, role: RoleTag) -> Result<&PromptTemplate, PromptError> {
        self.by_role.get(&role).ok_or(PromptError::UnknownRole(role))
    }

    pub fn roles(&self) -> impl Iterator<Item = RoleTag> + '_ {
        self.by_role.keys().copied()
    }

    /// The templates shipped with the crate.
    pub fn builtin() -> Self {
        let mut set = TemplateSet::new();
        for (role, body) in BUILTIN_TEMPLATES {
            set.register(PromptTemplate::new(role.as_str(), role, body))
                .expect("builtin templates are unique");
        }
        set
    }

    /// Builtins overridden by any `<role_tag>` or `<role_tag>.txt` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = TemplateSet::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| PromptError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for path in paths {
            let stem = path
                .file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.strip_suffix(".txt").unwrap_or(n).to_string())
                .unwrap_or_default();
            let role = RoleTag::parse(&stem).ok_or_else(|| PromptError::UnknownTemplateFile(path.display().to_string()))?;
            let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
            set.replace(PromptTemplate::new(stem, role, body));
        }
        Ok(set)
    }
}

pub const BUILTIN_TEMPLATES: [(RoleTag, &str); 9] = [
    (RoleTag::QuestionGen, include_str!("../templates/question_gen.txt")),
    (RoleTag::Generation, include_str!("../templates/generation.txt")),
    (RoleTag::Evaluation, include_str!("../templates/evaluation.txt")),
    (RoleTag::Review, include_str!("../templates/review.txt")),
    (RoleTag::SystemDesign, include_str!("../templates/system_design.txt")),
    (RoleTag::ModuleDesign, include_str!("../templates/module_design.txt")),
    (RoleTag::Integration, include_str!("../templates/integration.txt")),
    (RoleTag::FinalEval, include_str!("../templates/final_eval.txt")),
    (RoleTag::Redesign, include_str!("../templates/redesign.txt")),
];

/// The result of one action taken outside the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub step_index: usize,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, String>,
    pub output: String,
}

/// Text inserted by the node overseeing an agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncillaryText {
    pub body: String,
    pub origin: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Template,
    Observation,
    Ancillary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub text: String,
    pub provenance: Vec<Segment>,
}

const OBS_OPEN: &str = "[OBSERVATION ";
const OBS_CLOSE: &str = "[/OBSERVATION]";
const ANC_OPEN: &str = "[ANCILLARY ";
const ANC_CLOSE: &str = "[/ANCILLARY]";

/// True for lines that could be mistaken for a block delimiter once any
/// leading backslashes are removed.
fn is_delimiter_like(line: &str) -> bool {
    let t = line.trim_start_matches('\\');
    t.starts_with(OBS_OPEN) || t.starts_with(OBS_CLOSE) || t.starts_with(ANC_OPEN) || t.starts_with(ANC_CLOSE)
}

/// Prefixes one backslash to delimiter-like lines; reversed by [`unescape_body`].
fn escape_body(text: &str) -> String {
    if !text.split('\n').any(is_delimiter_like) {
        return text.to_string();
    }
    text.split('\n')
        .map(|l| if is_delimiter_like(l) { format!("\\{l}") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n")
}

fn unescape_body(text: &str) -> String {
    text.split('\n')
        .map(|l| if is_delimiter_like(l) && l.starts_with('\\') { &l[1..] } else { l })
        .collect::<Vec<_>>()
        .join("\n")
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r', ']'], " ")
}

/// Renders a single observation block.
pub fn observation_block(outcome: &ActionOutcome) -> String {
    format!(
        "\n{OBS_OPEN}{} | {}]\n{}\n{OBS_CLOSE}\n",
        outcome.step_index,
        one_line(&outcome.tool_name),
        escape_body(&outcome.output)
    )
}

fn ancillary_block(anc: &AncillaryText) -> String {
    format!("\n{ANC_OPEN}| {}]\n{}\n{ANC_CLOSE}\n", one_line(&anc.origin), escape_body(&anc.body))
}

/// Template text, then every outcome in step order, then the ancillary text.
pub fn assemble(
    template_text: &str,
    outcomes: &[ActionOutcome],
    ancillary: Option<&AncillaryText>,
) -> Result<AssembledPrompt, PromptError> {
    for pair in outcomes.windows(2) {
        if pair[1].step_index <= pair[0].step_index {
            return Err(PromptError::UnsortedOutcomes {
                previous: pair[0].step_index,
                found: pair[1].step_index,
            });
        }
    }
    let mut text = template_text.to_string();
    let mut provenance = vec![Segment {
        kind: SegmentKind::Template,
        source: "template".into(),
    }];
    for o in outcomes {
        text.push_str(&observation_block(o));
        provenance.push(Segment {
            kind: SegmentKind::Observation,
            source: format!("{}:{}", o.step_index, o.tool_name),
        });
    }
    if let Some(anc) = ancillary {
        text.push_str(&ancillary_block(anc));
        provenance.push(Segment {
            kind: SegmentKind::Ancillary,
            source: anc.origin.clone(),
        });
    }
    Ok(AssembledPrompt { text, provenance })
}

/// [`assemble`] with an upper bound on the resulting text length.
pub fn assemble_bounded(
    template_text: &str,
    outcomes: &[ActionOutcome],
    ancillary: Option<&AncillaryText>,
    max_chars: usize,
) -> Result<AssembledPrompt, PromptError> {
    let p = assemble(template_text, outcomes, ancillary)?;
    let len = p.text.chars().count();
    if len > max_chars {
        return Err(PromptError::TooLong { len, limit: max_chars });
    }
    Ok(p)
}

/// An observation block recovered from assembled text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedObservation {
    pub step_index: usize,
    pub tool_name: String,
    pub output: String,
    /// Byte range of the whole block (including its leading newline).
    pub span: std::ops::Range<usize>,
}

/// Recovers observation blocks, in order, from an assembled prompt.
///
/// The template part is skipped: a block starts only at a line that is
/// exactly an observation header following a blank-line boundary produced by
/// [`assemble`]. Malformed trailing data ends the scan.
pub fn parse_observations(text: &str) -> Vec<ParsedObservation> {
    let mut out = Vec::new();
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find(&format!("\n{OBS_OPEN}")) {
        let start = search_from + rel;
        let header_start = start + 1;
        let Some(header_len) = text[header_start..].find('\n') else { break };
        let header = &text[header_start..header_start + header_len];
        let Some(parsed) = parse_header(header) else {
            search_from = header_start;
            continue;
        };
        let body_start = header_start + header_len + 1;
        let close = format!("\n{OBS_CLOSE}\n");
        let Some(close_rel) = text[body_start.saturating_sub(1)..].find(&close) else { break };
        let close_at = body_start.saturating_sub(1) + close_rel;
        let raw_body = if close_at >= body_start { &text[body_start..close_at] } else { "" };
        let end = close_at + close.len();
        out.push(ParsedObservation {
            step_index: parsed.0,
            tool_name: parsed.1,
            output: unescape_body(raw_body),
            span: start..end,
        });
        search_from = end - 1;
    }
    out
}

fn parse_header(header: &str) -> Option<(usize, String)> {
    let inner = header.strip_prefix(OBS_OPEN)?.strip_suffix(']')?;
    let (idx, tool) = inner.split_once(" | ")?;
    Some((idx.parse().ok()?, tool.to_string()))
}
