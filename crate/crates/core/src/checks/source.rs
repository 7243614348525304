//! Lightweight C++ source scanning: comment/string stripping, pragmas,
//! bracket balance and top-level function definitions.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub line: usize,
    pub text: String,
}

/// A scanned source file. Stripped text keeps byte offsets and line breaks.
#[derive(Debug, Clone)]
pub struct Scanned {
    /// Comments and string/char literals blanked.
    pub code: String,
    /// Comments blanked, literals kept.
    pub code_with_strings: String,
    pub comments: Vec<Comment>,
}

fn blank(out: &mut String, ch: char) {
    if ch == '\n' {
        out.push('\n');
    } else {
        for _ in 0..ch.len_utf8() {
            out.push(' ');
        }
    }
}

pub fn scan(text: &str) -> Scanned {
    #[derive(PartialEq)]
    enum St {
        Code,
        Line,
        Block,
        Str(char),
    }
    let mut code = String::with_capacity(text.len());
    let mut with_strings = String::with_capacity(text.len());
    let mut comments = Vec::new();
    let mut cur = String::new();
    let mut cur_line = 1;
    let mut line = 1;
    let mut st = St::Code;
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        match st {
            St::Code => match ch {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    st = St::Line;
                    cur_line = line;
                    for s in [&mut code, &mut with_strings] {
                        s.push_str("  ");
                    }
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    st = St::Block;
                    cur_line = line;
                    for s in [&mut code, &mut with_strings] {
                        s.push_str("  ");
                    }
                }
                '"' | '\'' => {
                    st = St::Str(ch);
                    code.push(' ');
                    with_strings.push(ch);
                }
                _ => {
                    code.push(ch);
                    with_strings.push(ch);
                }
            },
            St::Line => {
                if ch == '\n' {
                    comments.push(Comment { line: cur_line, text: std::mem::take(&mut cur) });
                    st = St::Code;
                    code.push('\n');
                    with_strings.push('\n');
                } else {
                    cur.push(ch);
                    blank(&mut code, ch);
                    blank(&mut with_strings, ch);
                }
            }
            St::Block => {
                if ch == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    comments.push(Comment { line: cur_line, text: std::mem::take(&mut cur) });
                    st = St::Code;
                    for s in [&mut code, &mut with_strings] {
                        s.push_str("  ");
                    }
                } else {
                    cur.push(ch);
                    blank(&mut code, ch);
                    blank(&mut with_strings, ch);
                }
            }
            St::Str(q) => {
                with_strings.push(ch);
                if ch == '\\' {
                    code.push(' ');
                    if let Some(n) = chars.next() {
                        with_strings.push(n);
                        blank(&mut code, n);
                        if n == '\n' {
                            line += 1;
                        }
                    }
                    continue;
                }
                if ch == q || ch == '\n' {
                    st = St::Code;
                }
                blank(&mut code, ch);
            }
        }
        if ch == '\n' {
            line += 1;
        }
    }
    if matches!(st, St::Line | St::Block) {
        comments.push(Comment { line: cur_line, text: cur });
    }
    Scanned { code, code_with_strings: with_strings, comments }
}

pub fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PragmaKind {
    Pipeline,
    Unroll,
    ArrayPartition,
    Interface,
    Other,
}

impl PragmaKind {
    pub fn label(self) -> &'static str {
        match self {
            PragmaKind::Pipeline => "PIPELINE",
            PragmaKind::Unroll => "UNROLL",
            PragmaKind::ArrayPartition => "ARRAY_PARTITION",
            PragmaKind::Interface => "INTERFACE",
            PragmaKind::Other => "OTHER",
        }
    }
}

/// Directives other than the three named kinds that still count as optimization.
pub const OTHER_OPTIMIZATIONS: [&str; 6] =
    ["DATAFLOW", "ARRAY_RESHAPE", "LOOP_FLATTEN", "LOOP_MERGE", "LATENCY", "INLINE"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pragma {
    pub line: usize,
    pub kind: PragmaKind,
    /// Directive word as written, upper-cased.
    pub directive: String,
    pub options: String,
    pub variable: Option<String>,
    pub port: Option<String>,
}

impl Pragma {
    pub fn is_optimization(&self) -> bool {
        match self.kind {
            PragmaKind::Pipeline | PragmaKind::Unroll | PragmaKind::ArrayPartition => true,
            PragmaKind::Interface => false,
            PragmaKind::Other => OTHER_OPTIMIZATIONS.contains(&self.directive.as_str()),
        }
    }
}

fn pragma_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t]*#[ \t]*pragma[ \t]+HLS[ \t]+([A-Za-z_]+)([^\n]*)$").unwrap())
}

fn option_value(options: &str, key: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\b([A-Za-z_]+)\s*=\s*([A-Za-z_][\w\.]*)").unwrap());
    re.captures_iter(options)
        .find(|c| c[1].eq_ignore_ascii_case(key))
        .map(|c| c[2].to_string())
}

pub fn pragmas(scanned: &Scanned) -> Vec<Pragma> {
    pragma_re()
        .captures_iter(&scanned.code)
        .map(|c| {
            let directive = c[1].to_ascii_uppercase();
            let kind = match directive.as_str() {
                "PIPELINE" => PragmaKind::Pipeline,
                "UNROLL" => PragmaKind::Unroll,
                "ARRAY_PARTITION" => PragmaKind::ArrayPartition,
                "INTERFACE" => PragmaKind::Interface,
                _ => PragmaKind::Other,
            };
            let options = c[2].trim().to_string();
            Pragma {
                line: line_of(&scanned.code, c.get(0).unwrap().start()),
                kind,
                variable: option_value(&options, "variable"),
                port: option_value(&options, "port"),
                directive,
                options,
            }
        })
        .collect()
}

/// Identifiers appearing in code outside preprocessor lines.
pub fn identifiers(code: &str) -> BTreeSet<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").unwrap());
    let mut out = BTreeSet::new();
    for line in code.lines() {
        if line.trim_start().starts_with('#') {
            continue;
        }
        out.extend(re.find_iter(line).map(|m| m.as_str().to_string()));
    }
    out
}

/// First bracket imbalance, as (line, message).
pub fn bracket_imbalance(code: &str) -> Option<(usize, String)> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    let mut line = 1;
    for ch in code.chars() {
        match ch {
            '\n' => line += 1,
            '{' | '(' | '[' => stack.push((ch, line)),
            '}' | ')' | ']' => {
                let want = match ch {
                    '}' => '{',
                    ')' => '(',
                    _ => '[',
                };
                match stack.pop() {
                    Some((open, _)) if open == want => {}
                    Some((open, l)) => {
                        return Some((line, format!("`{ch}` closes `{open}` opened on line {l}")));
                    }
                    None => return Some((line, format!("unmatched `{ch}`"))),
                }
            }
            _ => {}
        }
    }
    stack.pop().map(|(open, l)| (l, format!("`{open}` is never closed")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    /// Possibly qualified, e.g. `Fft::run`.
    pub name: String,
    pub line: usize,
    pub body: String,
}

impl FunctionDef {
    pub fn base_name(&self) -> &str {
        self.name.rsplit("::").next().unwrap_or(&self.name)
    }

    /// `{}` or a body that only returns a constant zero / nothing.
    pub fn is_trivial(&self) -> bool {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"^\s*(return\s*(0|0\.0|false)?\s*;)?\s*$").unwrap());
        re.is_match(&self.body)
    }
}

const NOT_FUNCTIONS: [&str; 8] = ["if", "for", "while", "switch", "catch", "return", "sizeof", "do"];

/// Function definitions at namespace scope. Namespace and `extern "C"` blocks
/// are transparent. Expects stripped code.
pub fn function_definitions(code: &str) -> Vec<FunctionDef> {
    static HEAD: OnceLock<Regex> = OnceLock::new();
    static SCOPE: OnceLock<Regex> = OnceLock::new();
    let head = HEAD.get_or_init(|| {
        Regex::new(r"([A-Za-z_~][\w:~]*)\s*\((?:[^()]|\([^()]*\))*\)\s*(?:const\s*)?(?:noexcept\s*)?(?:->[^{;]*)?$")
            .unwrap()
    });
    let scope = SCOPE.get_or_init(|| Regex::new(r"(?:\bnamespace\s*[\w:]*|\bextern\s*)\s*$").unwrap());

    let bytes = code.as_bytes();
    let mut defs = Vec::new();
    // Each entry: whether the brace opened a transparent scope.
    let mut stack: Vec<bool> = Vec::new();
    let mut seg_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                let opaque_depth = stack.iter().filter(|t| !**t).count();
                if opaque_depth == 0 {
                    let header = code[seg_start..i].trim_end();
                    // Drop preprocessor lines from the header text.
                    let header: String = header
                        .lines()
                        .filter(|l| !l.trim_start().starts_with('#'))
                        .collect::<Vec<_>>()
                        .join("\n");
                    if scope.is_match(&header) {
                        stack.push(true);
                        seg_start = i + 1;
                        i += 1;
                        continue;
                    }
                    if let Some(c) = head.captures(&header) {
                        let name = c[1].to_string();
                        let base = name.rsplit("::").next().unwrap_or(&name);
                        if !NOT_FUNCTIONS.contains(&base) {
                            if let Some(end) = matching_brace(bytes, i) {
                                defs.push(FunctionDef {
                                    name,
                                    line: line_of(code, i),
                                    body: code[i + 1..end].to_string(),
                                });
                                i = end + 1;
                                seg_start = i;
                                continue;
                            }
                        }
                    }
                }
                stack.push(false);
            }
            b'}' => {
                stack.pop();
                if stack.iter().all(|t| *t) {
                    seg_start = i + 1;
                }
            }
            b';' if stack.iter().all(|t| *t) => seg_start = i + 1,
            _ => {}
        }
        i += 1;
    }
    defs
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, b) in bytes.iter().enumerate().skip(open) {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

pub fn has_main(code: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bint\s+main\s*\(").unwrap()).is_match(code)
}

/// Quoted include targets, read from comment-stripped text.
pub fn quoted_includes(code_with_strings: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"(?m)^[ \t]*#[ \t]*include[ \t]*"([^"\n]+)""#).unwrap());
    re.captures_iter(code_with_strings).map(|c| c[1].to_string()).collect()
}
