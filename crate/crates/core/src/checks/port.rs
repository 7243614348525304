//! Tolerant port-declaration parser.
//!
//! Accepted shapes include `input data_in[127:0]`, `output ap_uint<32> addr`,
//! `input wire [7:0] rx`, `hls::stream<ap_uint<8>> &in`, `int samples[64]`
//! and `data: ap_int<16>`. Anything else keeps its raw text and is reported
//! as unparseable.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
    Inout,
    Clock,
    Reset,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    /// Empty when the declaration could not be parsed.
    pub name: String,
    pub direction: Direction,
    pub width_bits: Option<u32>,
    pub type_name: Option<String>,
    pub raw: String,
    /// Set when parsing failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl PortDecl {
    pub fn is_parsed(&self) -> bool {
        self.warning.is_none()
    }
}

impl fmt::Display for PortDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

const CLOCK_NAMES: [&str; 4] = ["clk", "clock", "ap_clk", "aclk"];
const RESET_NAMES: [&str; 8] = ["rst", "reset", "rst_n", "resetn", "reset_n", "aresetn", "ap_rst", "ap_rst_n"];
const QUALIFIERS: [&str; 6] = ["wire", "reg", "logic", "const", "volatile", "signed"];

fn unparsed(raw: &str, why: &str) -> PortDecl {
    PortDecl {
        name: String::new(),
        direction: Direction::Unknown,
        width_bits: None,
        type_name: None,
        raw: raw.to_string(),
        warning: Some(format!("unparseable port `{}`: {why}", raw.trim())),
    }
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

/// Collapses whitespace and drops reference/pointer/const decoration.
fn normalize_type(t: &str) -> String {
    let t = t.replace(['&', '*'], " ");
    let words: Vec<&str> = t.split_whitespace().filter(|w| *w != "const" && *w != "volatile").collect();
    let mut s = words.join(" ");
    for p in ["<", ">", ",", "::"] {
        s = s.replace(&format!(" {p}"), p).replace(&format!("{p} "), p);
    }
    s
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()
    } else {
        s.parse().ok()
    }
}

/// First template argument of `outer<...>` (nesting-aware).
fn template_arg(t: &str) -> Option<&str> {
    let open = t.find('<')?;
    let close = t.rfind('>')?;
    if close <= open {
        return None;
    }
    let inner = &t[open + 1..close];
    let mut depth = 0;
    for (i, ch) in inner.char_indices() {
        match ch {
            '<' => depth += 1,
            '>' => depth -= 1,
            ',' if depth == 0 => return Some(inner[..i].trim()),
            _ => {}
        }
    }
    Some(inner.trim())
}

/// Bit width of a C/HLS type name, when known.
pub fn type_width(t: &str) -> Option<u32> {
    let t = normalize_type(t);
    let base = t.split('<').next().unwrap_or("").trim();
    let base = base.rsplit("::").next().unwrap_or(base);
    match base {
        "ap_uint" | "ap_int" | "ap_fixed" | "ap_ufixed" | "ac_int" | "ac_fixed" => {
            let n = parse_int(template_arg(&t)?)?;
            (1..=1 << 20).contains(&n).then_some(n as u32)
        }
        "stream" => type_width(template_arg(&t)?),
        "complex" => type_width(template_arg(&t)?).map(|w| w * 2),
        _ => match t.as_str() {
            "bool" | "ap_uint<1>" => Some(1),
            "char" | "signed char" | "unsigned char" | "int8_t" | "uint8_t" => Some(8),
            "short" | "unsigned short" | "short int" | "int16_t" | "uint16_t" | "half" => Some(16),
            "int" | "unsigned" | "unsigned int" | "int32_t" | "uint32_t" | "float" => Some(32),
            "long" | "unsigned long" | "long long" | "unsigned long long" | "int64_t" | "uint64_t" | "double"
            | "size_t" => Some(64),
            _ => None,
        },
    }
}

/// Removes the first `[a:b]` range, returning the remaining text and the range.
fn take_range(s: &str) -> Result<(String, Option<(String, String)>), &'static str> {
    let mut depth_angle = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '<' => depth_angle += 1,
            '>' => depth_angle -= 1,
            '[' if depth_angle == 0 => {
                let Some(rel) = s[i..].find(']') else { return Err("unclosed `[`") };
                let inner = &s[i + 1..i + rel];
                if let Some((a, b)) = inner.split_once(':') {
                    let rest = format!("{} {}", &s[..i], &s[i + rel + 1..]);
                    return Ok((rest, Some((a.trim().to_string(), b.trim().to_string()))));
                }
            }
            _ => {}
        }
    }
    Ok((s.to_string(), None))
}

/// Removes C array suffixes such as `[64]` (they do not change element width).
fn drop_array_suffixes(s: &str) -> Result<String, &'static str> {
    let mut out = String::new();
    let mut rest = s;
    while let Some(i) = rest.find('[') {
        let Some(j) = rest[i..].find(']') else { return Err("unclosed `[`") };
        out.push_str(&rest[..i]);
        out.push(' ');
        rest = &rest[i + j + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn parse_port(raw: &str) -> PortDecl {
    let text = raw.trim().trim_end_matches([';', ',']).trim();
    if text.is_empty() {
        return unparsed(raw, "empty");
    }
    let mut direction = Direction::Unknown;
    let mut body = text.to_string();
    if let Some((first, rest)) = text.split_once(char::is_whitespace) {
        let d = match first.to_ascii_lowercase().as_str() {
            "input" | "in" => Some(Direction::In),
            "output" | "out" => Some(Direction::Out),
            "inout" => Some(Direction::Inout),
            _ => None,
        };
        if let Some(d) = d {
            direction = d;
            body = rest.trim().to_string();
        }
    }

    // `name: type` form
    let colon_form = {
        let mut depth = 0i32;
        let mut at = None;
        for (i, ch) in body.char_indices() {
            match ch {
                '<' | '[' | '(' => depth += 1,
                '>' | ']' | ')' => depth -= 1,
                ':' if depth == 0 => {
                    let next_is_colon = body[i + 1..].starts_with(':');
                    let prev_is_colon = i > 0 && body[..i].ends_with(':');
                    if !next_is_colon && !prev_is_colon {
                        at = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        at
    };
    let (range, name, type_text) = if let Some(i) = colon_form {
        let name = body[..i].trim().to_string();
        let (t, range) = match take_range(&body[i + 1..]) {
            Ok(x) => x,
            Err(why) => return unparsed(raw, why),
        };
        (range, name, t.trim().to_string())
    } else {
        let (rest, range) = match take_range(&body) {
            Ok(x) => x,
            Err(why) => return unparsed(raw, why),
        };
        let rest = match drop_array_suffixes(&rest) {
            Ok(r) => r,
            Err(why) => return unparsed(raw, why),
        };
        let rest = rest.replace(['&', '*'], " ");
        let mut tokens: Vec<&str> = rest.split_whitespace().collect();
        let Some(name) = tokens.pop() else { return unparsed(raw, "no port name") };
        let type_tokens: Vec<&str> = tokens.into_iter().filter(|t| !QUALIFIERS.contains(t)).collect();
        (range, name.to_string(), type_tokens.join(" "))
    };
    if !is_ident(&name) {
        return unparsed(raw, "port name is not an identifier");
    }
    let type_name = if type_text.trim().is_empty() { None } else { Some(normalize_type(&type_text)) };
    let width_bits = match (&range, &type_name) {
        (Some((a, b)), _) => match (parse_int(a), parse_int(b)) {
            (Some(msb), Some(lsb)) => Some((msb - lsb).unsigned_abs() as u32 + 1),
            _ => None,
        },
        (None, Some(t)) => type_width(t),
        (None, None) => Some(1),
    };
    let lname = name.to_ascii_lowercase();
    if CLOCK_NAMES.contains(&lname.as_str()) {
        direction = Direction::Clock;
    } else if RESET_NAMES.contains(&lname.as_str()) {
        direction = Direction::Reset;
    }
    PortDecl {
        name,
        direction,
        width_bits,
        type_name,
        raw: raw.to_string(),
        warning: None,
    }
}
