//! Structured final responses: field-level schemas, validation, and the
//! response tools agents must call to finish.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::tools::{ParamType, ToolSignature};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Text,
    NonEmptyText,
    TextList,
    Bool,
    /// Object of name -> boolean.
    FlagMap,
    Objects(Box<ResponseSchema>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSchema {
    pub id: String,
    pub description: String,
    pub fields: Vec<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub schema_id: String,
    pub payload: Map<String, Value>,
}

impl StructuredResponse {
    pub fn parse<T: DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_value(Value::Object(self.payload.clone()))
    }
}

/// Result of validating a payload that passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub payload: Map<String, Value>,
    /// Dropped unknown fields, as warnings.
    pub warnings: Vec<String>,
}

impl ResponseSchema {
    pub fn new(id: &str, description: &str) -> Self {
        ResponseSchema {
            id: id.to_string(),
            description: description.to_string(),
            fields: Vec::new(),
        }
    }

    fn field(mut self, name: &str, kind: FieldKind, required: bool, description: &str) -> Self {
        self.fields.push(FieldSpec {
            name: name.to_string(),
            kind,
            required,
            description: description.to_string(),
        });
        self
    }

    pub fn required(self, name: &str, kind: FieldKind, description: &str) -> Self {
        self.field(name, kind, true, description)
    }

    pub fn optional(self, name: &str, kind: FieldKind, description: &str) -> Self {
        self.field(name, kind, false, description)
    }

    /// The tool the model calls to deliver this response.
    pub fn to_signature(&self) -> ToolSignature {
        let mut sig = ToolSignature::new(&self.id, &self.description);
        for f in &self.fields {
            let t = match &f.kind {
                FieldKind::Text | FieldKind::NonEmptyText => ParamType::String,
                FieldKind::TextList => ParamType::StringArray,
                FieldKind::Bool => ParamType::Boolean,
                FieldKind::FlagMap => ParamType::Object,
                FieldKind::Objects(_) => ParamType::ObjectArray,
            };
            let desc = match &f.kind {
                FieldKind::Objects(inner) => format!(
                    "{} Each item has: {}.",
                    f.description,
                    inner.fields.iter().map(|g| g.name.as_str()).collect::<Vec<_>>().join(", ")
                ),
                _ => f.description.clone(),
            };
            sig = if f.required { sig.param(&f.name, t, &desc) } else { sig.optional(&f.name, t, &desc) };
        }
        sig
    }

    /// Checks every field; returns all diagnostics on failure.
    pub fn validate(&self, payload: &Map<String, Value>) -> Result<Validated, Vec<String>> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let cleaned = self.check(payload, "", &mut errors, &mut warnings);
        if errors.is_empty() {
            Ok(Validated {
                payload: cleaned,
                warnings,
            })
        } else {
            Err(errors)
        }
    }

    fn check(
        &self,
        payload: &Map<String, Value>,
        path: &str,
        errors: &mut Vec<String>,
        warnings: &mut Vec<String>,
    ) -> Map<String, Value> {
        let mut out = Map::new();
        for f in &self.fields {
            let at = format!("{path}{}", f.name);
            let v = match payload.get(&f.name) {
                None | Some(Value::Null) => {
                    if f.required {
                        errors.push(format!("missing field: {at}"));
                    }
                    continue;
                }
                Some(v) => v,
            };
            match &f.kind {
                FieldKind::Text | FieldKind::NonEmptyText => match v.as_str() {
                    None => errors.push(format!("field {at} must be a string")),
                    Some(s) if f.kind == FieldKind::NonEmptyText && s.trim().is_empty() => {
                        errors.push(format!("field {at} must not be empty"))
                    }
                    Some(_) => {
                        out.insert(f.name.clone(), v.clone());
                    }
                },
                FieldKind::TextList => match v.as_array() {
                    Some(items) if items.iter().all(Value::is_string) => {
                        out.insert(f.name.clone(), v.clone());
                    }
                    _ => errors.push(format!("field {at} must be a list of strings")),
                },
                FieldKind::Bool => match v {
                    Value::Bool(_) => {
                        out.insert(f.name.clone(), v.clone());
                    }
                    _ => errors.push(format!("field {at} must be true or false")),
                },
                FieldKind::FlagMap => match v.as_object() {
                    Some(m) if m.values().all(Value::is_boolean) => {
                        out.insert(f.name.clone(), v.clone());
                    }
                    _ => errors.push(format!("field {at} must map names to true or false")),
                },
                FieldKind::Objects(inner) => match v.as_array() {
                    Some(items) => {
                        let mut cleaned = Vec::new();
                        for (i, item) in items.iter().enumerate() {
                            match item.as_object() {
                                Some(obj) => {
                                    let prefix = format!("{at}[{i}].");
                                    cleaned.push(Value::Object(inner.check(obj, &prefix, errors, warnings)));
                                }
                                None => errors.push(format!("field {at}[{i}] must be an object")),
                            }
                        }
                        out.insert(f.name.clone(), Value::Array(cleaned));
                    }
                    None => errors.push(format!("field {at} must be a list of objects")),
                },
            }
        }
        for k in payload.keys() {
            if !self.fields.iter().any(|f| &f.name == k) {
                warnings.push(format!("dropped unknown field: {path}{k}"));
            }
        }
        out
    }
}

/// Built-in response schemas.
pub mod builtin {
    use super::{FieldKind, ResponseSchema};

    pub const CODE_MODULE: &str = "CodeModuleResponse";
    pub const SYSTEM_DESIGN: &str = "SystemDesign";
    pub const VERDICT: &str = "Verdict";
    pub const QUESTIONS: &str = "Questions";
    pub const ANSWER: &str = "Answer";
    pub const LITERATURE_REVIEW: &str = "LiteratureReview";
    pub const INTEGRATION: &str = "IntegrationResponse";

    fn module_spec() -> ResponseSchema {
        ResponseSchema::new("Module", "One module of the system.")
            .required("name", FieldKind::NonEmptyText, "Module name, a C identifier.")
            .required("description", FieldKind::Text, "What the module does.")
            .optional("connections", FieldKind::TextList, "Names of modules this one exchanges data with.")
            .optional("ports", FieldKind::TextList, "Port declarations, e.g. `input ap_uint<16> data_in`.")
            .required(
                "template",
                FieldKind::NonEmptyText,
                "Code outline with ports and comments; unfinished parts are comments starting with PLACEHOLDER:",
            )
            .optional("depends_on", FieldKind::TextList, "Modules whose outputs this one consumes.")
    }

    pub fn code_module() -> ResponseSchema {
        ResponseSchema::new(CODE_MODULE, "Deliver the finished module. Required to finish.")
            .required("name", FieldKind::NonEmptyText, "Module name, exactly as specified.")
            .required("description", FieldKind::Text, "What the module does.")
            .optional("connections", FieldKind::TextList, "Connected modules.")
            .optional("ports", FieldKind::TextList, "Port declarations.")
            .required("module_code", FieldKind::NonEmptyText, "Complete HLS C++ implementation (.cpp).")
            .required("header_file", FieldKind::NonEmptyText, "Header with the module's declarations (.h).")
            .required("test_bench_code", FieldKind::NonEmptyText, "Testbench with an int main() (.cpp).")
    }

    pub fn system_design() -> ResponseSchema {
        ResponseSchema::new(SYSTEM_DESIGN, "Deliver the system design as a list of modules. Required to finish.")
            .required("graph", FieldKind::Objects(Box::new(module_spec())), "The modules of the system.")
    }

    pub fn verdict() -> ResponseSchema {
        ResponseSchema::new(VERDICT, "Deliver your evaluation. Required to finish.")
            .required("satisfactory", FieldKind::Bool, "Whether the work meets the criteria.")
            .required("feedback", FieldKind::Text, "Concrete problems and how to fix them.")
            .optional(
                "search_query",
                FieldKind::Text,
                "A web search query that would find the missing information, if any.",
            )
            .optional(
                "metric_flags",
                FieldKind::FlagMap,
                "Pass (true) or fail (false) per metric: system_design, syntax, interface, completeness, optimization, synthesizable.",
            )
    }

    pub fn questions() -> ResponseSchema {
        let q = ResponseSchema::new("Question", "One research question.")
            .required("text", FieldKind::NonEmptyText, "The question.")
            .optional("origin", FieldKind::Text, "What it serves, e.g. `goal 1` or `requirement 2` (1-based).");
        ResponseSchema::new(QUESTIONS, "Deliver the research questions. Required to finish.")
            .required("questions", FieldKind::Objects(Box::new(q)), "Focused research questions.")
    }

    pub fn answer() -> ResponseSchema {
        ResponseSchema::new(ANSWER, "Deliver the answer. Required to finish.")
            .required("answer", FieldKind::NonEmptyText, "The answer, citing locators of the material used.")
    }

    pub fn literature_review() -> ResponseSchema {
        ResponseSchema::new(LITERATURE_REVIEW, "Deliver the literature review. Required to finish.")
            .required("body", FieldKind::NonEmptyText, "The review in Markdown.")
    }

    pub fn integration() -> ResponseSchema {
        ResponseSchema::new(INTEGRATION, "Deliver the integrated top level. Required to finish.")
            .required("top_module", FieldKind::Objects(Box::new(code_module())), "Exactly one top-level module.")
            .optional(
                "modules",
                FieldKind::Objects(Box::new(code_module())),
                "Revised versions of any modules changed during integration.",
            )
    }
}
