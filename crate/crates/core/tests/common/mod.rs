#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};
use synthforge_core::gateway::{CompletionResponse, LogicalClock};
use synthforge_core::model::DesignObjectives;
use synthforge_core::prompt::TemplateSet;
use synthforge_core::session::{BackendSource, ScriptBook, Session};
use synthforge_core::tools::{FixtureSearch, SearchResult, SearchWebTool, ThoughtTool, ToolRegistry};

pub fn objectives() -> DesignObjectives {
    DesignObjectives {
        project_name: "fft128".into(),
        goals: vec!["A 128-point FFT built from two 64-point FFTs".into()],
        requirements: vec!["Use fixed-point arithmetic".into(), "Pipeline the butterflies for throughput".into()],
    }
}

pub fn scripted(entries: Vec<(&str, Vec<CompletionResponse>)>) -> (Session, Arc<ScriptBook>) {
    let mut map: BTreeMap<String, Vec<CompletionResponse>> = BTreeMap::new();
    for (k, v) in entries {
        map.entry(k.to_string()).or_default().extend(v);
    }
    let book = Arc::new(ScriptBook::new(map));
    (Session::new(BackendSource::Scripted(book.clone()), Arc::new(LogicalClock::new())), book)
}

pub fn templates() -> TemplateSet {
    TemplateSet::builtin()
}

pub fn registry(search: Arc<FixtureSearch>) -> ToolRegistry {
    let mut r = ToolRegistry::new();
    r.register(Arc::new(ThoughtTool::new())).unwrap();
    r.register(Arc::new(SearchWebTool::new(search, 5))).unwrap();
    r
}

pub fn search_fixture(queries: &[&str]) -> FixtureSearch {
    FixtureSearch::new(
        queries
            .iter()
            .map(|q| {
                (
                    q.to_string(),
                    vec![SearchResult {
                        title: format!("About {q}"),
                        snippet: format!("Details on {q}."),
                        locator: format!("https://example.org/{}", q.replace(' ', "-")),
                    }],
                )
            })
            .collect(),
    )
}

pub fn verdict(ok: bool, feedback: &str) -> CompletionResponse {
    CompletionResponse::tool_call("Verdict", json!({"satisfactory": ok, "feedback": feedback}))
}

pub fn verdict_query(ok: bool, feedback: &str, query: &str) -> CompletionResponse {
    CompletionResponse::tool_call("Verdict", json!({"satisfactory": ok, "feedback": feedback, "search_query": query}))
}

pub fn thought(t: &str) -> CompletionResponse {
    CompletionResponse::tool_call("Thought", json!({ "thought": t }))
}

pub fn questions(qs: &[&str]) -> CompletionResponse {
    let items: Vec<Value> = qs.iter().map(|q| json!({"text": q, "origin": "goal 1"})).collect();
    CompletionResponse::tool_call("Questions", json!({ "questions": items }))
}

pub fn answer(text: &str) -> CompletionResponse {
    CompletionResponse::tool_call("Answer", json!({ "answer": text }))
}

pub fn review(body: &str) -> CompletionResponse {
    CompletionResponse::tool_call("LiteratureReview", json!({ "body": body }))
}

pub fn module_json(name: &str, conns: &[&str], ports: &[&str]) -> Value {
    json!({
        "name": name,
        "description": format!("{name} block"),
        "connections": conns,
        "ports": ports,
        "template": format!("void {name}();\n// PLACEHOLDER: implement {name}"),
    })
}

pub fn system_design(modules: Vec<Value>) -> CompletionResponse {
    CompletionResponse::tool_call("SystemDesign", json!({ "graph": modules }))
}

pub fn code(name: &str, ports: &[&str]) -> Value {
    json!({
        "name": name,
        "description": format!("{name} block"),
        "ports": ports,
        "module_code": format!("#include \"{name}.h\"\nvoid {name}(int in[8], int out[8]) {{\n  for (int i = 0; i < 8; i++) {{\n#pragma HLS PIPELINE II=1\n    out[i] = in[i];\n  }}\n}}\n"),
        "header_file": format!("#pragma once\nvoid {name}(int in[8], int out[8]);\n"),
        "test_bench_code": format!("#include \"{name}.h\"\nint main() {{\n  int a[8] = {{0}}, b[8];\n  {name}(a, b);\n  return b[0];\n}}\n"),
    })
}

pub fn code_module(name: &str, ports: &[&str]) -> CompletionResponse {
    CompletionResponse::tool_call("CodeModuleResponse", code(name, ports))
}

pub fn integration(top: &str, includes: &[&str]) -> CompletionResponse {
    let inc: String = includes.iter().map(|m| format!("#include \"{m}.h\"\n")).collect();
    let calls: String = includes.iter().map(|m| format!("  {m}(in, out);\n")).collect();
    let top_json = json!({
        "name": top,
        "description": "top level",
        "module_code": format!("#include \"{top}.h\"\n{inc}void {top}(int in[8], int out[8]) {{\n#pragma HLS DATAFLOW\n{calls}}}\n"),
        "header_file": format!("#pragma once\nvoid {top}(int in[8], int out[8]);\n"),
        "test_bench_code": format!("#include \"{top}.h\"\nint main() {{\n  int a[8] = {{0}}, b[8];\n  {top}(a, b);\n  return 0;\n}}\n"),
    });
    CompletionResponse::tool_call("IntegrationResponse", json!({ "top_module": [top_json] }))
}
