//! Acceptance criteria. Each prints one PASS/FAIL line with its runtime
//! against the allowed budget; the process fails if any criterion does.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde_json::{json, Value};
use synthforge_cli::commands::{self, Options, Source};
use synthforge_cli::exit::{exit_code, REPLAY_MISMATCH};
use synthforge_cli::trials::{select_best, TrialResult};
use synthforge_cli::workspace::copy_tree;
use synthforge_core::agent::{run_agent, AgentConfig, AgentError, DEFAULT_STEP_CAP, DEFAULT_THOUGHT_CAP};
use synthforge_core::checks::{load_design_dir, report, CheckConfig, MetricStatus, Severity};
use synthforge_core::design::order_modules;
use synthforge_core::gateway::{
    parse_transcript, Backend, CompletionRequest, CompletionResponse, GatewayError, LogicalClock, ModelRole,
};
use synthforge_core::graph::{execute, Caps, Graph, Halt, NodeError};
use synthforge_core::knowledge::{answer_with_evaluation, KnowledgeConfig, KnowledgeContext, ResearchQuestion};
use synthforge_core::model::{DesignObjectives, Metric, ModuleSpec, SystemDesignGraph};
use synthforge_core::prompt::{parse_observations, RoleTag, TemplateSet};
use synthforge_core::rag::{ChunkingConfig, Collection, HashedEmbedder, VectorStore};
use synthforge_core::schema::builtin;
use synthforge_core::session::{AgentEnv, BackendSource, ScriptBook, Session};
use synthforge_core::tools::{
    FixtureSearch, RetrieveTool, SearchResult, SearchWebTool, ThoughtTool, ToolRegistry, THOUGHT_TOOL,
};

type Check = fn() -> Result<String, String>;

const CRITERIA: [(&str, u64, Check); 10] = [
    ("thought-cap conformance", 10, thought_cap),
    ("observation prefix property", 5, prefix_property),
    ("knowledge loop accounting", 10, loop_accounting),
    ("retrieval exactness", 30, retrieval_exactness),
    ("module ordering oracle", 5, ordering_oracle),
    ("end-to-end determinism", 20, end_to_end_determinism),
    ("check-harness fixtures", 5, check_fixtures),
    ("graph-engine safety", 10, graph_safety),
    ("trial selection", 2, trial_selection),
    ("record/replay round trip", 5, record_replay),
];

fn main() {
    let mut failed = 0;
    for (i, (name, budget, check)) in CRITERIA.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        let result = result.and_then(|d| {
            if secs <= *budget as f64 {
                Ok(d)
            } else {
                Err(format!("took {secs:.2}s, budget {budget}s; {d}"))
            }
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s / {budget}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s / {budget}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

// ---------------------------------------------------------------- agents

/// Serves canned replies and keeps every request.
struct Capture {
    replies: Mutex<VecDeque<CompletionResponse>>,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl Backend for Capture {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let mut reqs = self.requests.lock().unwrap();
        reqs.push(request.clone());
        self.replies.lock().unwrap().pop_front().ok_or(GatewayError::ScriptExhausted { calls: reqs.len() - 1 })
    }
}

const TASK: &str = "Explain how the twiddle factors of a 128-point FFT are stored.";

fn adversarial_reply(rng: &mut StdRng) -> CompletionResponse {
    match rng.random_range(0..12) {
        0..=4 => CompletionResponse::tool_call(THOUGHT_TOOL, json!({"thought": format!("idea {}", rng.random_range(0..100))})),
        5 => CompletionResponse::tool_call(THOUGHT_TOOL, json!({})),
        6 => CompletionResponse::tool_call(SearchWebTool::NAME, json!({"query": "twiddle rom"})),
        7 => CompletionResponse::tool_call(SearchWebTool::NAME, json!({"query": "no such query"})),
        8 => CompletionResponse::tool_call("teleport", json!({"to": "mars"})),
        9 => CompletionResponse::text("Here is my answer in prose."),
        10 => CompletionResponse::tool_call("Answer", json!({"answer": ""})),
        _ => CompletionResponse::tool_call("Answer", json!({"answer": "A ROM of 64 complex values."})),
    }
}

fn agent_tools() -> ToolRegistry {
    let mut r = ToolRegistry::new();
    r.register(Arc::new(ThoughtTool::new())).unwrap();
    let search = FixtureSearch::new(BTreeMap::from([(
        "twiddle rom".to_string(),
        vec![SearchResult { title: "ROM".into(), snippet: "64 entries".into(), locator: "https://example.org/rom".into() }],
    )]));
    r.register(Arc::new(SearchWebTool::new(Arc::new(search), 5))).unwrap();
    r
}

/// One adversarial run: the requests sent and whether the agent halted cleanly.
fn adversarial_run(seed: u64) -> Result<Vec<CompletionRequest>, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.random_range(0..2 * DEFAULT_STEP_CAP);
    // the backend never runs dry before the step cap
    let replies: VecDeque<_> = (0..n + DEFAULT_STEP_CAP).map(|_| adversarial_reply(&mut rng)).collect();
    let backend = Capture { replies: Mutex::new(replies), requests: Mutex::new(Vec::new()) };
    let config = AgentConfig::new(RoleTag::Generation, ModelRole::Generator, builtin::answer())
        .with_tools(&[SearchWebTool::NAME]);
    let result = run_agent(&config, TASK, None, &agent_tools(), &backend);
    let requests = backend.requests.into_inner().unwrap();
    match result {
        Ok(_) | Err(AgentError::StepCapExceeded { .. }) | Err(AgentError::SchemaViolation { .. }) => Ok(requests),
        Err(e) => Err(format!("seed {seed}: unexpected error {e}")),
    }
}

fn thought_cap() -> Result<String, String> {
    let mut longest = 0;
    let mut completions = 0;
    for seed in 0..200 {
        let requests = adversarial_run(seed)?;
        ensure(requests.len() <= DEFAULT_STEP_CAP, || format!("seed {seed}: {} completions", requests.len()))?;
        completions += requests.len();
        for r in &requests {
            let mut run = 0;
            for o in parse_observations(&r.messages[1].content) {
                run = if o.tool_name == THOUGHT_TOOL { run + 1 } else { 0 };
                longest = longest.max(run);
                ensure(run <= DEFAULT_THOUGHT_CAP, || format!("seed {seed}: {run} consecutive Thought observations"))?;
            }
        }
    }
    Ok(format!("200 runs, {completions} completions, longest Thought run {longest}"))
}

fn prefix_property() -> Result<String, String> {
    let mut pairs = 0;
    for seed in 1000..1100 {
        let requests = adversarial_run(seed)?;
        for (i, w) in requests.windows(2).enumerate() {
            let (prev, next) = (&w[0].messages[1].content, &w[1].messages[1].content);
            let a = parse_observations(prev);
            let b = parse_observations(next);
            ensure(b.len() >= a.len(), || format!("seed {seed}: request {} lost observations", i + 1))?;
            for (x, y) in a.iter().zip(&b) {
                ensure(
                    (x.step_index, &x.tool_name, &x.output) == (y.step_index, &y.tool_name, &y.output),
                    || format!("seed {seed}: request {} rewrote observation {}", i + 1, x.step_index),
                )?;
            }
            // byte-identical prefix through the last earlier observation
            let end = a.last().map_or(0, |o| o.span.end);
            ensure(next.get(..end) == prev.get(..end), || format!("seed {seed}: request {} prefix differs", i + 1))?;
            ensure(next.starts_with(TASK), || format!("seed {seed}: task is not the prefix"))?;
            pairs += 1;
        }
    }
    Ok(format!("100 runs, {pairs} consecutive request pairs"))
}

// ---------------------------------------------------------------- knowledge

fn verdict(ok: bool, query: Option<&str>) -> CompletionResponse {
    let mut a = json!({"satisfactory": ok, "feedback": if ok { "grounded" } else { "needs a source" }});
    if let Some(q) = query {
        a["search_query"] = json!(q);
    }
    CompletionResponse::tool_call("Verdict", a)
}

fn loop_accounting() -> Result<String, String> {
    let e = HashedEmbedder::new(256);
    let mut store = VectorStore::new(&e, ChunkingConfig::default()).unwrap();
    store
        .ingest(
            &e,
            Collection::Generic,
            &[("radix2.md".into(), "Twiddle factors W_N^k are kept in a ROM of N/2 complex entries.".into())],
        )
        .unwrap();
    let store = Arc::new(store);
    let queries: Vec<String> = (0..5).map(|i| format!("twiddle query {i}")).collect();
    let search = Arc::new(FixtureSearch::new(
        queries
            .iter()
            .map(|q| {
                let r = SearchResult { title: q.clone(), snippet: format!("about {q}"), locator: format!("https://example.org/{i}", i = q.len()) };
                (q.clone(), vec![r])
            })
            .collect(),
    ));
    let mut tools = ToolRegistry::new();
    tools.register(Arc::new(ThoughtTool::new())).unwrap();
    tools.register(Arc::new(SearchWebTool::new(search.clone(), 5))).unwrap();
    tools.register(Arc::new(RetrieveTool::new(store.clone(), Arc::new(HashedEmbedder::new(256)), 5))).unwrap();
    let templates = TemplateSet::builtin();
    let objectives = DesignObjectives {
        project_name: "fft128".into(),
        goals: vec!["A 128-point FFT".into()],
        requirements: vec!["Fixed-point data".into()],
    };
    let question = ResearchQuestion { text: "How are twiddle factors stored?".into(), origin: None };

    let mut schedules = 0;
    for len in 1..=5usize {
        for bits in 0..(1u32 << len) {
            let schedule: Vec<bool> = (0..len).map(|i| bits >> i & 1 == 1).collect();
            let label: String = schedule.iter().map(|a| if *a { 'A' } else { 'R' }).collect();
            let evals: Vec<CompletionResponse> = schedule
                .iter()
                .enumerate()
                .map(|(i, ok)| if *ok { verdict(true, None) } else { verdict(false, Some(&queries[i])) })
                .collect();
            let book = Arc::new(ScriptBook::new(BTreeMap::from([
                ("q0/generation".to_string(), vec![CompletionResponse::tool_call("Answer", json!({"answer": "In a ROM."}))]),
                ("q0/evaluation".to_string(), evals),
            ])));
            let rec = tempfile::tempdir().unwrap();
            let session = Session::new(BackendSource::Scripted(book), Arc::new(LogicalClock::new())).recording_to(rec.path());
            let ctx = KnowledgeContext {
                env: AgentEnv { session: &session, templates: &templates, tools: &tools },
                objectives: &objectives,
                store: &store,
                embedder: &e,
                search: search.as_ref(),
                config: KnowledgeConfig { eval_cap: len, ..KnowledgeConfig::default() },
            };
            let d = answer_with_evaluation(&ctx, 0, &question).map_err(|e| format!("{label}: {e}"))?;
            let want_rounds = schedule.iter().position(|a| *a).map_or(len, |p| p + 1);
            ensure(d.rounds == want_rounds, || format!("{label}: {} rounds, expected {want_rounds}", d.rounds))?;
            ensure(d.searches == d.rounds - 1, || format!("{label}: {} searches for {} rounds", d.searches, d.rounds))?;
            ensure(d.satisfied == schedule.contains(&true), || format!("{label}: satisfied={}", d.satisfied))?;

            // every evaluation prompt: retrieval first, then the searches so far, in order
            for round in 0..d.rounds {
                let p = rec.path().join(format!("transcripts/knowledge/q0/evaluation/{round}.jsonl"));
                let text = std::fs::read_to_string(&p).map_err(|e| format!("{label}: {}: {e}", p.display()))?;
                let entries = parse_transcript(&text).map_err(|e| e.to_string())?;
                let prompt = &entries[0].request.messages[1].content;
                let names: Vec<String> = parse_observations(prompt).into_iter().map(|o| o.tool_name).collect();
                let first_retrieve = names.iter().position(|n| n == RetrieveTool::NAME);
                let first_search = names.iter().position(|n| n == SearchWebTool::NAME);
                ensure(first_retrieve == Some(0), || format!("{label} round {round}: observations {names:?}"))?;
                let searches = names.iter().filter(|n| *n == SearchWebTool::NAME).count();
                ensure(searches == round, || format!("{label} round {round}: {searches} search observations"))?;
                if let Some(s) = first_search {
                    ensure(s > 0, || format!("{label} round {round}: search precedes retrieval"))?;
                }
                for (i, q) in queries.iter().take(round).enumerate() {
                    let pos = prompt.find(&format!("about {q}"));
                    ensure(pos.is_some(), || format!("{label} round {round}: search {i} missing"))?;
                }
            }
            ensure(
                !rec.path().join(format!("transcripts/knowledge/q0/evaluation/{}.jsonl", d.rounds)).exists(),
                || format!("{label}: evaluated past the decision"),
            )?;
            schedules += 1;
        }
    }
    ensure(schedules == 62, || format!("{schedules} schedules"))?;
    Ok("62 schedules: searches == rounds - 1, retrieval always first".into())
}

// ---------------------------------------------------------------- retrieval

const WORDS: &[&str] = &[
    "fft", "butterfly", "twiddle", "pipeline", "stream", "axi", "fifo", "rom", "radix", "stage", "complex", "fixed",
    "dataflow", "unroll", "partition", "latency", "interface", "buffer", "window", "filter",
];

fn words(rng: &mut StdRng, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Bag-of-words bucket counts: FNV-1a over lowercased alphanumeric tokens.
fn counts(text: &str, dim: u64) -> BTreeMap<u64, u64> {
    let mut out = BTreeMap::new();
    for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in tok.to_lowercase().bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100000001b3);
        }
        *out.entry(h % dim).or_insert(0) += 1;
    }
    out
}

/// Exact cosine against a fixed query as `(q.c, |c|^2)`; compared by
/// cross-multiplication so equal similarities compare equal.
#[derive(Clone, Copy)]
struct Exact {
    dot: u128,
    norm2: u128,
}

impl Exact {
    fn of(q: &BTreeMap<u64, u64>, c: &BTreeMap<u64, u64>) -> Exact {
        let dot = c.iter().map(|(b, n)| (*n * q.get(b).copied().unwrap_or(0)) as u128).sum();
        Exact { dot, norm2: c.values().map(|n| (n * n) as u128).sum() }
    }

    fn cmp(&self, o: &Exact) -> std::cmp::Ordering {
        (self.dot * self.dot * o.norm2).cmp(&(o.dot * o.dot * self.norm2))
    }

    fn value(&self, qnorm2: u128) -> f64 {
        self.dot as f64 / ((self.norm2 as f64).sqrt() * (qnorm2 as f64).sqrt())
    }
}

fn retrieval_exactness() -> Result<String, String> {
    let e = HashedEmbedder::new(256);
    let mut rng = StdRng::seed_from_u64(4);
    let mut total_chunks = 0;
    let mut ties = 0;
    for store_no in 0..100 {
        let chunking = ChunkingConfig { chunk_size_chars: rng.random_range(40..200), overlap_chars: rng.random_range(0..30) };
        let mut store = VectorStore::new(&e, chunking).unwrap();
        let target = rng.random_range(1..=500usize);
        let mut d = 0;
        while store.len() < target {
            let c = Collection::ALL[rng.random_range(0..3)];
            let n = rng.random_range(1..60);
            // repeated documents produce exact score ties
            let text = if d > 0 && rng.random_bool(0.15) { words(&mut StdRng::seed_from_u64(d as u64 - 1), n) } else { words(&mut StdRng::seed_from_u64(d as u64), n) };
            let mut trial = store.clone();
            trial.ingest(&e, c, &[(format!("doc{d:04}"), text)]).unwrap();
            d += 1;
            if trial.len() > 500 {
                break;
            }
            store = trial;
        }
        ensure(store.len() <= 500, || format!("store {store_no}: {} chunks", store.len()))?;
        total_chunks += store.len();
        for _ in 0..5 {
            let nq = rng.random_range(1..8);
            let query = words(&mut rng, nq);
            let k = rng.random_range(1..=20);
            let only: Vec<Collection> =
                if rng.random_bool(0.3) { vec![Collection::ALL[rng.random_range(0..3)]] } else { Vec::new() };
            let got = store.query(&e, &query, k, &only).map_err(|e| e.to_string())?;
            let qc = counts(&query, 256);
            let qn: u128 = qc.values().map(|n| (n * n) as u128).sum();
            let mut want: Vec<(Exact, String, usize)> = store
                .chunks()
                .iter()
                .filter(|c| only.is_empty() || only.contains(&c.source_collection))
                .map(|c| (Exact::of(&qc, &counts(&c.text, 256)), c.doc_id.clone(), c.chunk_index))
                .collect();
            want.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            ties += want.windows(2).take(k).filter(|w| w[0].0.cmp(&w[1].0).is_eq()).count();
            want.truncate(k);
            ensure(got.len() == want.len(), || format!("store {store_no}: {} results, expected {}", got.len(), want.len()))?;
            for (i, (g, w)) in got.iter().zip(&want).enumerate() {
                ensure((&g.chunk.doc_id, g.chunk.chunk_index) == (&w.1, w.2), || {
                    format!("store {store_no} `{query}` rank {i}: got {}#{}, expected {}#{}", g.chunk.doc_id, g.chunk.chunk_index, w.1, w.2)
                })?;
                let exact = w.0.value(qn);
                ensure((g.score - exact).abs() < 1e-9, || format!("store {store_no} rank {i}: score {} vs {exact}", g.score))?;
            }
        }
    }
    Ok(format!("100 stores, {total_chunks} chunks, 500 queries, {ties} exact ties in the top k"))
}

// ---------------------------------------------------------------- ordering

fn module(name: &str) -> ModuleSpec {
    ModuleSpec {
        name: name.into(),
        description: String::new(),
        connections: Vec::new(),
        ports: Vec::new(),
        template: String::new(),
        depends_on: Vec::new(),
    }
}

fn ordering_oracle() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(5);
    let mut dag_cases = 0;
    for case in 0..200 {
        let n = rng.random_range(1..=12);
        let mut names: Vec<String> = (0..n).map(|i| format!("m{}", (i * 7 + case) % 97)).collect();
        names.sort();
        names.dedup();
        let mut mods: Vec<ModuleSpec> = names.iter().map(|s| module(s)).collect();
        for m in mods.iter_mut() {
            for other in &names {
                if rng.random_bool(0.25) {
                    m.connections.push(other.clone());
                }
            }
        }
        // shuffle declaration order
        for i in (1..mods.len()).rev() {
            mods.swap(i, rng.random_range(0..=i));
        }
        let use_deps = case % 2 == 1;
        if use_deps {
            // edges only from earlier to later in a random rank: acyclic
            let mut rank: Vec<String> = names.clone();
            for i in (1..rank.len()).rev() {
                rank.swap(i, rng.random_range(0..=i));
            }
            for (j, later) in rank.iter().enumerate() {
                for earlier in &rank[..j] {
                    if rng.random_bool(0.3) {
                        mods.iter_mut().find(|m| &m.name == later).unwrap().depends_on.push(earlier.clone());
                    }
                }
            }
        }
        let graph = SystemDesignGraph { modules: mods };
        let got = order_modules(&graph).names;
        let mut sorted = got.clone();
        sorted.sort();
        ensure(sorted == names, || format!("case {case}: {got:?} is not a permutation of {names:?}"))?;

        // degree: distinct other modules linked in either direction
        let degree = |x: &str| {
            names
                .iter()
                .filter(|y| y.as_str() != x)
                .filter(|y| {
                    let m = graph.module(x).unwrap();
                    let o = graph.module(y).unwrap();
                    m.connections.contains(y) || o.connections.iter().any(|c| c == x)
                })
                .count()
        };
        if graph.modules.iter().all(|m| m.depends_on.is_empty()) {
            // selection by smallest (degree, name)
            let mut left: Vec<&String> = names.iter().collect();
            let mut want = Vec::new();
            while !left.is_empty() {
                let mut best = 0;
                for i in 1..left.len() {
                    if (degree(left[i]), left[i]) < (degree(left[best]), left[best]) {
                        best = i;
                    }
                }
                want.push(left.remove(best).clone());
            }
            ensure(got == want, || format!("case {case}: {got:?}, oracle {want:?}"))?;
        } else {
            dag_cases += 1;
            let pos: BTreeMap<&str, usize> = got.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            for m in &graph.modules {
                for d in &m.depends_on {
                    ensure(pos[d.as_str()] < pos[m.name.as_str()], || {
                        format!("case {case}: {} placed before its dependency {d}: {got:?}", m.name)
                    })?;
                }
            }
        }
    }
    Ok(format!("200 graphs ({dag_cases} with dependency edges)"))
}

// ---------------------------------------------------------------- golden run

fn fixture_inputs(dst: &Path) {
    let src = cli_fixtures().join("fft_workspace");
    copy_tree(&src, dst).unwrap();
    for d in ["design", "transcripts", "knowledge/index"] {
        std::fs::remove_dir_all(dst.join(d)).unwrap();
    }
    for f in ["knowledge/literature_review.md", "knowledge/drafts.json", "script.json"] {
        std::fs::remove_file(dst.join(f)).unwrap();
    }
}

/// `[re, im]` literals of a `static const ... name[N] = {...};` table.
fn c_table(code: &str, name: &str) -> Vec<f64> {
    let start = code.find(&format!("{name}[")).unwrap_or_else(|| panic!("no table {name}"));
    let body = &code[start..];
    let (open, close) = (body.find('{').unwrap(), body.find('}').unwrap());
    body[open + 1..close].split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect()
}

fn twiddles_match(re: &[f64], im: &[f64], n: usize) -> Result<(), String> {
    ensure(re.len() == n / 2 && im.len() == n / 2, || format!("{} / {} entries for N={n}", re.len(), im.len()))?;
    for k in 0..n / 2 {
        let a = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
        ensure((re[k] - a.cos()).abs() < 5e-6 && (im[k] - a.sin()).abs() < 5e-6, || {
            format!("N={n} k={k}: ({}, {}) vs ({:.6}, {:.6})", re[k], im[k], a.cos(), a.sin())
        })?;
    }
    Ok(())
}

fn end_to_end_determinism() -> Result<String, String> {
    let golden = cli_fixtures().join("fft_workspace");
    let mut manifests = Vec::new();
    let mut last = None;
    for _ in 0..3 {
        let ws = tempfile::tempdir().unwrap();
        fixture_inputs(ws.path());
        let opts = Options {
            workspace: ws.path().to_path_buf(),
            source: Source::Replay(golden.clone()),
            ..Options::default()
        };
        let out = commands::run(&opts, None, false).map_err(|e| format!("{e:#}"))?;
        ensure(out.code == 0, || out.message.clone())?;
        manifests.push(std::fs::read(ws.path().join("design/manifest.json")).unwrap());
        last = Some(ws);
    }
    ensure(manifests.windows(2).all(|w| w[0] == w[1]), || "manifests differ between runs".into())?;
    ensure(manifests[0] == std::fs::read(golden.join("design/manifest.json")).unwrap(), || {
        "manifest differs from the committed golden".into()
    })?;

    let ws = last.unwrap();
    let best = ws.path().join("design/best/modules");
    let combine = std::fs::read_to_string(best.join("fft_combine/fft_combine.cpp")).unwrap();
    twiddles_match(&c_table(&combine, "fft_combine_tw_re"), &c_table(&combine, "fft_combine_tw_im"), 128)?;
    let even = std::fs::read_to_string(best.join("fft64_even/fft64_even.cpp")).unwrap();
    twiddles_match(&c_table(&even, "fft64_even_tw_re"), &c_table(&even, "fft64_even_tw_im"), 64)?;

    // the python_run output the combiner designer saw
    let t = std::fs::read_to_string(golden.join("transcripts/trial_0/design/module/fft_combine/0.jsonl")).unwrap();
    let entries = parse_transcript(&t).map_err(|e| e.to_string())?;
    let prompt = &entries.last().unwrap().request.messages[1].content;
    let run = parse_observations(prompt)
        .into_iter()
        .find(|o| o.tool_name == "python_run")
        .ok_or("no python_run observation")?;
    let mut re = Vec::new();
    let mut im = Vec::new();
    for line in run.output.lines() {
        let v: Vec<f64> = line.split_whitespace().map(|x| x.parse().unwrap()).collect();
        re.push(v[1]);
        im.push(v[2]);
    }
    twiddles_match(&re, &im, 128)?;
    Ok(format!("3 replays, manifest {} bytes identical; 64 + 32 twiddles within 5e-6", manifests[0].len()))
}

// ---------------------------------------------------------------- checks

fn check_fixtures() -> Result<String, String> {
    #[derive(serde::Deserialize)]
    struct Expected {
        failing: Vec<Metric>,
        message: Option<String>,
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/designs");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    ensure(dirs.len() >= 10, || format!("{} fixtures", dirs.len()))?;
    let mut reproduced = BTreeSet::new();
    for dir in &dirs {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let exp: Expected = serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
        let r = report(&load_design_dir(dir).map_err(|e| format!("{name}: {e}"))?, &CheckConfig::default());
        for m in Metric::AUTOMATED {
            let failed = r.status(m) == MetricStatus::Fail;
            ensure(failed == exp.failing.contains(&m), || format!("{name}: {m:?} failed={failed}\n{}", r.to_table()))?;
        }
        if exp.failing.is_empty() {
            let errors: Vec<_> = r.metrics.iter().flat_map(|m| &m.findings).filter(|f| f.severity == Severity::Error).collect();
            ensure(errors.is_empty(), || format!("{name}: false positives {errors:?}"))?;
        }
        if let (Some(msg), Some(m)) = (&exp.message, exp.failing.first()) {
            ensure(
                r.get(*m).findings.iter().any(|f| f.severity == Severity::Error && f.message.contains(msg.as_str())),
                || format!("{name}: no {m:?} error mentions `{msg}`"),
            )?;
            reproduced.insert(name);
        }
    }
    for class in ["width_mismatch", "placeholder", "superfluous_directive", "duplicate_definition", "undeclared_signal"] {
        ensure(reproduced.contains(class), || format!("failure class {class} not reproduced"))?;
    }
    Ok(format!("{} fixtures, {} failure classes reproduced, clean fixtures without errors", dirs.len(), reproduced.len()))
}

// ---------------------------------------------------------------- graph engine

#[derive(Clone, Copy)]
enum Behaviour {
    AlwaysContinue,
    Random,
    FailSometimes,
}

struct Sim {
    rng: StdRng,
    steps: usize,
}

fn graph_safety() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(8);
    let mut capped = 0;
    let mut terminal = 0;
    for case in 0..500 {
        let n = rng.random_range(1..=8);
        let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let behaviours: Vec<Behaviour> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => Behaviour::AlwaysContinue,
                1 => Behaviour::Random,
                _ => Behaviour::FailSometimes,
            })
            .collect();
        let decision_at = rng.random_range(0..n + 2);
        let mut g: Graph<'_, Sim> = Graph::new(format!("case{case}")).start("n0").terminal("end");
        for (i, id) in ids.iter().enumerate() {
            let next = ids.get(i + 1).cloned().unwrap_or_else(|| "end".into());
            if i == decision_at {
                g = g
                    .decision(id, &["yes", "no"], |s: &Sim| if s.steps % 3 == 0 { "yes".into() } else { "no".into() })
                    .edge(id, "yes", &next)
                    .edge(id, "no", id);
                continue;
            }
            let b = behaviours[i];
            g = g.function(id, move |s: &mut Sim| {
                s.steps += 1;
                match b {
                    Behaviour::AlwaysContinue => Ok("continue".into()),
                    Behaviour::Random => Ok(["continue", "next", "jump", "undeclared"][s.rng.random_range(0..4)].into()),
                    Behaviour::FailSometimes => {
                        if s.rng.random_bool(0.1) {
                            Err(NodeError::msg("handler failed"))
                        } else {
                            Ok(["continue", "next"][s.rng.random_range(0..2)].into())
                        }
                    }
                }
            });
            g = g.edge(id, "continue", id).edge(id, "next", &next);
            let to = &ids[rng.random_range(0..n)];
            g = g.edge(id, "jump", to);
        }
        ensure(g.validate().is_empty(), || format!("case {case}: {:?}", g.validate()))?;
        let mut caps = Caps { global: rng.random_range(1..=120), per_node: BTreeMap::new() };
        for id in &ids {
            if rng.random_bool(0.4) {
                caps = caps.with(id, rng.random_range(1..=10));
            }
        }
        let sim = Sim { rng: StdRng::seed_from_u64(case), steps: 0 };
        let x = execute(&g, sim, &caps, &LogicalClock::new()).map_err(|e| format!("case {case}: {e}"))?;
        ensure(x.trace.entries.len() <= caps.global, || format!("case {case}: {} visits > {}", x.trace.entries.len(), caps.global))?;
        for (node, cap) in &caps.per_node {
            let v = x.state.visit_counts.get(node).copied().unwrap_or(0);
            ensure(v <= *cap, || format!("case {case}: {node} visited {v} > {cap}"))?;
            ensure(v == x.trace.visits(node), || format!("case {case}: {node} counts disagree"))?;
        }
        ensure(x.state.visit_counts.values().sum::<usize>() == x.trace.entries.len(), || format!("case {case}: counts"))?;
        x.trace.consistent_with(&g).map_err(|e| format!("case {case}: {e}"))?;
        ensure(x.trace.entries.first().map(|e| e.node.as_str()) == Some("n0"), || format!("case {case}: start"))?;
        match &x.halt {
            Halt::CapExceeded { .. } => capped += 1,
            Halt::Terminal { node } => {
                ensure(node == "end", || format!("case {case}: ended at {node}"))?;
                terminal += 1;
            }
            Halt::NoEdge { label, .. } => ensure(label == "undeclared", || format!("case {case}: no edge for {label}"))?,
            Halt::NodeFailed { .. } => ensure(x.error.is_some(), || format!("case {case}: failure without error"))?,
        }
    }
    Ok(format!("500 graphs: {capped} stopped by caps, {terminal} reached the terminal"))
}

// ---------------------------------------------------------------- trials

fn trial_selection() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(9);
    let mut none = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=8);
        let trials: Vec<TrialResult> = (0..n)
            .map(|i| {
                if rng.random_bool(0.15) {
                    TrialResult::failed(i, "error".into())
                } else {
                    TrialResult {
                        index: i,
                        status: "approved".into(),
                        score: Some(rng.random_range(0..=5)),
                        findings: Some(rng.random_range(0..=4)),
                        approved: true,
                    }
                }
            })
            .collect();
        // the trial no other scored trial beats
        let beats = |a: &TrialResult, b: &TrialResult| {
            let (sa, fa, sb, fb) = (a.score.unwrap(), a.findings.unwrap(), b.score.unwrap(), b.findings.unwrap());
            sa > sb || (sa == sb && fa < fb) || (sa == sb && fa == fb && a.index < b.index)
        };
        let scored: Vec<&TrialResult> = trials.iter().filter(|t| t.score.is_some()).collect();
        let want = scored.iter().find(|a| scored.iter().all(|b| a.index == b.index || beats(a, b))).map(|t| t.index);
        let got = select_best(&trials);
        ensure(got == want, || format!("case {case}: picked {got:?}, oracle {want:?}"))?;
        if want.is_none() {
            none += 1;
        }
    }
    Ok(format!("1000 trial sets ({none} with no scored trial)"))
}

// ---------------------------------------------------------------- record/replay

/// An OpenAI-shaped server whose replies depend only on the request.
struct MockServer {
    url: String,
    stop: Arc<AtomicBool>,
    calls: Arc<Mutex<usize>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    fn start() -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let stop = Arc::new(AtomicBool::new(false));
        let calls = Arc::new(Mutex::new(0));
        let (s, c) = (stop.clone(), calls.clone());
        let handle = std::thread::spawn(move || {
            while !s.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        stream.set_nonblocking(false).unwrap();
                        *c.lock().unwrap() += 1;
                        Self::answer(stream);
                    }
                    Err(_) => std::thread::sleep(Duration::from_millis(2)),
                }
            }
        });
        MockServer { url, stop, calls, handle: Some(handle) }
    }

    fn answer(stream: std::net::TcpStream) {
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let body: Value = serde_json::from_slice(&body).unwrap();
        let reply = Self::reply(&body).to_string();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
            reply.len()
        )
        .unwrap();
    }

    fn reply(body: &Value) -> Value {
        let tools: Vec<&str> = body["tools"]
            .as_array()
            .map(|t| t.iter().filter_map(|x| x["function"]["name"].as_str()).collect())
            .unwrap_or_default();
        let user = body["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()).unwrap_or("");
        let (name, args) = if tools.contains(&"Questions") {
            ("Questions", json!({"questions": [{"text": "How are FFT stages scaled in fixed point?", "origin": "requirement 1"}]}))
        } else if tools.contains(&"Answer") {
            if user.contains("| Thought]") {
                ("Answer", json!({"answer": "Halve after every butterfly stage [fixed_point.md#0]."}))
            } else {
                ("Thought", json!({"thought": "The fixed-point notes cover scaling."}))
            }
        } else if tools.contains(&"Verdict") {
            if user.contains("| search_web]") {
                ("Verdict", json!({"satisfactory": true, "feedback": "Supported."}))
            } else {
                ("Verdict", json!({"satisfactory": false, "feedback": "Cite a scaling source.", "search_query": "fixed point fft scaling"}))
            }
        } else if tools.contains(&"LiteratureReview") {
            ("LiteratureReview", json!({"body": "Each radix-2 stage halves its output to stay in range."}))
        } else {
            return json!({"choices": [{"message": {"role": "assistant", "content": "unexpected request"}}]});
        };
        json!({"id": "chatcmpl-mock", "object": "chat.completion", "choices": [{"index": 0, "finish_reason": "tool_calls", "message": {
            "role": "assistant", "content": null,
            "tool_calls": [{"id": "call_0", "type": "function", "function": {"name": name, "arguments": args.to_string()}}]
        }}]})
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// `(file, sequence_no, response)` of every exchange under `dir`, in file order.
fn responses(dir: &Path) -> Vec<(String, u64, CompletionResponse)> {
    synthforge_core::session::list_transcripts(dir)
        .into_iter()
        .flat_map(|f| {
            let rel = f.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            parse_transcript(&std::fs::read_to_string(&f).unwrap())
                .unwrap()
                .into_iter()
                .map(move |e| (rel.clone(), e.sequence_no, e.response))
        })
        .collect()
}

fn record_replay() -> Result<String, String> {
    let server = MockServer::start();
    let ws = tempfile::tempdir().unwrap();
    fixture_inputs(ws.path());
    std::fs::write(
        ws.path().join("config.yaml"),
        format!("models:\n  endpoint: {}\n  timeout_s: 10\n  max_attempts: 1\ntools:\n  search:\n    provider: fixture\n    dir: search\n", server.url),
    )
    .unwrap();
    let opts = Options { workspace: ws.path().to_path_buf(), record: true, ..Options::default() };
    let out = commands::gather(&opts).map_err(|e| format!("live gather: {e:#}"))?;
    ensure(out.code == 0, || out.message.clone())?;
    let live_calls = *server.calls.lock().unwrap();
    drop(server);

    let out = commands::replay(ws.path()).map_err(|e| format!("replay: {e:#}"))?;
    ensure(out.code == 0, || out.message.clone())?;
    let recorded = responses(&ws.path().join("transcripts"));
    let replayed = responses(&ws.path().join("replay/transcripts"));
    ensure(recorded.len() == live_calls, || format!("{} exchanges recorded, {live_calls} served", recorded.len()))?;
    ensure(recorded == replayed, || "replayed response sequence differs".into())?;

    // change what the recording says was asked at sequence_no 1
    let gen = ws.path().join("transcripts/knowledge/q0/generation/0.jsonl");
    let text = std::fs::read_to_string(&gen).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    ensure(lines.len() >= 2, || format!("generation has {} exchanges", lines.len()))?;
    let seq = lines[1]["sequence_no"].as_u64().unwrap();
    let content = lines[1]["request"]["messages"][1]["content"].as_str().unwrap().replace("scaled", "rescaled");
    lines[1]["request"]["messages"][1]["content"] = json!(content + "\ninjected");
    std::fs::write(&gen, lines.iter().map(|v| v.to_string() + "\n").collect::<String>()).unwrap();
    let err = match commands::replay(ws.path()) {
        Ok(o) => return Err(format!("tampered replay passed: {}", o.message)),
        Err(e) => e,
    };
    ensure(exit_code(&err) == REPLAY_MISMATCH, || format!("exit {} for {err:#}", exit_code(&err)))?;
    let msg = format!("{err:#}");
    ensure(msg.contains(&format!("sequence_no {seq}")), || format!("mismatch does not name sequence_no {seq}: {msg}"))?;
    Ok(format!("{live_calls} live exchanges replayed identically; injected change caught at sequence_no {seq}"))
}
