mod common;

use std::path::Path;
use std::sync::Arc;

use common::*;
use synthforge_core::gateway::{parse_transcript, CompletionResponse};
use synthforge_core::knowledge::{run_knowledge, KnowledgeConfig, KnowledgeContext, KnowledgeError, KnowledgeOutput};
use synthforge_core::rag::{ChunkingConfig, Collection, HashedEmbedder, VectorStore};
use synthforge_core::session::AgentEnv;

const Q: &str = "How are twiddle factors stored for a 128-point FFT?";

fn store(e: &HashedEmbedder) -> VectorStore {
    let mut s = VectorStore::new(e, ChunkingConfig::default()).unwrap();
    s.ingest(
        e,
        Collection::Generic,
        &[
            ("fft-notes".to_string(), "Twiddle factors for an N-point FFT are often kept in a ROM of N/2 complex values.".to_string()),
            ("hls-notes".to_string(), "Pipelined loops need an initiation interval; the PIPELINE pragma sets II.".to_string()),
        ],
    )
    .unwrap();
    s
}

fn script(evals: Vec<CompletionResponse>) -> Vec<(&'static str, Vec<CompletionResponse>)> {
    vec![
        ("questions", vec![questions(&[Q, "  how are twiddle factors stored for a 128-point FFT?  "])]),
        ("q0/generation", vec![answer("Keep 64 twiddles in a ROM [fft-notes#0].")]),
        ("q0/evaluation", evals),
        ("review", vec![review("Twiddles live in a ROM.")]),
    ]
}

fn run(evals: Vec<CompletionResponse>, record: &Path, out: &Path) -> Result<KnowledgeOutput, KnowledgeError> {
    let (session, book) = scripted(script(evals));
    let session = session.recording_to(record);
    let templates = templates();
    let search = Arc::new(search_fixture(&["twiddle rom", "fft twiddle"]));
    let tools = registry(search.clone());
    let e = HashedEmbedder::new(256);
    let store = store(&e);
    let objectives = objectives();
    let ctx = KnowledgeContext {
        env: AgentEnv { session: &session, templates: &templates, tools: &tools },
        objectives: &objectives,
        store: &store,
        embedder: &e,
        search: search.as_ref(),
        config: KnowledgeConfig::default(),
    };
    let r = run_knowledge(&ctx, out);
    if r.is_ok() {
        assert_eq!(book.remaining(), 0, "script not fully consumed");
    }
    r
}

fn eval_prompt(record: &Path, n: usize) -> String {
    let p = record.join(format!("transcripts/knowledge/q0/evaluation/{n}.jsonl"));
    let entries = parse_transcript(&std::fs::read_to_string(p).unwrap()).unwrap();
    entries[0].request.messages[1].content.clone()
}

#[test]
fn immediate_approval_is_one_round() {
    let (rec, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let k = run(vec![verdict(true, "good")], rec.path(), out.path()).unwrap();
    // duplicate question collapses
    assert_eq!(k.questions.len(), 1);
    let d = &k.drafts[0];
    assert_eq!((d.rounds, d.searches, d.satisfied), (1, 0, true));
    assert!(k.review.caveats.is_empty());
    let md = std::fs::read_to_string(out.path().join("literature_review.md")).unwrap();
    assert!(md.contains("Twiddles live in a ROM."));
    assert!(rec.path().join("transcripts/knowledge/trace.json").exists());
    assert!(rec.path().join("transcripts/knowledge/q0.trace.json").exists());
}

#[test]
fn two_rejections_two_searches() {
    let (rec, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let evals = vec![
        verdict_query(false, "no source for ROM depth", "twiddle ROM"),
        verdict_query(false, "still vague", "FFT   twiddle"),
        verdict(true, "fine"),
    ];
    let k = run(evals, rec.path(), out.path()).unwrap();
    let d = &k.drafts[0];
    assert_eq!((d.rounds, d.searches, d.satisfied), (3, 2, true));
    let web: Vec<&str> = d.evidence.iter().map(|e| e.locator()).filter(|l| l.starts_with("https://")).collect();
    assert_eq!(web, vec!["https://example.org/twiddle-rom", "https://example.org/fft-twiddle"]);
    assert!(k.review.sources.iter().any(|s| s.locator == "https://example.org/fft-twiddle"));
}

#[test]
fn cap_stops_after_five_rounds() {
    let (rec, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let evals = (0..5).map(|i| verdict(false, &format!("weak {i}"))).collect();
    let k = run(evals, rec.path(), out.path()).unwrap();
    let d = &k.drafts[0];
    assert_eq!((d.rounds, d.searches, d.satisfied), (5, 4, false));
    assert_eq!(d.last_feedback, "weak 4");
    assert_eq!(k.review.caveats.len(), 1);
    assert!(!rec.path().join("transcripts/knowledge/q0/evaluation/5.jsonl").exists());
}

#[test]
fn retrieval_precedes_search() {
    let (rec, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(vec![verdict_query(false, "more", "twiddle rom"), verdict(true, "ok")], rec.path(), out.path()).unwrap();
    let first = eval_prompt(rec.path(), 0);
    assert!(first.contains("retrieve") && !first.contains("search_web"));
    let second = eval_prompt(rec.path(), 1);
    let (r, s) = (second.find("retrieve").unwrap(), second.find("search_web").unwrap());
    assert!(r < s, "retrieval observation must come first");
    assert!(second.contains("Details on twiddle rom."));
}
