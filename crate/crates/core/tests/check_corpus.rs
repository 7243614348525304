use std::path::{Path, PathBuf};

use serde::Deserialize;
use synthforge_core::checks::{load_design_dir, report, CheckConfig, MetricStatus, Severity};
use synthforge_core::model::Metric;

#[derive(Deserialize)]
struct Expected {
    /// Automated metrics that must fail; every other automated metric must not.
    failing: Vec<Metric>,
    /// Substring of at least one error on the failing metric.
    message: Option<String>,
}

fn corpus() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/designs");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs
}

#[test]
fn every_fixture_gets_its_expected_verdict() {
    let dirs = corpus();
    assert_eq!(dirs.len(), 12);
    let mut problems = Vec::new();
    for dir in &dirs {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let expected: Expected =
            serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
        let design = load_design_dir(dir).unwrap();
        let r = report(&design, &CheckConfig::default());
        for m in Metric::AUTOMATED {
            let failed = r.status(m) == MetricStatus::Fail;
            let should = expected.failing.contains(&m);
            if failed != should {
                problems.push(format!("{name}: {m:?} failed={failed}, expected {should}\n{}", r.to_table()));
            }
        }
        if let (Some(msg), Some(m)) = (&expected.message, expected.failing.first()) {
            let hit = r.get(*m).findings.iter().any(|f| f.severity == Severity::Error && f.message.contains(msg.as_str()));
            if !hit {
                problems.push(format!("{name}: no {m:?} error mentions `{msg}`: {:?}", r.get(*m).findings));
            }
        }
        assert_eq!(r.status(Metric::SystemDesign), MetricStatus::NeedsHumanReview);
        assert_eq!(r.status(Metric::Synthesizable), MetricStatus::Skipped);
    }
    assert!(problems.is_empty(), "{}", problems.join("\n\n"));
}

#[test]
fn clean_designs_score_four_of_five() {
    // synthesizable is skipped without a configured tool
    for name in ["clean_fft", "clean_uart"] {
        let dir = corpus().into_iter().find(|d| d.ends_with(name)).unwrap();
        let r = report(&load_design_dir(&dir).unwrap(), &CheckConfig::default());
        assert_eq!(r.score(), 4, "{name}\n{}", r.to_table());
        assert_eq!(r.pragma_inventory.get("PIPELINE").copied().unwrap_or(0) > 0, name == "clean_fft");
    }
}

#[test]
fn requested_optimization_without_pragmas_fails() {
    let dir = corpus().into_iter().find(|d| d.ends_with("clean_uart")).unwrap();
    let design = load_design_dir(&dir).unwrap();
    let requested = CheckConfig { optimization_requested: true, ..CheckConfig::default() };
    assert_eq!(report(&design, &requested).status(Metric::Optimization), MetricStatus::Fail);
    let fft = corpus().into_iter().find(|d| d.ends_with("clean_fft")).unwrap();
    assert_eq!(
        report(&load_design_dir(&fft).unwrap(), &requested).status(Metric::Optimization),
        MetricStatus::Pass
    );
}
