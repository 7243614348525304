use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use synthforge_cli::workspace::copy_tree;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_synthforge"));
    c.env_remove("SYNTHFORGE_API_KEY").env("RUST_LOG", "off");
    c
}

fn run(ws: &Path, args: &[&str]) -> Output {
    bin().arg("-w").arg(ws).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fft_workspace")
}

fn designs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/designs")
}

/// A copy of the golden workspace with only its inputs and script.
fn inputs_copy(dst: &Path) {
    copy_tree(&fixture(), dst).unwrap();
    for d in ["design", "transcripts", "knowledge/index"] {
        std::fs::remove_dir_all(dst.join(d)).unwrap();
    }
    for f in ["knowledge/literature_review.md", "knowledge/drafts.json"] {
        std::fs::remove_file(dst.join(f)).unwrap();
    }
}

#[test]
fn init_then_check_usage() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["init"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(d.path().join("objectives.yaml").is_file());
    assert_eq!(d.path().join("templates").read_dir().unwrap().count(), 9);
    // design needs a review first
    let o = run(d.path(), &["design", "--script", "nothing.json"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
}

#[test]
fn argument_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["frobnicate"])), 2);
    assert_eq!(code(&run(d.path(), &["run", "--trials", "0"])), 2);
    assert_eq!(code(&run(d.path(), &["run", "--script", "a", "--parallel"])), 2);
    // no objectives
    let o = run(d.path(), &["gather", "--script", "a.json"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("objectives.yaml"));
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn bad_config_names_the_key() {
    let d = tempfile::tempdir().unwrap();
    run(d.path(), &["init"]);
    std::fs::write(d.path().join("config.yaml"), "trails: 3\n").unwrap();
    let o = run(d.path(), &["gather", "--script", "a.json"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("trails"), "{}", text(&o));
}

#[test]
fn check_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["check", designs().join("clean_fft").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("interface"));
    let o = run(d.path(), &["check", designs().join("width_mismatch").to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", text(&o));
    let o = run(d.path(), &["check", d.path().join("missing").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(d.path(), &["check", fixture().join("design/best").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o));
}

#[test]
fn locked_workspace_is_refused() {
    let d = tempfile::tempdir().unwrap();
    inputs_copy(d.path());
    std::fs::write(d.path().join(".synthforge.lock"), "1").unwrap();
    let o = run(d.path(), &["gather", "--script", d.path().join("script.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("locked"));
}

#[test]
fn exhausted_script_exits_one() {
    let d = tempfile::tempdir().unwrap();
    inputs_copy(d.path());
    std::fs::write(d.path().join("short.json"), "{}").unwrap();
    let o = run(d.path(), &["gather", "--script", d.path().join("short.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", text(&o));
}

#[test]
fn scripted_run_matches_golden_outputs() {
    let d = tempfile::tempdir().unwrap();
    inputs_copy(d.path());
    let o = run(d.path(), &["run", "--script", d.path().join("script.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("best: trial 0"));
    for f in ["design/manifest.json", "design/trials.json", "knowledge/literature_review.md"] {
        assert_eq!(std::fs::read(d.path().join(f)).unwrap(), std::fs::read(fixture().join(f)).unwrap(), "{f}");
    }
    assert!(!d.path().join(".synthforge.lock").exists());
}

#[test]
fn replay_detects_tampering() {
    let d = tempfile::tempdir().unwrap();
    copy_tree(&fixture(), d.path()).unwrap();
    let o = bin().args(["replay", d.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", text(&o));

    // an emitted file that no longer matches
    let header = d.path().join("design/best/modules/fft64_odd/fft64_odd.h");
    let mut t = std::fs::read_to_string(&header).unwrap();
    t.push_str("// edited\n");
    std::fs::write(&header, t).unwrap();
    let o = bin().args(["replay", d.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("fft64_odd.h"));

    // an input that changes what the agents are asked
    copy_tree(&fixture(), d.path()).unwrap();
    std::fs::write(d.path().join("objectives.yaml"), "project_name: fft128\ngoals:\n  - Something else\nrequirements:\n  - Anything\n").unwrap();
    let o = bin().args(["replay", d.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("sequence_no"), "{}", text(&o));
}
