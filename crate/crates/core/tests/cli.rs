use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jumpinfer::fit::import_model;

fn jumpinfer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpinfer"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = jumpinfer(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn run_fit_simulate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["template", "metroid", "--out", "m.spec"]);
    ok(d, &["run", "--synthetic", "m.spec", "--out", "m.log"]);
    ok(d, &["fit", "--log", "m.log", "--out", "m.model"]);
    let model = import_model(&fs::read_to_string(d.join("m.model")).unwrap()).unwrap();
    assert_eq!((model.min_hold, model.max_hold), (10, 22));
    let csv = ok(d, &["simulate", "--model", "m.model", "--hold", "1", "--hold-median", "--hold-max", "--frames", "50"]);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# jumpinfer "));
    assert_eq!(lines.next(), Some("hold,frame,height"));
    let holds: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(holds.into_iter().collect::<Vec<_>>(), ["1", "16", "22"]);
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: &[&[&str]] = &[
        &["fit", "--bogus"],
        &["fit", "--log", "missing.log", "--out", "x.model"],
        &["run", "--builtin", "nosuchgame", "--out", "x.log"],
        &["simulate", "--model", "missing.model", "--hold", "1"],
        &["compare", "--models", "a.model", "--hold", "often"],
        &["template", "mario", "--jobs", "0"],
    ];
    for args in cases {
        let out = jumpinfer(d, args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} printed no error");
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.conf"), "tracker.sigmaa = 3\n").unwrap();
    let out = jumpinfer(d, &["template", "--list", "--config", "bad.conf"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigmaa"));
}

#[test]
fn config_changes_header_hash() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["run", "--builtin", "castlevania", "--out", "c.log"]);
    ok(d, &["fit", "--log", "c.log", "--out", "a.model"]);
    fs::write(d.join("eps.conf"), "fit.epsilon = 0.4\n").unwrap();
    ok(d, &["fit", "--log", "c.log", "--out", "b.model", "--config", "eps.conf"]);
    let a = fs::read_to_string(d.join("a.model")).unwrap();
    let b = fs::read_to_string(d.join("b.model")).unwrap();
    assert_ne!(a.lines().next(), b.lines().next());
}

#[test]
fn analyze_rejects_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("none")).unwrap();
    let out = jumpinfer(dir.path(), &["analyze", "--models", "none", "--out", "o"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no .model files"));
}
