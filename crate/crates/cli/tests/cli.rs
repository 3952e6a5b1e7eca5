// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use shiftleak::locking::interference_score;
use shiftleak::netlist::parse_bench;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftleak")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn toml_file(dir: &Path, name: &str) -> toml::Value {
    toml::from_str(&read(dir, name)).unwrap()
}

/// A generated benchmark plus its locked version in a fresh directory.
fn workspace(key_bits: &str) -> TempDir {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["generate", "--gates", "300", "--flops", "32", "--seed-generate", "3", "--name", "d"]);
    ok(t.path(), &["lock", "--input", "d.bench", "--key-bits", key_bits, "--seed-lock", "1"]);
    t
}

#[test]
fn locking_twice_gives_identical_files() {
    let a = workspace("8");
    let b = workspace("8");
    for f in ["d.bench", "d.locked.bench", "d.key", "d.lock.toml"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    assert_eq!(read(a.path(), "d.key").lines().count(), 8);
    let report = toml_file(a.path(), "d.lock.toml");
    assert_eq!(report["config"]["seeds"]["lock"].as_integer(), Some(1));
    assert_eq!(report["records"].as_array().unwrap().len(), 8);
}

#[test]
fn too_many_key_bits_is_a_usage_error_naming_the_count() {
    let t = workspace("4");
    let out = run(t.path(), &["lock", "--input", "d.bench", "--key-bits", "5000", "--out-dir", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("5000") && err.contains("eligible"), "{err}");
}

#[test]
fn sll_report_lists_a_recomputable_interference_score() {
    let t = workspace("4");
    ok(t.path(), &["lock", "--input", "d.bench", "--key-bits", "16", "--scheme", "sll", "--out-dir", "sll"]);
    let report = toml_file(&t.path().join("sll"), "d.lock.toml");
    assert_eq!(report["scheme"].as_str(), Some("sll-heuristic"));
    let original = parse_bench(&read(t.path(), "d.bench")).unwrap();
    let hosts: Vec<_> = report["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| original.find(r["host"].as_str().unwrap()).unwrap())
        .collect();
    assert_eq!(report["interference"].as_integer(), Some(interference_score(&original, &hosts) as i64));
}

#[test]
fn chain_sweep_writes_one_report_per_count_with_non_increasing_recovery() {
    let t = workspace("16");
    ok(t.path(), &["attack", "--input", "d.locked.bench", "--key", "d.key", "--chains", "1,2,4,8,16"]);
    let mut last = usize::MAX;
    for c in [1, 2, 4, 8, 16] {
        let r = toml_file(t.path(), &format!("d.dfs.c{c}.attack.toml"));
        let recovered = r["result"]["recovered"].as_integer().unwrap() as usize;
        assert!(recovered <= last, "chains {c}");
        assert!(r["result"]["false_bits"].as_array().unwrap().is_empty());
        assert!(t.path().join(format!("d.dfs.c{c}.timings.toml")).exists());
        last = recovered;
    }
    let single = toml_file(t.path(), "d.dfs.c1.attack.toml");
    assert_eq!(single["result"]["recovered"].as_integer(), Some(16));
    assert_eq!(single["result"]["recovered_key"].as_str().unwrap(), read(t.path(), "d.key").replace('\n', ""));
}

#[test]
fn mssd_chip_yields_nothing() {
    let t = workspace("16");
    ok(t.path(), &["stitch", "--input", "d.locked.bench", "--chains", "1"]);
    let out = ok(t.path(), &["attack", "--input", "d.locked.bench", "--key", "d.key", "--layout", "d.c1.chains", "--defense", "mssd"]);
    assert!(out.contains("recovered 0/16"), "{out}");
    let r = toml_file(t.path(), "d.mssd.c1.attack.toml");
    assert_eq!(r["result"]["probe_passed"].as_bool(), Some(false));
    assert_eq!(r["result"]["unrecovered"].as_integer(), Some(16));
}

#[test]
fn attack_reports_are_reproducible_and_hold_no_timings() {
    let t = workspace("16");
    ok(t.path(), &["attack", "--input", "d.locked.bench", "--key", "d.key", "--chains", "2", "--out-dir", "a"]);
    ok(t.path(), &["attack", "--input", "d.locked.bench", "--key", "d.key", "--chains", "2", "--out-dir", "a2"]);
    let a = read(&t.path().join("a"), "d.dfs.c2.attack.toml");
    let b = read(&t.path().join("a2"), "d.dfs.c2.attack.toml").replace("\"a2\"", "\"a\"");
    assert_eq!(a, b);
    assert!(!a.contains("seconds"));
}

#[test]
fn flags_override_the_config_file() {
    let t = workspace("4");
    std::fs::write(
        t.path().join("run.toml"),
        "input = [\"d.bench\"]\nkey_bits = 8\nscheme = \"sll\"\nout_dir = \"cfg\"\n[seeds]\nlock = 5\n",
    )
    .unwrap();
    ok(t.path(), &["lock", "--config", "run.toml", "--key-bits", "6"]);
    let r = toml_file(&t.path().join("cfg"), "d.lock.toml");
    assert_eq!(r["key_bits"].as_integer(), Some(6));
    assert_eq!(r["scheme"].as_str(), Some("sll-heuristic"));
    assert_eq!(r["config"]["seeds"]["lock"].as_integer(), Some(5));

    std::fs::write(t.path().join("bad.toml"), "chains = \"many\"\n").unwrap();
    assert_eq!(run(t.path(), &["lock", "--config", "bad.toml"]).status.code(), Some(1));
}

#[test]
fn report_table_compares_variants() {
    let t = workspace("16");
    ok(
        t.path(),
        &["report", "--input", "d.locked.bench", "--key", "d.key", "--chains", "1,8", "--budget", "500", "--out-dir", "r"],
    );
    let r = toml_file(&t.path().join("r"), "report.toml");
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["recovered_dfs"].as_integer(), Some(16));
    assert_eq!(rows[0]["recovered_mssd"].as_integer(), Some(0));
    assert_eq!(rows[1]["chains"].as_integer(), Some(8));
    assert_eq!(rows[1]["mssd_cheaper"].as_bool(), Some(true));
    for row in rows {
        for c in ["coverage_original", "coverage_dfs", "coverage_mssd"] {
            assert!((0.0..=1.0).contains(&row[c].as_float().unwrap()));
        }
    }
    assert!(read(&t.path().join("r"), "report.toml").starts_with("# secure cell = 2 mux + 1 dff"));
}

#[test]
fn empty_report_succeeds() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["report"]);
    let r = toml_file(t.path(), "report.toml");
    assert!(r["rows"].as_array().unwrap().is_empty());
}

#[test]
fn bad_invocations_exit_with_one() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("bad.bench"), "OUTPUT(y)\ny = AND(a\n").unwrap();
    assert_eq!(run(t.path(), &["stitch", "--input", "bad.bench"]).status.code(), Some(1));
    assert_eq!(run(t.path(), &["stitch", "--input", "missing.bench"]).status.code(), Some(1));
    assert_eq!(run(t.path(), &["attack", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(run(t.path(), &[]).status.code(), Some(1));
    assert_eq!(run(t.path(), &["--help"]).status.code(), Some(0));
}
