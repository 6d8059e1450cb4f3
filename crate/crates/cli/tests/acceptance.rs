//! End-to-end acceptance suite. Every test prints one PASS/FAIL line; criteria
//! run one at a time so their wall-clock budgets are not shared.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use phlab::acceptance::{prepare, run_criterion, Cache, NAMES, TIME_LIMITS};
use phlab::ExperimentConfig;
use serde_json::Value;

/// Verdict lines go straight to the stderr handle so they show up even for
/// passing tests, which libtest would otherwise capture.
fn verdict(line: std::fmt::Arguments) {
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

static SUITE: Mutex<Option<Cache>> = Mutex::new(None);

fn suite() -> MutexGuard<'static, Option<Cache>> {
    SUITE.lock().unwrap_or_else(|e| e.into_inner())
}

fn criterion(id: u8) {
    let cfg = ExperimentConfig::default();
    let mut guard = suite();
    let cache = guard.get_or_insert_with(Cache::default);
    prepare(id, &cfg, cache);
    let start = Instant::now();
    let v = run_criterion(id, &cfg, cache);
    let secs = start.elapsed().as_secs_f64();
    let limit = TIME_LIMITS[id as usize];
    let pass = v.pass && secs <= limit;
    verdict(format_args!(
        "criterion {id:>2} {:<26} {} ({secs:.2}s, budget {limit}s) {}",
        NAMES[id as usize],
        if pass { "PASS" } else { "FAIL" },
        v.detail
    ));
    assert!(v.pass, "criterion {id} failed: {}", v.detail);
    assert!(
        secs <= limit,
        "criterion {id} took {secs:.2}s, budget {limit}s"
    );
}

#[test]
fn criterion_01_splitting_matches_eigenvectors() {
    criterion(1);
}

#[test]
fn criterion_02_domination_at_first_power() {
    criterion(2);
}

#[test]
fn criterion_03_inverse_round_trip() {
    criterion(3);
}

#[test]
fn criterion_04_integrability_defect() {
    criterion(4);
}

#[test]
fn criterion_05_hexagonal_loops() {
    criterion(5);
}

#[test]
fn criterion_06_evenly_spaced_chain() {
    criterion(6);
}

#[test]
fn criterion_07_cu_disk_witness() {
    criterion(7);
}

#[test]
fn criterion_08_leaf_density() {
    criterion(8);
}

#[test]
fn criterion_09_sh_certificate() {
    criterion(9);
}

#[test]
fn criterion_10_gibbs_histograms() {
    criterion(10);
}

fn strip_timing(report: &str) -> Value {
    let mut v: Value = serde_json::from_str(report).expect("report is JSON");
    v.as_object_mut()
        .expect("report is an object")
        .remove("wall_time");
    v
}

fn accept_once(dir: &Path, cfg: &Path, name: &str) -> (i32, String) {
    let out = dir.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_phlab"))
        .args(["accept", "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(&out)
        .env("PHLAB_THREADS", "2")
        .status()
        .expect("binary runs");
    (
        status.code().unwrap_or(-1),
        std::fs::read_to_string(out).expect("report written"),
    )
}

#[test]
fn criterion_11_accept_is_deterministic() {
    let _guard = suite();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("accept.ini");
    std::fs::write(
        &cfg,
        "seed = 11\n[map]\nfamily = gmk\nepsilon = 0\n[experiment]\ncriteria = 1,2,3,4,9\n",
    )
    .unwrap();
    let (code_a, a) = accept_once(dir.path(), &cfg, "a.json");
    let (code_b, b) = accept_once(dir.path(), &cfg, "b.json");
    let (ra, rb) = (strip_timing(&a), strip_timing(&b));
    let same_bytes = a
        .lines()
        .filter(|l| !l.contains("\"wall_time\""))
        .eq(b.lines().filter(|l| !l.contains("\"wall_time\"")));
    let pass = code_a == 0 && code_b == 0 && ra == rb && same_bytes;
    verdict(format_args!(
        "criterion 11 {:<26} {} (exit codes {code_a}, {code_b})",
        "determinism",
        if pass { "PASS" } else { "FAIL" }
    ));
    assert!(
        same_bytes && ra == rb,
        "reports differ beyond the timing field"
    );
    assert_eq!((code_a, code_b), (0, 0));
}
