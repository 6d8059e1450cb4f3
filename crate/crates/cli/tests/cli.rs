use std::path::Path;
use std::process::{Command, Output};

use phlab::config::parse_config;
use serde_json::Value;

fn phlab(dir: &Path, args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phlab"))
        .current_dir(dir)
        .args(args)
        .env("PHLAB_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn accept_on_the_linear_map_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "a.ini",
        "[map]\nepsilon = 0\n[experiment]\ncriteria = 1,2,3\n",
    );
    let out = phlab(
        dir.path(),
        &["accept", "--config", "a.ini", "--out", "a.json"],
        "1",
    );
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&dir.path().join("a.json"));
    assert_eq!(r["command"], "accept");
    assert_eq!(r["checks"].as_array().unwrap().len(), 3);
    assert!(r["error"].is_null());
}

#[test]
fn failed_invariant_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.ini", "[experiment]\ncriteria = 8\n");
    let out = phlab(dir.path(), &["accept", "--config", "a.ini"], "1");
    assert_eq!(out.status.code(), Some(2));
    let r = read_json(&dir.path().join("accept.json"));
    assert_eq!(r["checks"][0]["pass"], false);
}

#[test]
fn drift_without_perturbation_reports_no_crossing() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.ini", "[map]\nfamily = gmk\nepsilon = 0\n");
    let out = phlab(dir.path(), &["drift", "--config", "d.ini", "-N", "2"], "1");
    assert_eq!(out.status.code(), Some(1));
    let r = read_json(&dir.path().join("drift.json"));
    assert!(r["error"].as_str().unwrap().starts_with("NoCrossing"));
    assert!(!dir.path().join("drift.csv").exists());
}

#[test]
fn missing_output_directory_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let out = phlab(
        dir.path(),
        &["leaf", "--radius", "1", "--out", "missing/leaf.json"],
        "1",
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_configs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.ini", "[map]\nepsilon = -1\n");
    let out = phlab(dir.path(), &["leaf", "--config", "bad.ini"], "1");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
    let out = phlab(dir.path(), &["leaf", "--set", "map.wobble=1"], "1");
    assert_eq!(out.status.code(), Some(1));
    let out = phlab(dir.path(), &["leaf", "--radius", "1"], "zero");
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn report_embeds_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "l.ini", "seed = 3\n[map]\nepsilon = 0.05\n");
    let out = phlab(
        dir.path(),
        &[
            "leaf",
            "--config",
            "l.ini",
            "--seed",
            "0.1,0.2,0.3",
            "--radius",
            "2",
            "--set",
            "tolerances.tol=0.01",
        ],
        "1",
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = read_json(&dir.path().join("leaf.json"));
    let cfg = parse_config(r["config"].as_str().unwrap()).unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.experiment.point, [0.1, 0.2, 0.3]);
    assert_eq!(cfg.experiment.radius, 2.0);
    assert_eq!(cfg.tolerances.tol, 0.01);
    assert_eq!(cfg.echo(), r["config"].as_str().unwrap());
    let csv = std::fs::read_to_string(dir.path().join("leaf.csv")).unwrap();
    assert!(csv.starts_with("s,x,y,z\n"));
    assert_eq!(
        csv.lines().count() as u64 - 1,
        r["outputs"]["nodes"].as_u64().unwrap()
    );
}

#[test]
fn csv_out_path_puts_the_report_alongside() {
    let dir = tempfile::tempdir().unwrap();
    let out = phlab(
        dir.path(),
        &[
            "gibbs",
            "--epsilon",
            "0.05",
            "--grid",
            "8",
            "--npush",
            "4",
            "--out",
            "gibbs.csv",
        ],
        "1",
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("gibbs.csv")).unwrap();
    assert!(csv.starts_with("i,j,k,mass\n"));
    assert_eq!(csv.lines().count(), 513);
    assert_eq!(
        read_json(&dir.path().join("gibbs.json"))["command"],
        "gibbs"
    );
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let args = |name: &'static str| {
        [
            "density",
            "--epsilon",
            "0.05",
            "--radius",
            "20",
            "--grid",
            "32",
            "--out",
            name,
        ]
    };
    assert_eq!(
        phlab(dir.path(), &args("one.json"), "1").status.code(),
        Some(0)
    );
    assert_eq!(
        phlab(dir.path(), &args("four.json"), "4").status.code(),
        Some(0)
    );
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("one.csv"), read("four.csv"));
    let strip = |n: &str| {
        let mut v = read_json(&dir.path().join(n));
        v.as_object_mut().unwrap().remove("wall_time");
        v
    };
    assert_eq!(strip("one.json"), strip("four.json"));
}
