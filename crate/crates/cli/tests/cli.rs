//! End-to-end runs of the `simbench` binary on a tiny configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use simbench_cli::pipeline::select_best;
use simbench_cli::store::{ResultStore, RunStatus};

fn experts() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experts")
}

fn simbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simbench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, classes: &str) -> PathBuf {
    let path = dir.join("tiny.cfg");
    let text = format!(
        "envs = CartPole, Pendulum\nvariants = bc, dagger, qdagger\nclasses = {classes}\nbudgets = 500\n\
         repetitions = 1\neval_episodes = 3\ntiming_episodes = 2\nverify_envs = CartPole\nverify_queries = 5\n\
         verify_timeout_s = 2\nexperts = {}\noutput = {}\n",
        experts().display(),
        dir.join("results").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn run_is_resumable_and_reporting_is_pure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "linear, tree-4, oblique-4, mlp-2x2");
    ok(simbench(&["run", "--config", cfg.to_str().unwrap()]));

    let store = ResultStore::open(dir.path().join("results")).unwrap();
    let runs = store.runs().unwrap();
    assert_eq!(runs.len(), 2 * 3 * 4);
    let unsupported: Vec<_> = runs
        .iter()
        .filter(|r| r.status == RunStatus::Unsupported)
        .collect();
    assert_eq!(unsupported.len(), 4);
    assert!(unsupported
        .iter()
        .all(|r| r.env == "Pendulum" && r.variant == "qdagger"));
    assert!(runs
        .iter()
        .filter(|r| r.status != RunStatus::Unsupported)
        .all(|r| r.is_ok()));

    // Measurements cover exactly the best run of each (env, class).
    let best: HashSet<String> = select_best(&runs).into_iter().map(|r| r.key).collect();
    let measured: HashSet<String> = store
        .interpretability()
        .unwrap()
        .into_iter()
        .map(|m| m.run_key)
        .collect();
    assert_eq!(best, measured);
    assert_eq!(best.len(), 8);
    let verified: HashSet<String> = store
        .verifications()
        .unwrap()
        .into_iter()
        .map(|v| v.run_key)
        .collect();
    assert_eq!(verified.len(), 4);
    assert!(verified.iter().all(|k| k.starts_with("CartPole/")));
    store.check_integrity().unwrap();

    let before = read(store.path("runs.csv"));
    let figures = dir.path().join("results/figures");
    let tradeoff = read(figures.join("tradeoff.csv"));
    assert_eq!(tradeoff.lines().count(), 1 + 8);

    ok(simbench(&["run", "--config", cfg.to_str().unwrap()]));
    assert_eq!(read(store.path("runs.csv")), before);
    assert_eq!(store.interpretability().unwrap().len(), 8);
    assert_eq!(store.verifications().unwrap().len(), 4 * 5);

    let results = dir.path().join("results");
    let snapshot: Vec<String> = std::fs::read_dir(&figures)
        .unwrap()
        .map(|e| read(e.unwrap().path()))
        .collect();
    ok(simbench(&[
        "report",
        "--results",
        results.to_str().unwrap(),
    ]));
    let again: Vec<String> = std::fs::read_dir(&figures)
        .unwrap()
        .map(|e| read(e.unwrap().path()))
        .collect();
    assert_eq!(snapshot, again);
}

#[test]
fn interrupted_sweep_resumes_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let small = write_config(dir.path(), "linear");
    ok(simbench(&["imitate", "--config", small.to_str().unwrap()]));
    let runs_csv = dir.path().join("results/runs.csv");
    // Simulate a crash halfway through writing a row.
    let mut text = read(runs_csv.clone());
    text.push_str("1,CartPole/bc/500/tree-4/0,Cart");
    std::fs::write(&runs_csv, text).unwrap();

    let full = write_config(dir.path(), "linear, tree-4");
    ok(simbench(&["imitate", "--config", full.to_str().unwrap()]));
    let runs = ResultStore::open(dir.path().join("results"))
        .unwrap()
        .runs()
        .unwrap();
    let keys: HashSet<&str> = runs.iter().map(|r| r.key.as_str()).collect();
    assert_eq!(runs.len(), 12);
    assert_eq!(keys.len(), 12);
}

#[test]
fn single_policy_verbs_agree_on_the_emitted_text() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let exp = experts();
    ok(simbench(&[
        "imitate",
        "--env",
        "MountainCar",
        "--variant",
        "bc",
        "--class",
        "oblique-8",
        "--budget",
        "2000",
        "--eval-episodes",
        "2",
        "--experts",
        exp.to_str().unwrap(),
        "--out",
        &p("s.policy"),
        "--emit",
        &p("a.txt"),
    ]));
    let stdout = ok(simbench(&[
        "measure",
        "--policy",
        &p("s.policy"),
        "--episodes",
        "2",
        "--emit",
        &p("b.txt"),
    ]));
    assert!(stdout.contains("size_bytes"));
    let a = read(dir.path().join("a.txt"));
    assert_eq!(a, read(dir.path().join("b.txt")));
    assert!(a.starts_with("if "));
    let size: usize = stdout
        .lines()
        .find_map(|l| l.strip_prefix("size_bytes "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(size > 0 && size <= a.len());

    let stdout = ok(simbench(&[
        "verify",
        "--policy",
        &p("s.policy"),
        "--queries",
        "12",
        "--out",
        &p("v.csv"),
    ]));
    assert!(stdout.contains("queries 12"));
    assert_eq!(read(dir.path().join("v.csv")).lines().count(), 13);
}

#[test]
fn hard_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "envs = CartPole\ncolour = blue\n").unwrap();
    let missing = dir.path().join("missing.cfg");
    std::fs::write(
        &missing,
        format!(
            "envs = CartPole\nexperts = {}\noutput = {}\n",
            dir.path().join("nope").display(),
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    for args in [
        vec!["run", "--config", bad.to_str().unwrap()],
        vec!["run", "--config", missing.to_str().unwrap()],
        vec!["imitate", "--env", "Pong", "--out", "x.policy"],
        vec!["train-expert", "--env", "Pong"],
        vec!["measure", "--policy", "does-not-exist.policy"],
        vec!["report", "--results", "does/not/exist"],
        vec!["frobnicate"],
    ] {
        let out = simbench(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
    }
}
