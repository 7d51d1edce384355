mod common;

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use common::files;
use seedloop::dataset::load_pool;

fn seedloop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seedloop"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SEEDLOOP_URL")
        .env_remove("SEEDLOOP_LISTEN")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\n{}\n{}",
        o.status.code(),
        stdout(&o),
        stderr(&o)
    );
    stdout(&o)
}

/// Blanks the value of every `"created_at":<digits>`.
fn strip_timestamps(s: &str) -> String {
    let key = "\"created_at\":";
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find(key) {
        out.push_str(&rest[..i + key.len()]);
        rest = rest[i + key.len()..].trim_start_matches(|c: char| c.is_ascii_digit());
        out.push('0');
    }
    out.push_str(rest);
    out
}

fn synth(cwd: &Path, size: usize) {
    ok(seedloop(
        &[
            "synth",
            "--size",
            &size.to_string(),
            "--seed",
            "5",
            "--out",
            "corpus.jsonl",
        ],
        cwd,
    ));
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(seedloop(
        &[
            "synth",
            "--size",
            "2000",
            "--out",
            "a.jsonl",
            "--lexicon-out",
            "lex.txt",
        ],
        tmp.path(),
    ));
    assert!(out.contains("wrote 2000 items"), "{out}");
    assert!(out.contains("200 positive, 100 ambiguous"), "{out}");
    ok(seedloop(&["synth", "--size", "2000", "--out", "b.jsonl"], tmp.path()));
    let (a, b) = (tmp.path().join("a.jsonl"), tmp.path().join("b.jsonl"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(std::fs::read_to_string(tmp.path().join("lex.txt"))
        .unwrap()
        .contains("espresso"));
}

#[test]
fn default_run_spends_the_whole_budget() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 10_000);
    let started = Instant::now();
    let out = ok(seedloop(
        &["run", "--dataset", "corpus.jsonl", "--seed", "3"],
        tmp.path(),
    ));
    assert!(started.elapsed() < Duration::from_secs(30));
    assert!(out.contains("annotations: 160 of 160, models trained: 10"), "{out}");
    assert!(out.contains("| model + uncertainty |"), "{out}");
    let dir = tmp.path().join("runs/coffee-uncertainty-seed3");
    assert_eq!(common::training_log(&dir).len(), 160);
    let iterations = seedloop::store::read_iterations(&dir).unwrap();
    assert_eq!(iterations.len(), 9);
}

#[test]
fn identical_runs_differ_only_in_timestamps() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 3000);
    for out in ["a", "b"] {
        ok(seedloop(
            &[
                "run",
                "--dataset",
                "corpus.jsonl",
                "--oracle",
                "noisy:0.1",
                "--k",
                "8",
                "--max-iters",
                "3",
                "--out",
                out,
            ],
            tmp.path(),
        ));
    }
    let strip = |dir: &str| -> Vec<(String, String)> {
        files(&tmp.path().join(dir))
            .into_iter()
            .map(|(k, v)| (k, strip_timestamps(&v)))
            .collect()
    };
    assert_eq!(strip("a"), strip("b"));

    let out = ok(seedloop(&["compare", "a", "b"], tmp.path()));
    assert!(out.contains("+0.0 pp"), "{out}");
    let json = ok(seedloop(&["compare", "a", "b", "--json"], tmp.path()));
    let table: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn compare_against_the_zero_shot_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 3000);
    ok(seedloop(
        &[
            "run",
            "--dataset",
            "corpus.jsonl",
            "--k",
            "8",
            "--max-iters",
            "4",
            "--out",
            "model",
        ],
        tmp.path(),
    ));
    ok(seedloop(
        &[
            "run",
            "--dataset",
            "corpus.jsonl",
            "--k",
            "8",
            "--max-iters",
            "4",
            "--strategy",
            "confident_zero_shot",
            "--out",
            "rand",
        ],
        tmp.path(),
    ));
    let zs = ok(seedloop(
        &["evaluate", "--zero-shot", "--dataset", "corpus.jsonl", "--out", "zs"],
        tmp.path(),
    ));
    assert!(zs.contains("| zero-shot"), "{zs}");
    let again = ok(seedloop(&["evaluate", "--run", "model"], tmp.path()));
    assert!(again.contains("model + uncertainty"), "{again}");
    let out = ok(seedloop(&["compare", "model", "rand", "zs"], tmp.path()));
    for row in ["model + uncertainty", "model + confident_zero_shot", "zero-shot"] {
        assert!(out.contains(row), "{out}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 500);
    let o = seedloop(&["run", "--dataset", "corpus.jsonl", "--k", "15"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k must be even"), "{}", stderr(&o));
    let o = seedloop(
        &["run", "--dataset", "corpus.jsonl", "--oracle", "noisy:0.9"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = seedloop(
        &["run", "--dataset", "corpus.jsonl", "--strategy", "greedy"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = seedloop(&["run"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--dataset"), "{}", stderr(&o));
    let o = seedloop(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    ok(seedloop(
        &[
            "run",
            "--dataset",
            "corpus.jsonl",
            "--k",
            "4",
            "--max-iters",
            "1",
            "--out",
            "one",
        ],
        tmp.path(),
    ));
    let o = seedloop(&["compare", "one"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least two"), "{}", stderr(&o));
    let o = seedloop(
        &[
            "run",
            "--dataset",
            "corpus.jsonl",
            "--k",
            "4",
            "--max-iters",
            "1",
            "--out",
            "one",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2), "refuses to overwrite: {}", stderr(&o));
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = seedloop(&["run", "--dataset", "missing.jsonl"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    std::fs::write(
        tmp.path().join("bad.jsonl"),
        "{\"id\":\"a\",\"text\":\"x\"}\nnot json\n",
    )
    .unwrap();
    let o = seedloop(&["run", "--dataset", "bad.jsonl"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bad.jsonl:2:"), "{}", stderr(&o));
    // A pool smaller than the budget.
    synth(tmp.path(), 100);
    let o = seedloop(&["run", "--dataset", "corpus.jsonl"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    ok(seedloop(
        &[
            "run",
            "--dataset",
            "corpus.jsonl",
            "--k",
            "4",
            "--max-iters",
            "1",
            "--n-eval",
            "10",
            "--out",
            "done",
        ],
        tmp.path(),
    ));
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    std::fs::copy(
        tmp.path().join("done/config.json"),
        tmp.path().join("empty/config.json"),
    )
    .unwrap();
    let o = seedloop(&["compare", "done", "empty"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("seedloop evaluate --run empty"), "{}", stderr(&o));
}

#[test]
fn resume_of_a_finished_run_reprints_it() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 1000);
    let first = ok(seedloop(
        &[
            "run",
            "--dataset",
            "corpus.jsonl",
            "--k",
            "4",
            "--max-iters",
            "2",
            "--out",
            "r",
        ],
        tmp.path(),
    ));
    let before = files(&tmp.path().join("r"));
    let again = ok(seedloop(&["run", "--resume", "r"], tmp.path()));
    assert_eq!(first, again);
    assert_eq!(files(&tmp.path().join("r")), before);
}

#[test]
fn human_runs_need_a_service() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 1000);
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    let o = seedloop(
        &[
            "run",
            "--dataset",
            "corpus.jsonl",
            "--oracle",
            "human",
            "--service",
            &url,
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("seedloop serve"), "{}", stderr(&o));

    let root = tmp.path().join("runs");
    let svc =
        seedloop::service::RunningService::start(seedloop::service::ServiceOptions::new(&root), "127.0.0.1:0").unwrap();
    let dataset = tmp.path().join("corpus.jsonl");
    let out = ok(seedloop(
        &[
            "run",
            "--dataset",
            dataset.to_str().unwrap(),
            "--oracle",
            "human",
            "--audit-oracle",
            "scripted",
            "--k",
            "4",
            "--service",
            &svc.url(),
            "--run-id",
            "mine",
        ],
        tmp.path(),
    ));
    assert!(out.contains("run mine started"), "{out}");
    assert!(root.join("mine/state.snapshot").exists());
}

#[test]
fn hundred_thousand_records_load_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), 100_000);
    let started = Instant::now();
    let pool = load_pool(&tmp.path().join("corpus.jsonl")).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(pool.len(), 100_000);
    assert!(elapsed < Duration::from_secs(5), "{elapsed:?}");
}
