use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tkhist(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_tkhist"))
        .args(args)
        .env_remove("TKHIST_STATE")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "tkhist {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generated ChainStar dataset with a built state; returns the temp dir.
fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tkhist(&[
        "generate", "--layout", "chain-star", "--tables", "3", "--rows", "1500", "--skew", "1.1",
        "--correlated", "2", "--seed", "9", "--out", p(&data),
    ]);
    tkhist(&[
        "build", "--schema", p(&data.join("schema.json")),
        "--state", p(&dir.path().join("state.json")), "--bins", "40", "--k", "8",
    ]);
    dir
}

fn lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn build_writes_a_loadable_state_and_reports_size() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    tkhist(&["generate", "--tables", "2", "--rows", "300", "--out", p(&data)]);
    let state = dir.path().join("s.json");
    let out = tkhist(&["build", "--schema", p(&data.join("schema.json")), "--state", p(&state)]);
    let msg = stdout(&out);
    let bytes = std::fs::metadata(&state).unwrap().len();
    assert!(msg.contains(&format!("state {bytes} bytes")), "{msg}");
    let st = tkhist_core::load_state(&state).unwrap();
    assert_eq!(st.config.bin_count, 200);
    assert_eq!(st.config.k, 20);
}

#[test]
fn rebuild_is_byte_identical() {
    let dir = fixture();
    let schema = dir.path().join("data/schema.json");
    let again = dir.path().join("again.json");
    tkhist(&["build", "--schema", p(&schema), "--state", p(&again), "--bins", "40", "--k", "8"]);
    let a = std::fs::read(dir.path().join("state.json")).unwrap();
    let b = std::fs::read(&again).unwrap();
    assert!(a == b);
}

#[test]
fn invalid_queries_are_reported_inline() {
    let dir = fixture();
    let w = dir.path().join("w.sql");
    std::fs::write(
        &w,
        "-- one good, one bad\n\
         SELECT COUNT(*) FROM users, posts WHERE posts.OwnerUserId = users.Id\n\
         SELECT COUNT(*) FROM users, missing WHERE missing.x = users.Id\n",
    )
    .unwrap();
    let state = dir.path().join("state.json");
    let out = tkhist(&["estimate", "--state", p(&state), "--workload", p(&w)]);
    let recs = lines(&stdout(&out));
    assert_eq!(recs.len(), 2);
    assert!(recs[0]["estimate"].as_f64().unwrap() > 0.0);
    assert!(recs[0]["latency_ms"].as_f64().is_some());
    assert_eq!(recs[1]["line"], 3);
    assert!(recs[1]["error"].as_str().unwrap().contains("missing"));
}

#[test]
fn state_path_defaults_to_environment() {
    let dir = fixture();
    let out = Command::new(env!("CARGO_BIN_EXE_tkhist"))
        .args(["estimate", "--query", "SELECT COUNT(*) FROM users"])
        .env("TKHIST_STATE", dir.path().join("state.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(lines(&stdout(&out))[0]["estimate"], 1500.0);
}

#[test]
fn truth_suffixes_populate_metrics() {
    let dir = fixture();
    let w = dir.path().join("w.sql");
    std::fs::write(&w, "SELECT COUNT(*) FROM users || 750\nSELECT COUNT(*) FROM posts||0\n").unwrap();
    let out = tkhist(&["estimate", "--state", p(&dir.path().join("state.json")), "--workload", p(&w)]);
    let recs = lines(&stdout(&out));
    assert_eq!(recs[0]["true_cardinality"], 750);
    assert_eq!(recs[0]["q_error"], 2.0);
    assert_eq!(recs[0]["ratio"], 2.0);
    // A zero truth leaves the metrics undefined.
    assert_eq!(recs[1]["true_cardinality"], 0);
    assert!(recs[1].get("q_error").is_none());
}

#[test]
fn evaluate_with_oracle_emits_percentiles() {
    let dir = fixture();
    let state = dir.path().join("state.json");
    let out = tkhist(&[
        "evaluate", "--state", p(&state),
        "--workload", p(&dir.path().join("data/joins.sql")),
        "--oracle", p(&dir.path().join("data/schema.json")),
        "--records", p(&dir.path().join("records.jsonl")),
    ]);
    let text = stdout(&out);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[..8], ["queries", "scored", "failed", "median", "p90", "p95", "p99", "max"]);
    let row = rdr.records().next().unwrap().unwrap();
    assert_eq!(row[0], row[1]);
    assert_eq!(&row[2], "0");
    let max: f64 = row[7].parse().unwrap();
    assert!(max.is_finite() && max >= 1.0);
    let recs = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    assert!(lines(&recs).iter().all(|r| r["q_error"].as_f64().is_some()));
}

#[test]
fn empty_workload_gives_empty_summary() {
    let dir = fixture();
    let w = dir.path().join("empty.sql");
    std::fs::write(&w, "").unwrap();
    let out = tkhist(&["evaluate", "--state", p(&dir.path().join("state.json")), "--workload", p(&w)]);
    let text = stdout(&out);
    let second = text.lines().nth(1).unwrap();
    assert!(second.starts_with("0,0,0,,,,,,"), "{second}");
}

#[test]
fn update_applies_rows_and_rejects_out_of_range_keys() {
    let dir = fixture();
    let state = dir.path().join("state.json");
    let before = tkhist_core::load_state(&state).unwrap();
    let users = before.table("users").unwrap();
    let hist = users.key_hist("users", "Id").unwrap();
    let rows = dir.path().join("new.csv");
    std::fs::write(&rows, "Id,Reputation\n1500,3\n99999999,1\n").unwrap();
    let out = tkhist(&["update", "--state", p(&state), "--table", "users", "--rows", p(&rows)]);
    let report: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["accepted"], 1);
    assert_eq!(report["rejected"][0][0], 2);
    let after = tkhist_core::load_state(&state).unwrap();
    assert_eq!(after.table("users").unwrap().row_count, users.row_count + 1);
    let bin = hist.locate(1500).unwrap();
    let new_hist = after.table("users").unwrap().key_hist("users", "Id").unwrap();
    assert_eq!(new_hist.bins[bin].total(), hist.bins[bin].total() + 1);
    assert_eq!(new_hist.total_rows, hist.total_rows + 1);
}

#[test]
fn unknown_update_table_is_fatal() {
    let dir = fixture();
    let rows = dir.path().join("new.csv");
    std::fs::write(&rows, "x\n1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tkhist"))
        .args(["update", "--state", p(&dir.path().join("state.json")), "--table", "nope", "--rows", p(&rows)])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let dir = fixture();
    let summary = dir.path().join("sweep.csv");
    let raw = dir.path().join("raw.csv");
    tkhist(&[
        "sweep", "--schema", p(&dir.path().join("data/schema.json")),
        "--workload", p(&dir.path().join("data/joins.sql")),
        "--bins", "10,40", "--k", "0,5", "--repeats", "1",
        "--raw", p(&raw), "--out", p(&summary),
    ]);
    let text = std::fs::read_to_string(&summary).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, prefix) in rows.iter().zip(["10,0,", "10,5,", "40,0,", "40,5,"]) {
        assert!(row.starts_with(prefix), "{row}");
    }
    let queries = std::fs::read_to_string(dir.path().join("data/joins.sql")).unwrap().lines().count();
    let raw_rows = std::fs::read_to_string(&raw).unwrap().lines().count() - 1;
    assert_eq!(raw_rows, 4 * queries);
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        tkhist(&["generate", "--rows", "200", "--skew", "1.5", "--seed", "3", "--out", p(&dir.path().join(name))]);
    }
    for file in ["t0.csv", "t1.csv", "t2.csv", "schema.json", "joins.sql"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}
