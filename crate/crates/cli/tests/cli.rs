use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_affectrec");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_of(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.push("--json");
    serde_json::from_str(&ok(&a)).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_lines(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(path, text).unwrap();
}

/// Two tracks and three paintings with hand-picked V-A labels.
fn toy(
    dir: &Path,
) -> (
    PathBuf,
    PathBuf,
    Vec<(&'static str, [f64; 2])>,
    Vec<(&'static str, [f64; 2])>,
) {
    let music = vec![("m0", [0.3, 0.4]), ("m1", [-0.5, 0.2])];
    let paintings = vec![("p0", [0.0, 0.0]), ("p1", [0.3, 0.5]), ("p2", [-0.6, -0.6])];
    let mk = |items: &[(&str, [f64; 2])], modality: &str| -> Vec<Value> {
        items
            .iter()
            .map(|(id, va)| json!({"id": id, "modality": modality, "valence": va[0], "arousal": va[1], "features": [1.0, va[0]]}))
            .collect()
    };
    let m = dir.join("music.jsonl");
    let pp = dir.join("paintings.jsonl");
    write_lines(&m, &mk(&music, "music"));
    write_lines(&pp, &mk(&paintings, "painting"));
    (m, pp, music, paintings)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[test]
fn haydn_csv_matches_hand_distances() {
    let dir = tempfile::tempdir().unwrap();
    let (m, pp, music, paintings) = toy(dir.path());
    let csv = dir.path().join("haydn.csv");
    let out = dir.path().join("idx");
    ok(&[
        "build-index",
        "--engine",
        "haydn",
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
        "--out",
        p(&out),
        "--dump-csv",
        p(&csv),
    ]);
    assert!(out.join("haydn.afix").exists());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "id,p0,p1,p2");
    for (line, (mid, mva)) in lines.zip(&music) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], *mid);
        for (cell, (_, pva)) in cells[1..].iter().zip(&paintings) {
            let got: f64 = cell.parse().unwrap();
            // Indices hold single-precision values.
            assert!((got - dist(*mva, *pva)).abs() < 1e-6, "{line}");
        }
    }
    let exported = ok(&["export", "index", "--index", p(&out.join("haydn.afix"))]);
    assert_eq!(exported, text);
}

#[test]
fn recommend_matches_brute_force_and_maps_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (m, pp, music, paintings) = toy(dir.path());
    let out = dir.path().join("idx");
    ok(&[
        "build-index",
        "--engine",
        "haydn",
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
        "--out",
        p(&out),
    ]);
    let index = out.join("haydn.afix");

    // A single rating ranks by that row alone.
    let list = json_of(&[
        "recommend",
        "--index",
        p(&index),
        "--rate",
        "m0=5",
        "--n",
        "3",
    ]);
    let got: Vec<&str> = list["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["painting_id"].as_str().unwrap())
        .collect();
    let mut want: Vec<(f64, &str)> = paintings
        .iter()
        .map(|(id, va)| (dist(music[0].1, *va), *id))
        .collect();
    want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    assert_eq!(got, want.iter().map(|w| w.1).collect::<Vec<_>>());

    // Ratings 1 and 4: weights 0.2 and 0.8.
    let ratings = dir.path().join("ratings.json");
    std::fs::write(
        &ratings,
        json!([{"item_id": "m0", "rating": 1}, {"item_id": "m1", "rating": 4}]).to_string(),
    )
    .unwrap();
    let list = json_of(&[
        "recommend",
        "--index",
        p(&index),
        "--ratings",
        p(&ratings),
        "--n",
        "3",
    ]);
    let entries = list["entries"].as_array().unwrap();
    let mut want: Vec<(f64, &str)> = paintings
        .iter()
        .map(|(id, va)| {
            (
                0.2 * dist(music[0].1, *va) + 0.8 * dist(music[1].1, *va),
                *id,
            )
        })
        .collect();
    want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    for (e, w) in entries.iter().zip(&want) {
        assert_eq!(e["painting_id"], w.1);
        assert!((e["aggregate_distance"].as_f64().unwrap() - w.0).abs() < 1e-6);
    }

    let out = run(&["recommend", "--index", p(&index), "--rate", "ghost=3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost"));
    let out = run(&["recommend", "--index", p(&index), "--rate", "m0=9"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("nope.afix");
    let out = run(&["recommend", "--index", p(&missing), "--rate", "m0=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.afix"));

    // Curation: with the catalogs, only curated paintings remain (p1 only).
    let list = json_of(&[
        "recommend",
        "--index",
        p(&index),
        "--rate",
        "m0=5",
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
    ]);
    assert_eq!(list["entries"].as_array().unwrap().len(), 1);
    assert_eq!(list["entries"][0]["painting_id"], "p1");
    assert_eq!(list["truncated"], true);
}

#[test]
fn missing_catalog_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let ghost = dir.path().join("ghost.jsonl");
    let out = run(&[
        "preprocess",
        "--music",
        p(&ghost),
        "--paintings",
        p(&ghost),
        "--out",
        p(&dir.path().join("b")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost.jsonl"));
    let out = run(&["preprocess", "--music", p(&ghost)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_is_deterministic_and_checks_integrity() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("cat");
    let s = json_of(&[
        "synth",
        "--seed",
        "3",
        "--music-count",
        "40",
        "--painting-count",
        "44",
        "--music-dim",
        "6",
        "--painting-dim",
        "7",
        "--out",
        p(&cat),
    ]);
    assert_eq!(s["painting_count"], 44);
    let (m, pp) = (cat.join("music.jsonl"), cat.join("paintings.jsonl"));
    let bundle = |name: &str| {
        let out = dir.path().join(name);
        json_of(&[
            "preprocess",
            "--music",
            p(&m),
            "--paintings",
            p(&pp),
            "--seed",
            "7",
            "--epochs",
            "4",
            "--patience",
            "2",
            "--batch-size",
            "16",
            "--dims",
            "12,8",
            "--projection-dims",
            "8,4",
            "--out",
            p(&out),
        ])
    };
    let a = bundle("a");
    let b = bundle("b");
    assert_eq!(a["files"], b["files"]);
    assert_eq!(a["files"].as_object().unwrap().len(), 13);

    let idx = dir.path().join("idx");
    let built = json_of(&[
        "build-index",
        "--engine",
        "all",
        "--bundle",
        p(&dir.path().join("a")),
        "--out",
        p(&idx),
    ]);
    assert_eq!(built.as_array().unwrap().len(), 4);
    for engine in ["mozart", "haydn", "salieri", "visual"] {
        assert!(idx.join(format!("{engine}.afix")).exists());
    }
    let again = json_of(&[
        "build-index",
        "--engine",
        "mozart,salieri",
        "--salieri-metric",
        "euclidean",
        "--bundle",
        p(&dir.path().join("b")),
        "--out",
        p(&dir.path().join("idx2")),
    ]);
    assert_eq!(again[0]["sha256"], built[0]["sha256"]);

    // Overlap of an index with itself, and a probe on the V-A index.
    let overlap = json_of(&[
        "evaluate",
        "overlap",
        "--a",
        p(&idx.join("haydn.afix")),
        "--b",
        p(&idx.join("haydn.afix")),
        "--rate",
        "m0000=4",
        "--rate",
        "m0001=2",
        "--k",
        "5",
    ]);
    assert_eq!(overlap["overlap_at_k"], 1.0);
    assert_eq!(overlap["rank_correlation"], 1.0);
    let probe = json_of(&[
        "evaluate",
        "probe",
        "--index",
        p(&idx.join("haydn.afix")),
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
        "--null-seeds",
        "5",
    ]);
    assert!(
        probe["probe"]["top1_accuracy"].as_f64().unwrap() > 0.9,
        "{probe}"
    );
    assert_eq!(probe["null"]["seeds"], 5);
    let text = ok(&[
        "evaluate",
        "probe",
        "--index",
        p(&idx.join("haydn.afix")),
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
    ]);
    assert!(text.starts_with("engine"), "{text}");

    // Tampering with any bundle file is an integrity failure.
    let victim = dir.path().join("a").join("mozart_music.afmx");
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&victim, bytes).unwrap();
    let out = run(&[
        "build-index",
        "--engine",
        "mozart",
        "--bundle",
        p(&dir.path().join("a")),
        "--out",
        p(&idx),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth_ids(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let cat = dir.join("cat");
    ok(&[
        "synth",
        "--seed",
        "2",
        "--music-count",
        "60",
        "--painting-count",
        "60",
        "--music-dim",
        "4",
        "--painting-dim",
        "4",
        "--out",
        p(&cat),
    ]);
    let (m, pp) = (cat.join("music.jsonl"), cat.join("paintings.jsonl"));
    let idx = dir.join("idx");
    ok(&[
        "build-index",
        "--engine",
        "haydn",
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
        "--out",
        p(&idx),
    ]);
    (m, pp, idx)
}

fn spawn_serve(args: &[&str]) -> (Child, String) {
    let mut child = Command::new(BIN)
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .expect("listen line")
        .to_string();
    (child, url)
}

#[test]
fn serve_refuses_to_start_without_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let (m, pp, idx) = synth_ids(dir.path());
    let out = run(&[
        "serve",
        "--listen",
        "127.0.0.1:0",
        "--index-dir",
        p(&idx),
        "--engine",
        "haydn,mozart",
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
        "--log",
        p(&dir.path().join("events.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mozart.afix"));
}

#[test]
fn serve_and_session_commands_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (m, pp, idx) = synth_ids(dir.path());
    let log = dir.path().join("events.jsonl");
    let (mut child, url) = spawn_serve(&[
        "serve",
        "--listen",
        "127.0.0.1:0",
        "--index-dir",
        p(&idx),
        "--engine",
        "haydn",
        "--music",
        p(&m),
        "--paintings",
        p(&pp),
        "--log",
        p(&log),
    ]);

    let health = json_of(&["session", "--url", &url, "health"]);
    assert_eq!(health["status"], "ok");
    let created = json_of(&[
        "session", "--url", &url, "create", "--engine", "haydn", "--seed", "5",
    ]);
    let id = created["session_id"].as_str().unwrap().to_string();
    let items = json_of(&["session", "--url", &url, "items", &id]);
    assert_eq!(items["items"].as_array().unwrap().len(), 11);

    let out = run(&["session", "--url", &url, "recommend", &id]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["session", "--url", &url, "show", "missing"]);
    assert_eq!(out.status.code(), Some(3));

    // The client cannot see which item is the attention check, so rate all 1.
    let mut rate = vec!["session", "--url", &url, "rate", &id];
    let specs: Vec<String> = items["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| format!("{}=1", i["item_id"].as_str().unwrap()))
        .collect();
    for s in &specs {
        rate.push("--rate");
        rate.push(s);
    }
    let view = json_of(&rate);
    assert_eq!(view["attention"], "passed");
    let recs = json_of(&["session", "--url", &url, "recommend", &id, "--n", "3"]);
    let first = recs["paintings"][0]["painting_id"]
        .as_str()
        .unwrap()
        .to_string();
    json_of(&[
        "session",
        "--url",
        &url,
        "reflect",
        &id,
        "--painting",
        &first,
        "--text",
        "a calm shore",
    ]);
    json_of(&[
        "session",
        "--url",
        &url,
        "mood",
        &id,
        "--phase",
        "post",
        "--category",
        "positive",
        "--panas",
        "1,2,3,4,5,1,2,3,4,5",
    ]);
    let out = run(&[
        "session",
        "--url",
        &url,
        "feedback",
        &id,
        "--score",
        "accuracy=4",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diversity"));
    let done = json_of(&[
        "session",
        "--url",
        &url,
        "feedback",
        &id,
        "--score",
        "accuracy=4",
        "--score",
        "diversity=3",
        "--score",
        "novelty=3",
        "--score",
        "serendipity=2",
        "--score",
        "immersion=5",
        "--score",
        "engagement=4",
    ]);
    assert_eq!(done["state"], "completed");

    let status = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let exit = child.wait().unwrap();
    assert!(exit.success(), "{exit:?}");

    let exported = ok(&["export", "sessions", "--log", p(&log)]);
    let sessions: Vec<Value> = exported
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(sessions.len(), 1);
    assert_eq!(sessions[0]["state"], "completed");
    assert_eq!(sessions[0]["mood_post"]["category"], "positive");
}

#[test]
fn unreachable_service_fails_cleanly() {
    let out = run(&["session", "--url", "http://127.0.0.1:9", "health"]);
    assert_eq!(out.status.code(), Some(1));
}
