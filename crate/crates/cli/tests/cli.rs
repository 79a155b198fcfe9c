mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use serde_json::{json, Value};

use setcomp_core::embedstore::{import_file, ModelStore};
use setcomp_core::geometry::Embedding;

use common::*;

/// A bound-then-released local port: connections are refused.
fn dead_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    format!("http://{}", l.local_addr().unwrap())
}

fn sample(id: &str, op: &str, a: &str, b: &str, target: &str) -> Value {
    json!({
        "id": id, "op": op, "a": a, "b": b, "target": target,
        "ordered": op == "difference",
        "provenance": {"doc_id": "t", "triple_index": 0, "pattern_id": 1},
        "filter_sim": null,
    })
}

fn write_samples(path: &Path, samples: &[Value]) {
    let body: String = samples.iter().map(|s| format!("{s}\n")).collect();
    fs::write(path, body).unwrap();
}

fn write_store(path: &Path, model: &str, vectors: &[(&str, &[f64])]) {
    let mut s = ModelStore::new(model, vectors[0].1.len()).unwrap();
    for (t, v) in vectors {
        s.insert_text(t, Embedding::new(v.to_vec()).unwrap())
            .unwrap();
    }
    s.export_file(path).unwrap();
}

fn summary(out: &Path) -> Value {
    serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap()
}

/// Two overlap samples: the first meets both margins at zero, the second
/// only the B-side one.
fn two_sample_fixture(d: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let samples = d.join("s.jsonl");
    write_samples(
        &samples,
        &[
            sample("x", "overlap", "x a", "x b", "x o"),
            sample("y", "overlap", "y a", "y b", "y o"),
        ],
    );
    let store = d.join("m.scev");
    write_store(
        &store,
        "m",
        &[
            ("x a", &[1.0, 0.0]),
            ("x b", &[0.0, 1.0]),
            ("x o", &[1.0, 1.0]),
            ("y a", &[1.0, 0.0]),
            ("y b", &[1.0, 1.0]),
            ("y o", &[0.2, 1.0]),
        ],
    );
    (samples, store)
}

#[test]
fn unknown_flag_is_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = setcomp(&[
        "eval",
        "--samples",
        "x",
        "--store",
        "y",
        "--out",
        p(&out),
        "--frobnicate",
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, "epsilon-cont = 3\n").unwrap();
    let (samples, store) = two_sample_fixture(dir.path());
    let out = dir.path().join("out");
    let o = setcomp(&[
        "eval",
        "--config",
        p(&cfg),
        "--samples",
        p(&samples),
        "--store",
        p(&store),
        "--criteria",
        "c1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn unreachable_provider_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let out = dir.path().join("s.jsonl");
    let o = setcomp(&[
        "synth",
        "--corpus",
        p(&corpus),
        "--out",
        p(&out),
        "--provider-url",
        &dead_url(),
        "--no-filter",
        "--retries",
        "1",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn synth_without_filter_decision_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let o = setcomp(&[
        "synth",
        "--corpus",
        p(&corpus),
        "--out",
        p(&dir.path().join("s.jsonl")),
        "--provider-url",
        &dead_url(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_via_http_adapter_without_filter() {
    let server = MockServer::adapter(4);
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let out = dir.path().join("s.jsonl");
    let o = setcomp(&[
        "synth",
        "--corpus",
        p(&corpus),
        "--out",
        p(&out),
        "--provider-url",
        &server.url,
        "--no-filter",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let samples = setcomp_core::dataset::read_samples_file(&out).unwrap();
    // 4 + 3 triples, 9 samples each with every difference pattern kept
    assert_eq!(samples.len(), 63);
    assert!(samples.iter().all(|s| s.filter_sim.is_none()));
    let fused = &samples[0].a;
    assert_eq!(fused, "The harbor froze while fishermen pulled their");
}

#[test]
fn collinear_inputs_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.jsonl");
    write_samples(
        &samples,
        &[
            sample("x", "overlap", "a", "b", "o"),
            sample("y", "overlap", "b", "a", "o"),
        ],
    );
    let store = dir.path().join("m.scev");
    write_store(
        &store,
        "m",
        &[
            ("a", &[1.0, 2.0, 0.0]),
            ("b", &[-2.0, -4.0, 0.0]),
            ("o", &[0.0, 1.0, 1.0]),
        ],
    );
    let out = dir.path().join("out");
    let o = setcomp(&[
        "eval",
        "--samples",
        p(&samples),
        "--store",
        p(&store),
        "--criteria",
        "c2",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let payload = &s["entries"][0]["payload"];
    assert_eq!(payload["skipped_samples"], json!([0, 1]));
    assert_eq!(payload["summary"]["n_skipped"], 2);
    assert_eq!(payload["summary"]["middle_fraction"], Value::Null);
}

#[test]
fn fixed_zero_margin_splits_two_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, store) = two_sample_fixture(dir.path());
    let out = dir.path().join("out");
    let o = setcomp(&[
        "eval",
        "--samples",
        p(&samples),
        "--store",
        p(&store),
        "--criteria",
        "c1",
        "--measures",
        "cosine",
        "--epsilon-count",
        "1",
        "--epsilon-range",
        "0,0",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let e = &s["entries"][0];
    assert_eq!(e["criterion"], "c1");
    assert_eq!(
        e["payload"]["percent"],
        json!({"tt": 50.0, "tf": 0.0, "ft": 50.0, "ff": 0.0})
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = stdout
        .lines()
        .find(|l| l.starts_with("m "))
        .unwrap()
        .split_whitespace()
        .collect();
    assert_eq!(row, ["m", "cosine", "50.00", "0.00", "50.00", "0.00"]);
}

#[test]
fn config_file_fills_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, store) = two_sample_fixture(dir.path());
    let cfg = dir.path().join("c.conf");
    fs::write(
        &cfg,
        "# defaults\nepsilon_count = 3\nmeasures = \"cosine\"\n",
    )
    .unwrap();
    let run = |extra: &[&str], out: &Path| {
        let mut args = vec![
            "eval",
            "--config",
            p(&cfg),
            "--samples",
            p(&samples),
            "--store",
            p(&store),
            "--criteria",
            "c1",
            "--out",
            p(out),
        ];
        args.extend_from_slice(extra);
        let o = setcomp(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        summary(out)
    };
    let s = run(&[], &dir.path().join("a"));
    assert_eq!(s["entries"].as_array().unwrap().len(), 1);
    assert_eq!(s["entries"][0]["payload"]["n_grid_points"], 9);
    let s = run(&["--epsilon-count", "2"], &dir.path().join("b"));
    assert_eq!(s["entries"][0]["payload"]["n_grid_points"], 4);
}

#[test]
fn missing_embeddings_exit_5_unless_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, _) = two_sample_fixture(dir.path());
    let store = dir.path().join("partial.scev");
    write_store(
        &store,
        "m",
        &[
            ("x a", &[1.0, 0.0]),
            ("x b", &[0.0, 1.0]),
            ("x o", &[1.0, 1.0]),
        ],
    );
    let out = dir.path().join("out");
    let args = [
        "eval",
        "--samples",
        p(&samples),
        "--store",
        p(&store),
        "--criteria",
        "c1",
        "--measures",
        "cosine",
        "--out",
        p(&out),
    ];
    let o = setcomp(&args);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("summary.json").exists());

    let mut skip = args.to_vec();
    skip.push("--skip-missing");
    let o = setcomp(&skip);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&out)["entries"][0]["payload"]["n_samples"], 1);
}

#[test]
fn import_with_missing_sentence_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, _) = two_sample_fixture(dir.path());
    let fixture = dir.path().join("f.jsonl");
    fixture_store("enc", 8, ["x a", "x b", "x o", "y a", "y b"])
        .write_jsonl(&fixture)
        .unwrap();
    let out = dir.path().join("e.scev");
    let o = setcomp(&[
        "embed",
        "--input",
        p(&samples),
        "--import",
        p(&fixture),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("y o"));
    assert!(!out.exists());
}

#[test]
fn embed_via_http_adapter_deduplicates() {
    let server = MockServer::adapter(6);
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.jsonl");
    write_samples(
        &samples,
        &[
            sample("1", "overlap", "p", "q", "r"),
            sample("2", "union", "q", "r", "s"),
            sample("3", "difference", "s", "t", "p"),
        ],
    );
    let out = dir.path().join("e.scev");
    let o = setcomp(&[
        "embed",
        "--input",
        p(&samples),
        "--adapter-url",
        &server.url,
        "--model",
        "mock-6",
        "--batch-size",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let store = import_file(&out).unwrap();
    assert_eq!(
        (store.len(), store.dim(), store.model_id()),
        (5, 6, "mock-6")
    );
    let want = Embedding::from_f32(&mock_vector("t", 6)).unwrap();
    assert_eq!(store.lookup("t"), Some(&want));
}

#[test]
fn adapter_url_precedence_flag_env_config() {
    let server = MockServer::adapter(3);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "one\ntwo\n").unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, format!("adapter-url = {}\nmodel = m\n", dead_url())).unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join("e.scev");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_setcomp"));
        cmd.args([
            "embed",
            "--config",
            p(&cfg),
            "--input",
            p(&input),
            "--out",
            p(&out),
        ]);
        if let Some(f) = flag {
            cmd.args(["--adapter-url", f]);
        }
        match env {
            Some(e) => cmd.env("SETCOMP_ADAPTER_URL", e),
            None => cmd.env_remove("SETCOMP_ADAPTER_URL"),
        };
        code(&cmd.output().unwrap())
    };
    assert_eq!(run(None, None), 3, "config url is dead");
    assert_eq!(run(Some(&server.url), None), 0, "env beats config");
    assert_eq!(
        run(Some(&dead_url()), Some(&server.url)),
        0,
        "flag beats env"
    );
}

#[test]
fn adapter_dimension_change_exits_3() {
    let server = MockServer::start(Arc::new(|_: &str, body: &Value| {
        let n = body["sentences"].as_array().unwrap().len();
        let dim = if body["sentences"][0] == "one" { 3 } else { 4 };
        (
            200,
            json!({"dim": dim, "vectors": vec![vec![0.5f32; dim]; n]}),
        )
    }));
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "one\ntwo\n").unwrap();
    let out = dir.path().join("e.scev");
    let o = setcomp(&[
        "embed",
        "--input",
        p(&input),
        "--adapter-url",
        &server.url,
        "--model",
        "m",
        "--batch-size",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn embed_via_subprocess_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "one\ntwo\nthree\n").unwrap();
    let script = dir.path().join("enc.sh");
    // answers each request line with a fixed two-vector batch
    fs::write(
        &script,
        "while read -r line; do echo '{\"dim\":2,\"vectors\":[[1,0],[0,1]]}'; done\n",
    )
    .unwrap();
    let out = dir.path().join("e.jsonl");
    let o = setcomp(&[
        "embed",
        "--input",
        p(&input),
        "--adapter-cmd",
        &format!("sh {}", p(&script)),
        "--model",
        "sub",
        "--batch-size",
        "2",
        "--out",
        p(&out),
    ]);
    // the last batch holds one sentence but the script returns two vectors
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(&input, "one\ntwo\n").unwrap();
    let o = setcomp(&[
        "embed",
        "--input",
        p(&input),
        "--adapter-cmd",
        &format!("sh {}", p(&script)),
        "--model",
        "sub",
        "--batch-size",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let store = import_file(&out).unwrap();
    assert_eq!(store.lookup("two").unwrap().as_slice(), &[0.0, 1.0]);
}

#[test]
fn annotation_score_out_of_range_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    fs::write(
        &path,
        "{\"sample_id\":\"o1\",\"operator\":\"overlap\",\"scores\":[3,5]}\n",
    )
    .unwrap();
    let o = setcomp(&["annotate-stats", "--annotations", p(&path)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn annotation_csv_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    fs::write(
        &path,
        "sample_id,operator,scores\no1,overlap,3;4\nd1,difference,2 2 3\nu1,union,4;4\n",
    )
    .unwrap();
    let o = setcomp(&["annotate-stats", "--annotations", p(&path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        text.lines()
            .any(|l| l.starts_with("union") && l.contains("4.00")),
        "{text}"
    );
    assert!(text.lines().any(|l| l.starts_with("all")), "{text}");
}

#[test]
fn zero_threads_is_usage_error() {
    let o = setcomp(&[
        "--threads",
        "0",
        "annotate-stats",
        "--annotations",
        "nope.jsonl",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_input_file_is_io_error() {
    let o = setcomp(&["annotate-stats", "--annotations", "/nonexistent/a.jsonl"]);
    assert_eq!(code(&o), 4);
}
