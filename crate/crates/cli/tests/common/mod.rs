#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use setcomp_core::embedstore::ModelStore;
use setcomp_core::geometry::Embedding;

pub type Handler = dyn Fn(&str, &Value) -> (u16, Value) + Send + Sync;

/// Minimal HTTP/1.1 JSON server on an ephemeral port; one thread per
/// connection, `Connection: close` on every reply.
pub struct MockServer {
    pub url: String,
}

impl MockServer {
    pub fn start(handler: Arc<Handler>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let h = Arc::clone(&handler);
                thread::spawn(move || serve(stream, &*h));
            }
        });
        Self { url }
    }

    /// Answers `/fuse` with [`mock_fusion`] and `/embed` with [`mock_vector`]s.
    pub fn adapter(dim: usize) -> Self {
        Self::start(Arc::new(move |path: &str, body: &Value| match path {
            "/fuse" => {
                let (a, b) = (body["a"].as_str().unwrap(), body["b"].as_str().unwrap());
                (200, json!({ "text": mock_fusion(a, b) }))
            }
            "/embed" => {
                let vs: Vec<Vec<f32>> = body["sentences"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|s| mock_vector(s.as_str().unwrap(), dim))
                    .collect();
                (200, json!({ "dim": dim, "vectors": vs }))
            }
            _ => (404, json!({ "error": "not found" })),
        }))
    }
}

fn serve(mut stream: TcpStream, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let (status, reply) = handler(&path, &body);
    let reply = reply.to_string();
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
}

/// Deterministic stand-in for a paraphraser.
pub fn mock_fusion(a: &str, b: &str) -> String {
    let head = |s: &str| s.split_whitespace().take(3).collect::<Vec<_>>().join(" ");
    format!(
        "{} while {}",
        head(a).trim_end_matches('.'),
        head(b).to_lowercase()
    )
}

/// Vector seeded by the sentence's SHA-256.
pub fn mock_vector(text: &str, dim: usize) -> Vec<f32> {
    let digest = Sha256::digest(text.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

pub fn fixture_store<'a>(
    model: &str,
    dim: usize,
    texts: impl IntoIterator<Item = &'a str>,
) -> ModelStore {
    let mut s = ModelStore::new(model, dim).unwrap();
    for t in texts {
        s.insert_text(t, Embedding::from_f32(&mock_vector(t, dim)).unwrap())
            .unwrap();
    }
    s
}

pub fn setcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setcomp"))
        .args(args)
        .env_remove("SETCOMP_ADAPTER_URL")
        .output()
        .expect("spawn setcomp")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two short documents, one sentence per line.
pub fn write_corpus(dir: &Path) -> PathBuf {
    let corpus = dir.join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    std::fs::write(
        corpus.join("a.txt"),
        "The harbor froze early that winter.\nFishermen pulled their boats onto the ice.\n\
         Children skated between the hulls.\nA storm arrived in February.\n\
         The ice cracked along the pier.\nBy March the boats were afloat again.\n",
    )
    .unwrap();
    std::fs::write(
        corpus.join("b.txt"),
        "The library opened a new wing.\nIt holds maps from three centuries.\n\
         Scholars travel far to see them.\nSome maps show islands that never existed.\n\
         The curator keeps a list of these phantoms.\n",
    )
    .unwrap();
    corpus
}

/// Sorted `(file name, bytes)` of a directory.
pub fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}
