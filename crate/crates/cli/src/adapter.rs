//! Clients for the encoder adapter.
//!
//! Both transports exchange `{"model", "sentences"}` requests for
//! `{"dim", "vectors"}` replies; vectors come back in request order.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct EmbedRequest<'a> {
    pub model: &'a str,
    pub sentences: &'a [String],
}

#[derive(Debug, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

pub trait Encoder {
    fn embed(&mut self, req: &EmbedRequest<'_>) -> Result<EmbedResponse>;
}

pub struct HttpEncoder {
    url: String,
    agent: ureq::Agent,
}

impl HttpEncoder {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self {
            url: format!("{}/embed", base_url.trim_end_matches('/')),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Encoder for HttpEncoder {
    fn embed(&mut self, req: &EmbedRequest<'_>) -> Result<EmbedResponse> {
        let resp = self
            .agent
            .post(&self.url)
            .send_json(req)
            .map_err(|e| match e {
                ureq::Error::Status(code, r) => CliError::Provider(format!(
                    "{}: status {code}: {}",
                    self.url,
                    r.into_string().unwrap_or_default()
                )),
                ureq::Error::Transport(t) => CliError::Provider(format!("{}: {t}", self.url)),
            })?;
        resp.into_json()
            .map_err(|e| CliError::Provider(format!("{}: malformed reply: {e}", self.url)))
    }
}

/// A child process reading one request per line on stdin and answering one
/// line per request on stdout.
pub struct SubprocessEncoder {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessEncoder {
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| CliError::Provider(format!("spawn `{command}`: {e}")))?;
        Ok(Self {
            stdin: child.stdin.take().expect("piped stdin"),
            stdout: BufReader::new(child.stdout.take().expect("piped stdout")),
            _child: child,
        })
    }
}

impl Encoder for SubprocessEncoder {
    fn embed(&mut self, req: &EmbedRequest<'_>) -> Result<EmbedResponse> {
        let gone = |e: std::io::Error| CliError::Provider(format!("adapter subprocess: {e}"));
        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        self.stdin.write_all(line.as_bytes()).map_err(gone)?;
        self.stdin.flush().map_err(gone)?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(gone)? == 0 {
            return Err(CliError::Provider(
                "adapter subprocess closed its output".into(),
            ));
        }
        serde_json::from_str(&reply)
            .map_err(|e| CliError::Provider(format!("adapter subprocess: malformed reply: {e}")))
    }
}

/// Embeds `sentences` in batches, checking that every batch agrees on `dim`.
pub fn embed_all(
    encoder: &mut dyn Encoder,
    model: &str,
    sentences: &[String],
    batch_size: usize,
) -> Result<(usize, Vec<Vec<f32>>)> {
    let mut dim = None;
    let mut out = Vec::with_capacity(sentences.len());
    for (i, batch) in sentences.chunks(batch_size.max(1)).enumerate() {
        let resp = encoder.embed(&EmbedRequest {
            model,
            sentences: batch,
        })?;
        if resp.vectors.len() != batch.len() {
            return Err(CliError::Provider(format!(
                "batch {i}: sent {} sentences, got {} vectors",
                batch.len(),
                resp.vectors.len()
            )));
        }
        match dim {
            None => dim = Some(resp.dim),
            Some(d) if d != resp.dim => {
                return Err(CliError::Provider(format!(
                    "batch {i}: dim {} differs from earlier batches ({d})",
                    resp.dim
                )))
            }
            Some(_) => {}
        }
        if let Some(v) = resp.vectors.iter().find(|v| v.len() != resp.dim) {
            return Err(CliError::Provider(format!(
                "batch {i}: vector of length {} in a dim-{} reply",
                v.len(),
                resp.dim
            )));
        }
        out.extend(resp.vectors);
        log::info!("embedded {}/{} sentences", out.len(), sentences.len());
    }
    Ok((dim.unwrap_or(0), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replies with a vector of `dims[call]` ones per sentence.
    struct Scripted {
        dims: Vec<usize>,
        calls: usize,
    }

    impl Encoder for Scripted {
        fn embed(&mut self, req: &EmbedRequest<'_>) -> Result<EmbedResponse> {
            let dim = self.dims[self.calls.min(self.dims.len() - 1)];
            self.calls += 1;
            Ok(EmbedResponse {
                dim,
                vectors: vec![vec![1.0; dim]; req.sentences.len()],
            })
        }
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn batches_in_order() {
        let mut e = Scripted {
            dims: vec![4],
            calls: 0,
        };
        let (dim, vs) = embed_all(&mut e, "m", &texts(5), 2).unwrap();
        assert_eq!((dim, vs.len(), e.calls), (4, 5, 3));
    }

    #[test]
    fn dim_change_between_batches_fails() {
        let mut e = Scripted {
            dims: vec![4, 8],
            calls: 0,
        };
        assert!(matches!(
            embed_all(&mut e, "m", &texts(5), 2),
            Err(CliError::Provider(_))
        ));
    }

    #[test]
    fn subprocess_round_trip() {
        let script = r#"while read -r line; do echo '{"dim":2,"vectors":[[1.0,2.0]]}'; done"#;
        let mut e = SubprocessEncoder::spawn(script).unwrap();
        let (dim, vs) = embed_all(&mut e, "m", &texts(3), 1).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(vs, vec![vec![1.0, 2.0]; 3]);
    }
}
