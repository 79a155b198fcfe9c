use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::time::Duration;

use setcomp_core::dataset::read_samples;
use setcomp_core::embedstore::{ModelStore, SentenceKey};
use setcomp_core::geometry::Embedding;

use crate::adapter::{embed_all, Encoder, HttpEncoder, SubprocessEncoder};
use crate::config::ConfigFile;
use crate::error::{at, CliError, Result};
use crate::{write_atomic, EmbedArgs, ADAPTER_URL_ENV};

const KEYS: &[&str] = &[
    "threads",
    "adapter-url",
    "adapter-cmd",
    "model",
    "batch-size",
    "timeout-secs",
];

/// Unique sentences of a samples JSONL or a one-sentence-per-line file, in
/// first-seen order.
fn read_sentences(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(at(path))?;
    let is_samples = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    let all: Vec<String> = if is_samples {
        read_samples(text.as_bytes())?
            .into_iter()
            .flat_map(|s| [s.a, s.b, s.target])
            .collect()
    } else {
        text.lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect()
    };
    let mut seen = HashSet::new();
    Ok(all
        .into_iter()
        .filter(|s| seen.insert(SentenceKey::of(s)))
        .collect())
}

fn from_import(path: &Path, wanted: Option<&[String]>) -> Result<ModelStore> {
    let mut store = ModelStore::import_file(path)?;
    if let Some(wanted) = wanted {
        let missing: Vec<&String> = wanted.iter().filter(|s| !store.contains(s)).collect();
        if !missing.is_empty() {
            for s in missing.iter().take(20) {
                eprintln!("  missing: {s:?}");
            }
            return Err(CliError::Missing(format!(
                "{} of {} sentences are not in {}",
                missing.len(),
                wanted.len(),
                path.display()
            )));
        }
        let keep: HashSet<SentenceKey> = wanted.iter().map(|s| SentenceKey::of(s)).collect();
        store.retain(|k| keep.contains(k));
    }
    Ok(store)
}

fn from_adapter(
    encoder: &mut dyn Encoder,
    model: &str,
    sentences: &[String],
    batch: usize,
) -> Result<ModelStore> {
    if sentences.is_empty() {
        return Err(CliError::Config("no sentences to embed".into()));
    }
    let (dim, vectors) = embed_all(encoder, model, sentences, batch)?;
    let mut store = ModelStore::new(model, dim).map_err(|e| CliError::Provider(e.to_string()))?;
    for (s, v) in sentences.iter().zip(vectors) {
        let e = Embedding::from_f32(&v)
            .map_err(|e| CliError::Provider(format!("vector for {s:?}: {e}")))?;
        store.insert_text(s, e)?;
    }
    Ok(store)
}

pub fn run(a: &EmbedArgs, cfg: &ConfigFile) -> Result<()> {
    cfg.check_keys(KEYS)?;
    let batch = cfg.layer(a.batch_size, "batch-size")?.unwrap_or(64);
    if batch == 0 {
        return Err(CliError::Config("--batch-size must be positive".into()));
    }
    let timeout = Duration::from_secs(cfg.layer(a.timeout_secs, "timeout-secs")?.unwrap_or(300));
    let sentences = a.input.as_deref().map(read_sentences).transpose()?;

    let store = if let Some(import) = &a.import {
        if a.adapter_url.is_some() || a.adapter_cmd.is_some() {
            return Err(CliError::Config(
                "--import excludes --adapter-url and --adapter-cmd".into(),
            ));
        }
        from_import(import, sentences.as_deref())?
    } else {
        let sentences = sentences.ok_or_else(|| {
            CliError::Config("--input is required unless --import is given".into())
        })?;
        let model = cfg
            .layer(a.model.clone(), "model")?
            .ok_or_else(|| CliError::Config("--model is required with an adapter".into()))?;
        if a.adapter_url.is_some() && a.adapter_cmd.is_some() {
            return Err(CliError::Config(
                "give only one of --adapter-url and --adapter-cmd".into(),
            ));
        }
        let env_url = std::env::var(ADAPTER_URL_ENV)
            .ok()
            .filter(|u| !u.is_empty());
        let mut encoder: Box<dyn Encoder> = match (&a.adapter_cmd, a.adapter_url.as_ref().or(env_url.as_ref())) {
            (Some(c), _) => Box::new(SubprocessEncoder::spawn(c)?),
            (None, Some(u)) => Box::new(HttpEncoder::new(u, timeout)),
            (None, None) => match (cfg.raw("adapter-cmd"), cfg.raw("adapter-url")) {
                (Some(c), None) => Box::new(SubprocessEncoder::spawn(c)?),
                (None, Some(u)) => Box::new(HttpEncoder::new(u, timeout)),
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "config file sets both adapter-url and adapter-cmd".into(),
                    ))
                }
                (None, None) => {
                    return Err(CliError::Config(format!(
                        "no encoder: pass --adapter-url, --adapter-cmd or --import, or set {ADAPTER_URL_ENV}"
                    )))
                }
            },
        };
        from_adapter(encoder.as_mut(), &model, &sentences, batch)?
    };

    let bytes = if a.out.extension().is_some_and(|e| e == "jsonl") {
        let mut buf = Vec::new();
        store.write_jsonl_to(&mut buf)?;
        buf
    } else {
        store.to_bytes()
    };
    write_atomic(&a.out, &bytes)?;
    println!(
        "{} vectors (dim {}, model {}) -> {}",
        store.len(),
        store.dim(),
        store.model_id(),
        a.out.display()
    );
    Ok(())
}
