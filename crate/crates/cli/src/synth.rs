use std::time::Duration;

use setcomp_core::dataset::fusion::{
    ChatCompletionProvider, FusionProvider, HttpFusionProvider, SubprocessFusionProvider,
};
use setcomp_core::dataset::{
    read_corpus, synthesize, write_samples, FilterMode, Fuser, Op, RetryPolicy,
    DEFAULT_FILTER_THRESHOLD,
};
use setcomp_core::embedstore::ModelStore;

use crate::config::ConfigFile;
use crate::error::{CliError, Result};
use crate::{write_atomic, SynthArgs, ADAPTER_URL_ENV, CHAT_API_KEY_ENV};

const KEYS: &[&str] = &[
    "threads",
    "provider-url",
    "provider-cmd",
    "chat-url",
    "chat-model",
    "filter-store",
    "no-filter",
    "threshold",
    "max-calls",
    "retries",
    "timeout-secs",
    "min-interval-ms",
];

enum ProviderChoice {
    Url(String),
    Cmd(String),
    Chat(String),
}

/// Flags, then the environment, then the config file; at most one kind per
/// layer.
fn choose_provider(a: &SynthArgs, cfg: &ConfigFile) -> Result<ProviderChoice> {
    fn one(
        url: Option<String>,
        cmd: Option<String>,
        chat: Option<String>,
        layer: &str,
    ) -> Result<Option<ProviderChoice>> {
        let set = [url.is_some(), cmd.is_some(), chat.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if set > 1 {
            return Err(CliError::Config(format!(
                "{layer}: give only one of provider-url, provider-cmd, chat-url"
            )));
        }
        Ok(url
            .map(ProviderChoice::Url)
            .or(cmd.map(ProviderChoice::Cmd))
            .or(chat.map(ProviderChoice::Chat)))
    }
    if let Some(p) = one(
        a.provider_url.clone(),
        a.provider_cmd.clone(),
        a.chat_url.clone(),
        "flags",
    )? {
        return Ok(p);
    }
    if let Ok(url) = std::env::var(ADAPTER_URL_ENV) {
        if !url.is_empty() {
            return Ok(ProviderChoice::Url(url));
        }
    }
    let raw = |k: &str| cfg.raw(k).map(str::to_string);
    one(raw("provider-url"), raw("provider-cmd"), raw("chat-url"), "config file")?.ok_or_else(|| {
        CliError::Config(format!(
            "no fusion provider: pass --provider-url, --provider-cmd or --chat-url, or set {ADAPTER_URL_ENV}"
        ))
    })
}

pub fn run(a: &SynthArgs, cfg: &ConfigFile) -> Result<()> {
    cfg.check_keys(KEYS)?;
    let no_filter = cfg.switch(a.no_filter, "no-filter")?;
    let filter_store = cfg.layer(a.filter_store.clone(), "filter-store")?;
    let threshold = cfg
        .layer(a.threshold, "threshold")?
        .unwrap_or(DEFAULT_FILTER_THRESHOLD);
    let retries = cfg
        .layer(a.retries, "retries")?
        .unwrap_or(RetryPolicy::default().max_attempts);
    let timeout = Duration::from_secs(cfg.layer(a.timeout_secs, "timeout-secs")?.unwrap_or(60));
    let interval = Duration::from_millis(
        cfg.layer(a.min_interval_ms, "min-interval-ms")?
            .unwrap_or(0),
    );
    let max_calls = cfg.layer(a.max_calls, "max-calls")?;
    if retries == 0 {
        return Err(CliError::Config("--retries must be at least 1".into()));
    }
    if !(threshold.is_finite()) {
        return Err(CliError::Config("--threshold must be finite".into()));
    }
    let filter_store = match (no_filter, filter_store) {
        (true, Some(_)) => {
            return Err(CliError::Config(
                "--no-filter and --filter-store are exclusive".into(),
            ))
        }
        (false, None) => {
            return Err(CliError::Config(
                "the difference filter needs --filter-store, or pass --no-filter".into(),
            ))
        }
        (true, None) => None,
        (false, Some(p)) => Some(ModelStore::import_file(&p)?),
    };
    let provider: Box<dyn FusionProvider> = match choose_provider(a, cfg)? {
        ProviderChoice::Url(u) => Box::new(HttpFusionProvider::new(&u, timeout)),
        ProviderChoice::Cmd(c) => Box::new(SubprocessFusionProvider::spawn(&c)?),
        ProviderChoice::Chat(u) => {
            let model = cfg
                .layer(a.chat_model.clone(), "chat-model")?
                .ok_or_else(|| CliError::Config("--chat-url needs --chat-model".into()))?;
            let key = std::env::var(CHAT_API_KEY_ENV).ok();
            Box::new(ChatCompletionProvider::new(&u, &model, key, timeout))
        }
    };
    let docs = read_corpus(&a.corpus)?;
    let fuser = Fuser::new(provider)
        .with_retry(RetryPolicy {
            max_attempts: retries,
            ..RetryPolicy::default()
        })
        .with_max_calls(max_calls)
        .with_min_interval(interval);
    let mode = match &filter_store {
        Some(s) => FilterMode::Cosine {
            source: s,
            threshold,
        },
        None => FilterMode::Disabled,
    };
    let out = synthesize(&docs, &fuser, &mode)?;

    let mut buf = Vec::new();
    write_samples(&out.samples, &mut buf)?;
    write_atomic(&a.out, &buf)?;
    println!("documents  {}", docs.len());
    println!(
        "triples    {} ({} skipped)",
        out.n_triples,
        out.skipped.len()
    );
    for op in [Op::Overlap, Op::Difference, Op::Union] {
        println!("{:<10} {}", op.name(), out.count(op));
    }
    println!("samples    {} -> {}", out.samples.len(), a.out.display());
    log::info!("{} fusion calls", fuser.calls());
    Ok(())
}
