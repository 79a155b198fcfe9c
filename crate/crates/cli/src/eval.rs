use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use setcomp_core::criteria::{
    eval_c1, eval_c3, eval_c4, eval_projection_criterion, norm_ratio_profile, ConditionTally,
    CriteriaConfig, EmbeddedSample, ProjectionReport, TallyCells, TargetRole,
};
use setcomp_core::dataset::{read_samples, resolve_samples, CompositionSample, Op};
use setcomp_core::embedstore::ModelStore;
use setcomp_core::geometry::MeasureKind;
use setcomp_core::report::{
    histogram_csv, render_tally_table, summary_report, tally_json, to_canonical_json,
    HistogramSource, SummaryEntry, TallyRow,
};

use crate::config::{parse_list, parse_range, ConfigFile};
use crate::error::{at, CliError, Result};
use crate::{write_atomic, EvalArgs};

const KEYS: &[&str] = &[
    "threads",
    "criteria",
    "measures",
    "epsilon-count",
    "epsilon-range",
    "bins",
    "middle-tolerance",
    "theta-d",
    "theta-u1",
    "theta-u2",
    "norm-band",
    "skip-missing",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Criterion {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl Criterion {
    const ALL: [Criterion; 6] = [
        Criterion::C1,
        Criterion::C2,
        Criterion::C3,
        Criterion::C4,
        Criterion::C5,
        Criterion::C6,
    ];

    fn name(self) -> &'static str {
        ["c1", "c2", "c3", "c4", "c5", "c6"][self as usize]
    }

    fn op(self) -> Op {
        match self {
            Criterion::C1 | Criterion::C2 => Op::Overlap,
            Criterion::C3 | Criterion::C4 | Criterion::C5 => Op::Difference,
            Criterion::C6 => Op::Union,
        }
    }

    fn role(self) -> Option<TargetRole> {
        match self {
            Criterion::C2 => Some(TargetRole::Overlap),
            Criterion::C5 => Some(TargetRole::Difference),
            Criterion::C6 => Some(TargetRole::Union),
            _ => None,
        }
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown criterion `{s}` (expected c1..c6)"))
    }
}

/// Everything that shapes the numbers; echoed into each summary entry.
struct Settings {
    criteria: Vec<Criterion>,
    measures: Vec<MeasureKind>,
    criteria_cfg: CriteriaConfig,
    skip_missing: bool,
}

impl Settings {
    fn resolve(a: &EvalArgs, cfg: &ConfigFile) -> Result<Self> {
        cfg.check_keys(KEYS)?;
        let bad = |e: String| CliError::Config(e);
        let criteria: BTreeSet<Criterion> = match cfg.layer(a.criteria.clone(), "criteria")? {
            Some(s) => parse_list(&s).map_err(bad)?.into_iter().collect(),
            None => Criterion::ALL.into_iter().collect(),
        };
        let measures: Vec<MeasureKind> = match cfg.layer(a.measures.clone(), "measures")? {
            Some(s) => {
                let mut seen = BTreeSet::new();
                parse_list::<MeasureKind>(&s)
                    .map_err(bad)?
                    .into_iter()
                    .filter(|m| seen.insert(m.name()))
                    .collect()
            }
            None => MeasureKind::ALL.to_vec(),
        };
        if criteria.is_empty() {
            return Err(CliError::Config("--criteria is empty".into()));
        }
        let needs_measure = criteria.iter().any(|c| c.role().is_none());
        if needs_measure && measures.is_empty() {
            return Err(CliError::Config("--measures is empty".into()));
        }
        let d = CriteriaConfig::default();
        let epsilon_range = cfg
            .layer(a.epsilon_range.clone(), "epsilon-range")?
            .map(|s| parse_range(&s))
            .transpose()
            .map_err(bad)?;
        let criteria_cfg = CriteriaConfig {
            epsilon_count: cfg
                .layer(a.epsilon_count, "epsilon-count")?
                .unwrap_or(d.epsilon_count),
            epsilon_range,
            histogram_bins: cfg.layer(a.bins, "bins")?.unwrap_or(d.histogram_bins),
            middle_tolerance: cfg
                .layer(a.middle_tolerance, "middle-tolerance")?
                .unwrap_or(d.middle_tolerance),
            theta_d: cfg.layer(a.theta_d, "theta-d")?.unwrap_or(d.theta_d),
            theta_u1: cfg.layer(a.theta_u1, "theta-u1")?.unwrap_or(d.theta_u1),
            theta_u2: cfg.layer(a.theta_u2, "theta-u2")?.unwrap_or(d.theta_u2),
            norm_ratio_band: cfg
                .layer(a.norm_band, "norm-band")?
                .unwrap_or(d.norm_ratio_band),
            ..d
        };
        criteria_cfg.validate()?;
        Ok(Self {
            criteria: criteria.into_iter().collect(),
            measures,
            criteria_cfg,
            skip_missing: cfg.switch(a.skip_missing, "skip-missing")?,
        })
    }

    fn snapshot(&self) -> Value {
        json!({
            "criteria": self.criteria.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "measures": self.measures,
            "criteria_config": self.criteria_cfg,
            "skip_missing": self.skip_missing,
        })
    }

    fn ops(&self) -> BTreeSet<Op> {
        self.criteria.iter().map(|c| c.op()).collect()
    }
}

/// Samples of the operators in use, split by operator.
fn by_op(samples: &[CompositionSample], ops: &BTreeSet<Op>) -> Vec<(Op, Vec<CompositionSample>)> {
    ops.iter()
        .map(|&op| (op, samples.iter().filter(|s| s.op == op).cloned().collect()))
        .collect()
}

fn file_stem(model: &str) -> String {
    model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn projection_payload(r: &ProjectionReport) -> Value {
    let h = &r.profile.histogram;
    json!({
        "summary": r.summary,
        "histogram": {
            "lo": h.lo,
            "hi": h.hi,
            "counts": h.counts,
            "underflow": h.underflow,
            "overflow": h.overflow,
        },
        "skipped_samples": r.profile.skipped,
    })
}

fn tally_csv_row(out: &mut String, model: &str, m: MeasureKind, t: &ConditionTally) {
    write!(out, "{model},{m}").unwrap();
    for p in t.percentages() {
        write!(out, ",{p}").unwrap();
    }
    writeln!(out, ",{},{}", t.n_samples, t.n_grid_points()).unwrap();
}

/// One model's worth of results.
struct ModelRun<'s> {
    store: &'s ModelStore,
    groups: Vec<(Op, Vec<EmbeddedSample<'s>>)>,
}

impl<'s> ModelRun<'s> {
    fn samples(&self, op: Op) -> &[EmbeddedSample<'s>] {
        self.groups
            .iter()
            .find(|(o, _)| *o == op)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }
}

/// Output files keyed by name, plus the text echoed to stdout.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    echo: String,
}

pub fn run(a: &EvalArgs, cfg: &ConfigFile) -> Result<()> {
    let settings = Settings::resolve(a, cfg)?;
    let ops = settings.ops();
    let sample_bytes = fs::read(&a.samples).map_err(at(&a.samples))?;
    let corpus_digest = hex_digest(&sample_bytes);
    let samples = read_samples(sample_bytes.as_slice())?;
    let groups = by_op(&samples, &ops);

    let stores: Vec<ModelStore> = a
        .store
        .iter()
        .map(|p| {
            ModelStore::import_file(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_>>()?;
    let mut ids = BTreeSet::new();
    if let Some(dup) = stores.iter().find(|s| !ids.insert(s.model_id())) {
        return Err(CliError::Config(format!(
            "two stores share model id `{}`",
            dup.model_id()
        )));
    }

    let mut runs = Vec::with_capacity(stores.len());
    let mut missing_total = 0usize;
    for store in &stores {
        let mut model_groups = Vec::new();
        let mut missing = BTreeSet::new();
        for (op, group) in &groups {
            let res = resolve_samples(group, store);
            missing.extend(res.missing);
            model_groups.push((*op, res.embedded));
        }
        if !missing.is_empty() {
            missing_total += missing.len();
            let verb = if settings.skip_missing {
                "skipping samples with"
            } else {
                ""
            };
            log::warn!(
                "model {}: {verb} {} sentences without embeddings",
                store.model_id(),
                missing.len()
            );
            if !settings.skip_missing {
                for s in missing.iter().take(20) {
                    eprintln!("  {}: missing {s:?}", store.model_id());
                }
            }
        }
        runs.push(ModelRun {
            store,
            groups: model_groups,
        });
    }
    if missing_total > 0 && !settings.skip_missing {
        return Err(CliError::Missing(format!(
            "{missing_total} sentence/model pairs unresolved; rerun `embed` or pass --skip-missing"
        )));
    }

    let outputs = evaluate(&runs, &settings, &corpus_digest)?;
    fs::create_dir_all(&a.out).map_err(at(&a.out))?;
    for (name, bytes) in &outputs.files {
        let path: PathBuf = a.out.join(name);
        write_atomic(&path, bytes)?;
    }
    print!("{}", outputs.echo);
    println!("wrote {} files to {}", outputs.files.len(), a.out.display());
    Ok(())
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn evaluate(runs: &[ModelRun<'_>], settings: &Settings, digest: &str) -> Result<Outputs> {
    let cfg = &settings.criteria_cfg;
    let config = settings.snapshot();
    let entry =
        |model: &str, measure: Option<MeasureKind>, c: Criterion, payload: Value| SummaryEntry {
            model_id: model.to_string(),
            measure,
            criterion: c.name().to_string(),
            payload,
            config: config.clone(),
            corpus_digest: digest.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
    let mut entries = Vec::new();
    let mut out = Outputs::default();
    let mut tables = String::new();

    for &c in &settings.criteria {
        let Some(role) = c.role() else {
            let measures: Vec<MeasureKind> = settings
                .measures
                .iter()
                .copied()
                .filter(|m| {
                    c != Criterion::C4 || matches!(m, MeasureKind::Cosine | MeasureKind::Ned)
                })
                .collect();
            if measures.len() < settings.measures.len() {
                log::warn!("c4 is defined for cosine and ned only; other measures skipped");
            }
            let mut tallies = Vec::new();
            for run in runs {
                let s = run.samples(c.op());
                if s.is_empty() {
                    log::warn!(
                        "{}: no {} samples for model {}",
                        c.name(),
                        c.op(),
                        run.store.model_id()
                    );
                    continue;
                }
                for &m in &measures {
                    let t = match c {
                        Criterion::C1 => eval_c1(s, m, cfg)?,
                        Criterion::C3 => eval_c3(s, m, cfg)?,
                        _ => eval_c4(s, m, cfg)?,
                    };
                    entries.push(entry(run.store.model_id(), Some(m), c, tally_json(&t)));
                    tallies.push((run.store.model_id(), m, t));
                }
            }
            if tallies.is_empty() {
                continue;
            }
            let rows: Vec<TallyRow<'_>> = tallies
                .iter()
                .map(|(model, measure, tally)| TallyRow {
                    model,
                    measure: *measure,
                    tally,
                })
                .collect();
            writeln!(
                tables,
                "{} ({}): percent of (sample, ε) pairs",
                c.name(),
                c.op()
            )
            .unwrap();
            tables.push_str(&render_tally_table(&rows)?);
            tables.push('\n');
            let names = tallies[0].2.cell_names();
            let mut csv = format!(
                "model,measure,{},n_samples,n_grid_points\n",
                names.join(",")
            );
            for (model, m, t) in &tallies {
                debug_assert!(matches!(
                    (&t.cells, names.len()),
                    (TallyCells::Pair { .. }, 4) | (TallyCells::Single { .. }, 2)
                ));
                tally_csv_row(&mut csv, model, *m, t);
            }
            out.files
                .push((format!("{}.csv", c.name()), csv.into_bytes()));
            continue;
        };

        writeln!(
            tables,
            "{} ({}): projection onto the input plane",
            c.name(),
            c.op()
        )
        .unwrap();
        for run in runs {
            let model = run.store.model_id();
            let s = run.samples(c.op());
            let r = eval_projection_criterion(s, role, cfg)?;
            let stem = format!("{}_{}", c.name(), file_stem(model));
            let src = HistogramSource::Angles(&r);
            out.files.push((
                format!("{stem}.csv"),
                histogram_csv(&r.profile.histogram).into_bytes(),
            ));
            out.files.push((
                format!("{stem}.json"),
                to_canonical_json(&src.sidecar())?.into_bytes(),
            ));
            let mut payload = projection_payload(&r);
            let pct = |f: Option<f64>| f.map_or("n/a".to_string(), |x| format!("{:.2}", 100.0 * x));
            let s_ = &r.summary;
            write!(
                tables,
                "  {model}: n={} skipped={} middle={} beyond_a={} beyond_b={} opposite={} degenerate={}",
                s_.n_samples,
                s_.n_skipped,
                pct(s_.middle_fraction),
                pct(s_.beyond_a_fraction),
                pct(s_.beyond_b_fraction),
                pct(s_.opposite_fraction),
                pct(s_.degenerate_fraction),
            )
            .unwrap();
            if c == Criterion::C5 {
                write!(tables, " near_a={}", pct(s_.near_a_fraction)).unwrap();
            }
            if c == Criterion::C6 && !s.is_empty() {
                let p = norm_ratio_profile(s, cfg)?;
                let nsrc = HistogramSource::NormRatios(&p);
                out.files.push((
                    format!("{stem}_norm_ratio.csv"),
                    histogram_csv(&p.histogram).into_bytes(),
                ));
                out.files.push((
                    format!("{stem}_norm_ratio.json"),
                    to_canonical_json(&nsrc.sidecar())?.into_bytes(),
                ));
                write!(tables, " norm_ratio_median={:.4}", p.median).unwrap();
                payload["norm_ratio"] = json!({
                    "median": p.median,
                    "within_band": p.within_band,
                    "within_band_fraction": p.within_band_fraction,
                    "band": p.band,
                    "histogram": {
                        "lo": p.histogram.lo,
                        "hi": p.histogram.hi,
                        "counts": p.histogram.counts,
                        "underflow": p.histogram.underflow,
                        "overflow": p.histogram.overflow,
                    },
                });
            }
            tables.push('\n');
            entries.push(entry(model, None, c, payload));
        }
        tables.push('\n');
    }

    if entries.is_empty() {
        return Err(CliError::Config(
            "no criterion could be evaluated on these samples".into(),
        ));
    }
    out.files.push((
        "summary.json".into(),
        summary_report(&entries)?.into_bytes(),
    ));
    out.files
        .push(("tables.txt".into(), tables.clone().into_bytes()));
    out.echo = tables;
    Ok(out)
}
