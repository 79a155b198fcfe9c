use std::fmt::Write as _;

use setcomp_core::dataset::annotation::{annotation_stats, read_annotations};
use setcomp_core::dataset::ScoreStats;
use setcomp_core::report::to_canonical_json;

use crate::config::ConfigFile;
use crate::error::Result;
use crate::StatsArgs;

fn row(out: &mut String, label: &str, s: &ScoreStats) {
    writeln!(
        out,
        "{label:<11} {:>5} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>5.2} {:>5.2}",
        s.n, s.mean, s.median, s.q1, s.q3, s.min, s.max
    )
    .unwrap();
}

pub fn run(a: &StatsArgs, cfg: &ConfigFile) -> Result<()> {
    cfg.check_keys(&["threads", "json"])?;
    let records = read_annotations(&a.annotations)?;
    let summary = annotation_stats(&records)?;
    if cfg.switch(a.json, "json")? {
        print!("{}", to_canonical_json(&summary)?);
        return Ok(());
    }
    let mut out = format!(
        "{:<11} {:>5} {:>6} {:>6} {:>6} {:>6} {:>5} {:>5}\n",
        "operator", "n", "mean", "median", "q1", "q3", "min", "max"
    );
    for (op, s) in &summary.per_operator {
        row(&mut out, op.name(), s);
    }
    row(&mut out, "all", &summary.overall);
    print!("{out}");
    Ok(())
}
