//! Markdown tables merged from sweep output directories: one headline row
//! per sweep, then a per-emotion context profile for each.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use erc_core::stats::StatReport;
use erc_core::sweep::{EmotionProfiles, SweepRecord, SweepResult};
use erc_core::{Error, Result};
use serde::de::DeserializeOwned;

use crate::args::ReportArgs;

struct LoadedSweep {
    name: String,
    record: SweepRecord,
    sweep: SweepResult,
    profiles: EmotionProfiles,
}

fn load<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<T> {
    let path = dir.join(file);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn load_sweep(dir: &Path) -> Result<LoadedSweep> {
    let record: SweepRecord = load(dir, "config.json")?;
    let sweep: SweepResult = load(dir, "sweep.json")?;
    if sweep.config_hash != record.config_hash {
        return Err(Error::Format(format!(
            "{}: sweep.json hash {} does not match config.json hash {}",
            dir.display(),
            sweep.config_hash,
            record.config_hash
        )));
    }
    Ok(LoadedSweep {
        name: dir.file_name().map_or_else(
            || dir.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        ),
        profiles: load(dir, "saturation.json")?,
        record,
        sweep,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn test_line(label: &str, r: Option<&StatReport>) -> String {
    match r {
        Some(r) => format!(
            "{label}: {} = {:.3}, p = {:.3e}\n",
            r.test, r.statistic, r.p_value
        ),
        None => format!("{label}: not computed (needs at least 2 seeds)\n"),
    }
}

fn render(sweeps: &[LoadedSweep]) -> String {
    let mut md = String::from("## Best context length per configuration\n\n");
    md.push_str("| Sweep | Taxonomy | Encoding | Pooling | Fusion | Seeds | K (val) | Val WF1 | Test WF1 | ± std | WF1 @ K=0 | Gain |\n");
    md.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for s in sweeps {
        let base = &s.record.config.base;
        let head = &s.sweep.headline;
        let at = |k: usize| s.sweep.per_k.iter().find(|p| p.k == k);
        let std = at(head.k)
            .and_then(|p| p.summary.as_ref())
            .map_or_else(|| "n/a".to_owned(), |sm| pct(sm.std));
        let k0 = at(0).map_or(f64::NAN, |p| p.mean_weighted_f1);
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {:+.2} |",
            s.name,
            base.taxonomy,
            base.encoding,
            base.pooling,
            base.fusion,
            s.sweep.seeds.len(),
            head.k,
            pct(head.mean_val_weighted_f1),
            pct(head.mean_test_weighted_f1),
            std,
            pct(k0),
            100.0 * (head.mean_test_weighted_f1 - k0)
        );
    }
    for s in sweeps {
        let o = &s.profiles.overall;
        let _ = write!(
            md,
            "\n## Context improvement by emotion: {}\n\nOverall: K* = {}, gain {:+.2}, saturation K = {}{}\n\n",
            s.name,
            o.k_star,
            100.0 * o.delta,
            o.saturation_k,
            if o.flat { " (no gain over K = 0)" } else { "" }
        );
        md.push_str("| Emotion | F1 @ K=0 | K* | F1 @ K* | Gain | Saturation K |\n|---|---|---|---|---|---|\n");
        let mut rows: Vec<_> = s.profiles.rows.iter().collect();
        rows.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        for r in rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {:+.2} | {} |",
                r.emotion,
                pct(r.f1_k0),
                r.best_k,
                pct(r.best_f1),
                100.0 * r.delta,
                r.saturation_k
            );
        }
        md.push('\n');
        md.push_str(&test_line(
            "Saturation K across emotions",
            s.profiles.kruskal_saturation.as_ref(),
        ));
        md.push('\n');
        md.push_str(&test_line(
            "Gain across emotions",
            s.profiles.anova_delta.as_ref(),
        ));
        for n in &s.profiles.notes {
            let _ = writeln!(md, "\nNote: {n}");
        }
    }
    md
}

pub fn run(a: &ReportArgs) -> Result<()> {
    let sweeps = a
        .sweeps
        .iter()
        .map(|d| load_sweep(d))
        .collect::<Result<Vec<_>>>()?;
    let md = render(&sweeps);
    match &a.out {
        Some(p) => fs::write(p, md)?,
        None => print!("{md}"),
    }
    Ok(())
}
