//! K sweeps, saturation analysis, per-emotion context profiles and the
//! ablation grids, plus their CSV / JSON / SVG outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Splits;
use crate::error::{Error, Result};
use crate::stats::{
    anova_oneway, bonferroni, friedman_test, kruskal_wallis, paired_t_test, StatReport,
};
use crate::trainer::{
    hash_json, summarize, train_with_features, write_json, Features, RunResult, Summary,
    TrainConfig, TOOL_VERSION,
};

pub const DEFAULT_GRID: [usize; 16] = [
    0, 1, 2, 3, 5, 10, 20, 30, 40, 60, 90, 100, 110, 130, 140, 200,
];

/// Default grid capped at `k_max`, with `k_max` itself appended.
pub fn default_grid(k_max: usize) -> Vec<usize> {
    let mut g: Vec<usize> = DEFAULT_GRID
        .iter()
        .copied()
        .filter(|&k| k <= k_max)
        .collect();
    if g.last() != Some(&k_max) {
        g.push(k_max);
    }
    g
}

/// `default`, `full`, a comma list (`0,1,5`) or an inclusive range (`0..10`).
pub fn parse_grid(s: &str, k_max: usize) -> Result<Vec<usize>> {
    let grid = match s {
        "default" => default_grid(k_max),
        "full" => (0..=k_max).collect(),
        _ => parse_list(s)?,
    };
    validate_grid(&grid, k_max)?;
    Ok(grid)
}

/// Comma list or inclusive range of seeds, e.g. `42..51`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = parse_list(s)?.into_iter().map(|v| v as u64).collect();
    if seeds.is_empty() {
        return Err(Error::Config("empty seed list".into()));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(Error::Config(format!("duplicate seeds in '{s}'")));
    }
    Ok(seeds)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    let bad = |e: std::num::ParseIntError| Error::Config(format!("bad integer list '{s}': {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (
            a.trim().parse::<usize>().map_err(bad)?,
            b.trim().parse::<usize>().map_err(bad)?,
        );
        if b < a {
            return Err(Error::Config(format!("empty range '{s}'")));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(bad))
        .collect()
}

pub fn validate_grid(grid: &[usize], k_max: usize) -> Result<()> {
    if grid.first() != Some(&0) {
        return Err(Error::Config("K grid must start at 0".into()));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        let what = if w[0] == w[1] {
            "duplicate"
        } else {
            "decreasing"
        };
        return Err(Error::Config(format!(
            "K grid has {what} entries {} and {}",
            w[0], w[1]
        )));
    }
    if let Some(&k) = grid.iter().find(|&&k| k > k_max) {
        return Err(Error::Config(format!(
            "K = {k} exceeds the longest dialogue ({k_max} turns)"
        )));
    }
    Ok(())
}

/// On-disk result cache keyed by run config hash and a data fingerprint.
#[derive(Debug, Clone)]
pub struct RunCache {
    pub dir: PathBuf,
    pub fingerprint: String,
}

impl RunCache {
    pub const ENV: &'static str = "ERC_LAB_CACHE";

    fn path(&self, config: &TrainConfig) -> PathBuf {
        self.dir
            .join(format!("{}-{}.json", config.hash(), self.fingerprint))
    }

    pub fn load(&self, config: &TrainConfig) -> Option<RunResult> {
        let text = fs::read_to_string(self.path(config)).ok()?;
        match serde_json::from_str(&text) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!(
                    "ignoring unreadable cache entry {}: {e}",
                    self.path(config).display()
                );
                None
            }
        }
    }

    pub fn store(&self, config: &TrainConfig, result: &RunResult) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path(config);
        let tmp = path.with_extension("json.tmp");
        write_json(&tmp, result)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Runs `configs` on a pool of `jobs` workers (all cores when `None`),
/// returning results in input order.
pub fn run_many(
    configs: &[(TrainConfig, &Features)],
    splits: &Splits,
    cache: Option<&RunCache>,
    jobs: Option<usize>,
) -> Result<Vec<RunResult>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|(config, features)| {
                if let Some(hit) = cache.and_then(|c| c.load(config)) {
                    info!("cache hit for K={} seed={}", config.k, config.seed);
                    return Ok(hit);
                }
                let result = train_with_features(config, splits, features)?.result;
                if let Some(c) = cache {
                    c.store(config, &result)?;
                }
                Ok(result)
            })
            .collect()
    })
}

/// Everything that determines a sweep's outputs, hashed into the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: TrainConfig,
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn run_config(&self, k: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            k,
            seed,
            ..self.base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub mean_weighted_f1: f64,
    /// `None` with a single seed.
    pub summary: Option<Summary>,
    pub per_class_mean_f1: BTreeMap<String, f64>,
    pub mean_val_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    /// Chosen on mean validation WF1 (ties go to the smaller K).
    pub k: usize,
    pub mean_val_weighted_f1: f64,
    pub mean_test_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub classes: Vec<String>,
    /// Ordered by K, then by seed in the order given.
    pub runs: Vec<RunResult>,
    pub per_k: Vec<KSummary>,
    pub headline: Headline,
}

impl SweepResult {
    pub fn curve(&self) -> BTreeMap<usize, f64> {
        self.per_k
            .iter()
            .map(|s| (s.k, s.mean_weighted_f1))
            .collect()
    }

    pub fn class_curve(&self, class: &str) -> BTreeMap<usize, f64> {
        self.per_k
            .iter()
            .map(|s| (s.k, s.per_class_mean_f1[class]))
            .collect()
    }

    fn run(&self, k: usize, seed: u64) -> &RunResult {
        self.runs
            .iter()
            .find(|r| r.k == k && r.seed == seed)
            .expect("every (K, seed) cell present")
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn k_sweep(
    config: &SweepConfig,
    splits: &Splits,
    features: &Features,
    cache: Option<&RunCache>,
    jobs: Option<usize>,
) -> Result<SweepResult> {
    let k_max = [&splits.train, &splits.val, &splits.test]
        .iter()
        .map(|c| c.k_max())
        .max()
        .unwrap_or(0);
    validate_grid(&config.grid, k_max)?;
    if config.seeds.is_empty() {
        return Err(Error::Config("no seeds".into()));
    }
    let cells: Vec<(TrainConfig, &Features)> = config
        .grid
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .map(|(k, s)| (config.run_config(k, s), features))
        .collect();
    let runs = run_many(&cells, splits, cache, jobs)?;
    let classes: Vec<String> = config
        .base
        .taxonomy
        .classes()
        .iter()
        .map(|e| e.as_str().to_owned())
        .collect();
    let mut per_k = Vec::with_capacity(config.grid.len());
    for (i, &k) in config.grid.iter().enumerate() {
        let cell = &runs[i * config.seeds.len()..(i + 1) * config.seeds.len()];
        let wf1: Vec<f64> = cell.iter().map(|r| r.weighted_f1).collect();
        let summary = if wf1.len() >= 2 {
            Some(summarize(&wf1)?)
        } else {
            None
        };
        let per_class_mean_f1 = classes
            .iter()
            .map(|c| {
                (
                    c.clone(),
                    mean(&cell.iter().map(|r| r.per_class_f1[c]).collect::<Vec<_>>()),
                )
            })
            .collect();
        per_k.push(KSummary {
            k,
            mean_weighted_f1: summary.map_or(wf1[0], |s| s.mean),
            summary,
            per_class_mean_f1,
            mean_val_weighted_f1: mean(
                &cell
                    .iter()
                    .map(RunResult::best_val_weighted_f1)
                    .collect::<Vec<_>>(),
            ),
        });
    }
    let best = per_k
        .iter()
        .fold(None::<&KSummary>, |acc, s| match acc {
            Some(a) if a.mean_val_weighted_f1 >= s.mean_val_weighted_f1 => Some(a),
            _ => Some(s),
        })
        .expect("non-empty grid");
    let headline = Headline {
        k: best.k,
        mean_val_weighted_f1: best.mean_val_weighted_f1,
        mean_test_weighted_f1: best.mean_weighted_f1,
    };
    Ok(SweepResult {
        config_hash: config.hash(),
        grid: config.grid.clone(),
        seeds: config.seeds.clone(),
        classes,
        runs,
        per_k,
        headline,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub baseline: f64,
    pub k_star: usize,
    pub best: f64,
    pub delta: f64,
    pub saturation_k: usize,
    /// No improvement over K = 0 anywhere on the curve.
    pub flat: bool,
}

/// `K*` = argmax (smallest on ties), `delta = F(K*) - F(0)`, and the
/// smallest K reaching 90% of `delta`. The threshold is tested on the
/// normalised gain `(F(K) - F(0)) / delta`, so an affine rescaling of the
/// curve cannot move it.
pub fn saturation_point(curve: &BTreeMap<usize, f64>) -> Result<Saturation> {
    let &baseline = curve.get(&0).ok_or(Error::MissingBaseline)?;
    if curve.len() < 2 {
        return Err(Error::Domain("saturation needs at least two points".into()));
    }
    let (k_star, best) = curve.iter().fold(
        (0, baseline),
        |(bk, bv), (&k, &v)| if v > bv { (k, v) } else { (bk, bv) },
    );
    let delta = best - baseline;
    if delta.is_nan() || delta <= 0.0 {
        return Ok(Saturation {
            baseline,
            k_star,
            best,
            delta,
            saturation_k: 0,
            flat: true,
        });
    }
    let saturation_k = curve
        .iter()
        .find(|(_, &v)| (v - baseline) / delta >= 0.9 - 1e-12)
        .map(|(&k, _)| k)
        .expect("K* itself reaches the threshold");
    Ok(Saturation {
        baseline,
        k_star,
        best,
        delta,
        saturation_k,
        flat: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub emotion: String,
    pub f1_k0: f64,
    pub best_k: usize,
    pub best_f1: f64,
    pub delta: f64,
    pub saturation_k: usize,
    pub flat: bool,
    pub per_seed_saturation_k: Vec<usize>,
    pub per_seed_delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionProfiles {
    pub overall: Saturation,
    pub rows: Vec<ProfileRow>,
    /// Saturation K across emotions (per-seed values); `None` with one seed.
    pub kruskal_saturation: Option<StatReport>,
    /// Improvement magnitudes across emotions (per-seed deltas).
    pub anova_delta: Option<StatReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

/// Headline rows come from seed-mean curves; the cross-emotion tests use
/// per-seed curves.
pub fn emotion_profiles(sweep: &SweepResult) -> Result<EmotionProfiles> {
    let overall = saturation_point(&sweep.curve())?;
    let mut rows = Vec::new();
    for class in &sweep.classes {
        let s = saturation_point(&sweep.class_curve(class))?;
        let mut per_seed_saturation_k = Vec::new();
        let mut per_seed_delta = Vec::new();
        for &seed in &sweep.seeds {
            let curve: BTreeMap<usize, f64> = sweep
                .grid
                .iter()
                .map(|&k| (k, sweep.run(k, seed).per_class_f1[class]))
                .collect();
            let ps = saturation_point(&curve)?;
            per_seed_saturation_k.push(ps.saturation_k);
            per_seed_delta.push(ps.delta);
        }
        rows.push(ProfileRow {
            emotion: class.clone(),
            f1_k0: s.baseline,
            best_k: s.k_star,
            best_f1: s.best,
            delta: s.delta,
            saturation_k: s.saturation_k,
            flat: s.flat,
            per_seed_saturation_k,
            per_seed_delta,
        });
    }
    let mut notes = Vec::new();
    let (kruskal_saturation, anova_delta) = if sweep.seeds.len() < 2 {
        notes.push("cross-emotion tests need at least 2 seeds".to_owned());
        (None, None)
    } else {
        let sat: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.per_seed_saturation_k.iter().map(|&k| k as f64).collect())
            .collect();
        let deltas: Vec<Vec<f64>> = rows.iter().map(|r| r.per_seed_delta.clone()).collect();
        (Some(kruskal_wallis(&sat)?), Some(anova_oneway(&deltas)?))
    };
    Ok(EmotionProfiles {
        overall,
        rows,
        kruskal_saturation,
        anova_delta,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationDimension {
    Pooling,
    LayerMode,
    Fusion,
    Encoding,
}

impl std::str::FromStr for AblationDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooling" => Ok(Self::Pooling),
            "layer_mode" => Ok(Self::LayerMode),
            "fusion" => Ok(Self::Fusion),
            "encoding" => Ok(Self::Encoding),
            other => Err(format!(
                "unknown ablation dimension '{other}' (pooling, layer_mode, fusion, encoding)"
            )),
        }
    }
}

pub struct Variant<'a> {
    pub name: String,
    pub config: TrainConfig,
    pub features: &'a Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub config_hash: String,
    /// Test WF1 per seed, in seed order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub variant: String,
    pub baseline: String,
    /// Mean of `variant - baseline` over seeds.
    pub delta: f64,
    pub report: StatReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub dimension: AblationDimension,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
    /// Paired t for two variants, Friedman for three or more.
    pub omnibus: StatReport,
    /// Each variant against the first, paired t with Bonferroni over the
    /// number of comparisons (only for three or more variants).
    pub pairwise: Vec<PairwiseRow>,
}

/// The first variant is the baseline. Per-seed test WF1 values are paired by
/// seed across variants.
pub fn ablation_grid(
    dimension: AblationDimension,
    variants: &[Variant<'_>],
    seeds: &[u64],
    splits: &Splits,
    cache: Option<&RunCache>,
    jobs: Option<usize>,
) -> Result<AblationReport> {
    if variants.len() < 2 {
        return Err(Error::Config(
            "an ablation needs at least two variants".into(),
        ));
    }
    if seeds.len() < 2 {
        return Err(Error::InsufficientRuns(seeds.len()));
    }
    let cells: Vec<(TrainConfig, &Features)> = variants
        .iter()
        .flat_map(|v| {
            seeds.iter().map(move |&seed| {
                (
                    TrainConfig {
                        seed,
                        ..v.config.clone()
                    },
                    v.features,
                )
            })
        })
        .collect();
    let runs = run_many(&cells, splits, cache, jobs)?;
    let mut summaries = Vec::with_capacity(variants.len());
    for (i, v) in variants.iter().enumerate() {
        let per_seed: Vec<f64> = runs[i * seeds.len()..(i + 1) * seeds.len()]
            .iter()
            .map(|r| r.weighted_f1)
            .collect();
        let summary = summarize(&per_seed)?;
        summaries.push(VariantSummary {
            name: v.name.clone(),
            config_hash: v.config.hash(),
            mean: summary.mean,
            per_seed,
            summary: Some(summary),
        });
    }
    let base = &summaries[0];
    let (omnibus, pairwise) = if summaries.len() == 2 {
        (
            paired_t_test(&summaries[1].per_seed, &base.per_seed)?,
            Vec::new(),
        )
    } else {
        let matrix: Vec<Vec<f64>> = (0..seeds.len())
            .map(|s| summaries.iter().map(|v| v.per_seed[s]).collect())
            .collect();
        let m = summaries.len() - 1;
        let mut rows = Vec::with_capacity(m);
        for v in &summaries[1..] {
            let raw = paired_t_test(&v.per_seed, &base.per_seed)?;
            let p = bonferroni(&[raw.p_value], Some(m))?[0];
            rows.push(PairwiseRow {
                variant: v.name.clone(),
                baseline: base.name.clone(),
                delta: mean(
                    &v.per_seed
                        .iter()
                        .zip(&base.per_seed)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                ),
                report: StatReport {
                    p_value: p,
                    correction: crate::stats::Correction::Bonferroni { m },
                    ..raw
                },
            });
        }
        (friedman_test(&matrix)?, rows)
    };
    Ok(AblationReport {
        dimension,
        seeds: seeds.to_vec(),
        variants: summaries,
        omnibus,
        pairwise,
    })
}

/// One `#` metadata line shared by every CSV the tool writes.
pub fn csv_header_line(config_hash: &str, extra: &[(&str, &str)]) -> String {
    let mut line = format!("# config_hash={config_hash} tool_version={TOOL_VERSION}");
    for (k, v) in extra {
        let _ = write!(line, " {k}={v}");
    }
    line.push('\n');
    line
}

pub fn sweep_csv(sweep: &SweepResult, data_fingerprint: &str) -> String {
    let mut out = csv_header_line(&sweep.config_hash, &[("data", data_fingerprint)]);
    out.push_str("k,seed,weighted_f1");
    for c in &sweep.classes {
        let _ = write!(out, ",f1_{c}");
    }
    out.push_str(",best_epoch,epochs_run\n");
    for r in &sweep.runs {
        let _ = write!(out, "{},{},{}", r.k, r.seed, r.weighted_f1);
        for c in &sweep.classes {
            let _ = write!(out, ",{}", r.per_class_f1[c]);
        }
        let _ = writeln!(out, ",{},{}", r.best_epoch, r.epochs_run);
    }
    out
}

pub fn ablation_csv(report: &AblationReport, config_hash: &str, data_fingerprint: &str) -> String {
    let mut out = csv_header_line(config_hash, &[("data", data_fingerprint)]);
    out.push_str("variant,config_hash,seed,weighted_f1\n");
    for v in &report.variants {
        for (seed, wf1) in report.seeds.iter().zip(&v.per_seed) {
            let _ = writeln!(out, "{},{},{seed},{wf1}", v.name, v.config_hash);
        }
    }
    out
}

const PALETTE: [&str; 7] = [
    "#222222", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Minimal line chart of F1 against K: the overall curve plus one line per
/// emotion. Output depends only on the sweep values.
pub fn f1_vs_k_svg(sweep: &SweepResult) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let mut series: Vec<(String, BTreeMap<usize, f64>)> =
        vec![("weighted".to_owned(), sweep.curve())];
    series.extend(
        sweep
            .classes
            .iter()
            .map(|c| (c.clone(), sweep.class_curve(c))),
    );
    let values = series.iter().flat_map(|(_, c)| c.values().copied());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        lo -= 0.05;
        hi += 0.05;
    }
    let k_hi = *sweep.grid.last().unwrap_or(&0) as f64;
    let x = |k: usize| {
        left + if k_hi > 0.0 {
            k as f64 / k_hi * plot_w
        } else {
            0.0
        }
    };
    let y = |v: f64| top + (hi - v) / (hi - lo) * plot_h;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            left - 6.0,
            y(v) + 4.0
        );
    }
    for &k in &sweep.grid {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{k}</text>"#,
            x(k),
            top + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">K (preceding turns)</text>"#,
        left + plot_w / 2.0,
        h - 10.0
    );
    for (i, (name, curve)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .iter()
            .map(|(&k, &v)| format!("{:.2},{:.2}", x(k), y(v)))
            .collect();
        let width = if i == 0 { 2.5 } else { 1.5 };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
            points.join(" ")
        );
        let ly = top + 16.0 * i as f64 + 8.0;
        let lx = left + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="{width}"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{name}</text>"#,
            lx + 24.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub tool_version: String,
    pub config_hash: String,
    pub data_fingerprint: String,
    pub config: SweepConfig,
}

/// `config.json`, `sweep.csv`, `sweep.json`, `saturation.json` and
/// `f1_vs_k.svg` in `dir`.
pub fn write_sweep_outputs(
    dir: &Path,
    config: &SweepConfig,
    sweep: &SweepResult,
    profiles: &EmotionProfiles,
    data_fingerprint: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(
        &dir.join("config.json"),
        &SweepRecord {
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config.hash(),
            data_fingerprint: data_fingerprint.to_owned(),
            config: config.clone(),
        },
    )?;
    fs::write(dir.join("sweep.csv"), sweep_csv(sweep, data_fingerprint))?;
    write_json(&dir.join("sweep.json"), sweep)?;
    write_json(&dir.join("saturation.json"), profiles)?;
    fs::write(dir.join("f1_vs_k.svg"), f1_vs_k_svg(sweep))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(points: &[(usize, f64)]) -> BTreeMap<usize, f64> {
        points.iter().copied().collect()
    }

    #[test]
    fn saturation_worked_example() {
        let s = saturation_point(&curve(&[
            (0, 50.0),
            (10, 60.0),
            (20, 64.0),
            (30, 65.0),
            (40, 65.2),
        ]))
        .unwrap();
        assert_eq!(s.k_star, 40);
        assert!((s.delta - 15.2).abs() < 1e-12);
        assert_eq!(s.saturation_k, 20);
        assert!(!s.flat);
    }

    #[test]
    fn saturation_flat_and_missing_baseline() {
        let s = saturation_point(&curve(&[(0, 0.7), (5, 0.6), (10, 0.5)])).unwrap();
        assert!(s.flat);
        assert_eq!((s.saturation_k, s.k_star), (0, 0));
        assert!(matches!(
            saturation_point(&curve(&[(1, 0.5), (2, 0.6)])),
            Err(Error::MissingBaseline)
        ));
    }

    #[test]
    fn saturation_ties_pick_smallest_k() {
        let s = saturation_point(&curve(&[(0, 0.5), (5, 0.8), (10, 0.8)])).unwrap();
        assert_eq!(s.k_star, 5);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[0, 1, 1], 10).is_err());
        assert!(validate_grid(&[0, 5, 2], 10).is_err());
        assert!(validate_grid(&[1, 2], 10).is_err());
        assert!(validate_grid(&[0, 20], 10).is_err());
        assert!(validate_grid(&[0, 2, 10], 10).is_ok());
        assert_eq!(parse_grid("0..3", 10).unwrap(), [0, 1, 2, 3]);
        assert_eq!(default_grid(25), [0, 1, 2, 3, 5, 10, 20, 25]);
        assert_eq!(default_grid(200).last(), Some(&200));
        assert_eq!(parse_seeds("42..51").unwrap().len(), 10);
        assert!(parse_seeds("1,1").is_err());
    }

    proptest! {
        #[test]
        fn saturation_affine_invariant(
            vals in prop::collection::vec(0.0f64..1.0, 2..10),
            a in 0.01f64..100.0,
            b in -50.0f64..50.0,
        ) {
            let c: BTreeMap<usize, f64> = vals.iter().enumerate().map(|(i, &v)| (i * 3, v)).collect();
            let scaled: BTreeMap<usize, f64> = c.iter().map(|(&k, &v)| (k, a * v + b)).collect();
            let s1 = saturation_point(&c).unwrap();
            let s2 = saturation_point(&scaled).unwrap();
            prop_assert_eq!(s1.flat, s2.flat);
            if !s1.flat {
                prop_assert_eq!(s1.saturation_k, s2.saturation_k);
                prop_assert!(s1.saturation_k <= s1.k_star);
            }
        }
    }
}
