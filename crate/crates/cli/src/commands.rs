use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use erc_core::corpus::{load_corpus, make_splits, Corpus, SplitSpec, Splits, Taxonomy};
use erc_core::discourse::{dm_report, load_inventory, occurrences_csv, DmOptions, MarkerInventory};
use erc_core::embedding::{open_store, EmbeddingStore, EncodingSpec, PoolingKind};
use erc_core::lexicon::{load_lexicon, FusionSpec, SenticLexicon};
use erc_core::nn::reference_checks;
use erc_core::stats::selftest;
use erc_core::sweep::{
    ablation_csv, ablation_grid, csv_header_line, emotion_profiles, k_sweep, parse_grid,
    parse_seeds, write_sweep_outputs, AblationDimension, RunCache, SweepConfig, Variant,
};
use erc_core::synth::{discourse_corpus, positional_corpus, ContextCorpus};
use erc_core::trainer::{
    data_fingerprint, hash_json, train_with_features, write_json, write_run_outputs, ConfigRecord,
    Features, TrainConfig, TOOL_VERSION,
};
use erc_core::{Error, Result};
use log::info;
use serde::Serialize;

use crate::args::{
    AblateArgs, CorpusStatsArgs, DataArgs, DmArgs, GradcheckArgs, ModelArgs, SweepArgs, SynthArgs,
    SynthKind, TrainArgs, ValidateArgs,
};

/// Everything loaded from the data flags, plus a fingerprint of the raw bytes.
struct Data {
    splits: Splits,
    store: EmbeddingStore,
    lexicon: Option<SenticLexicon>,
    fingerprint: String,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn split_spec(data: &DataArgs) -> SplitSpec {
    SplitSpec {
        train_sessions: data.train_sessions.iter().copied().collect(),
        val_sessions: data.val_sessions.iter().copied().collect(),
        test_sessions: data.test_sessions.iter().copied().collect(),
    }
}

fn load_data(data: &DataArgs) -> Result<Data> {
    let corpus = load_corpus(&data.corpus)?;
    let spec = split_spec(data);
    let splits = make_splits(&corpus, &spec)?;
    let store = open_store(&data.embeddings)?;
    let lexicon = data.sentic.as_deref().map(load_lexicon).transpose()?;
    let mut parts = vec![
        read(&data.corpus)?,
        read(&data.embeddings)?,
        serde_json::to_vec(&spec)?,
    ];
    if let Some(p) = &data.sentic {
        parts.push(read(p)?);
    }
    let fingerprint = data_fingerprint(&parts.iter().map(Vec::as_slice).collect::<Vec<_>>());
    info!(
        "{} dialogues ({} train / {} val / {} test), embeddings dim {}, data {fingerprint}",
        corpus.len(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        store.dim()
    );
    Ok(Data {
        splits,
        store,
        lexicon,
        fingerprint,
    })
}

fn resolve_config(m: &ModelArgs) -> Result<TrainConfig> {
    let mut c = match &m.config {
        None => TrainConfig::default(),
        Some(path) => {
            let value: serde_json::Value = serde_json::from_slice(&read(path)?)?;
            // A run's config.json wraps the config in a record.
            let inner = match value.get("config") {
                Some(v) if value.get("config_hash").is_some() => v.clone(),
                _ => value,
            };
            serde_json::from_value(inner)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(v) = m.taxonomy {
        c.taxonomy = v;
    }
    if let Some(v) = m.encoding {
        c.encoding = v;
    }
    if let Some(v) = m.pooling {
        c.pooling = v;
    }
    if let Some(v) = m.fusion {
        c.fusion = v;
    }
    if let Some(v) = m.lr {
        c.lr = v;
    }
    if let Some(v) = m.hidden {
        c.hidden = v;
    }
    if let Some(v) = m.dropout {
        c.dropout = v;
    }
    if let Some(v) = m.batch {
        c.batch = v;
    }
    if m.patience.is_some() {
        c.patience = m.patience;
    }
    if let Some(v) = m.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = m.precision {
        c.precision = v.into();
    }
    if m.clip_norm.is_some() {
        c.clip_norm = m.clip_norm;
    }
    c.normalize |= m.normalize;
    c.multi_word_affect |= m.multi_word_affect;
    c.validate()?;
    Ok(c)
}

fn features_for(data: &Data, store: &EmbeddingStore, c: &TrainConfig) -> Result<Features> {
    if c.fusion.uses_lexicon() && data.lexicon.is_none() {
        return Err(Error::Config(format!("fusion {} needs --sentic", c.fusion)));
    }
    Features::prepare(
        &data.splits,
        store,
        data.lexicon.as_ref(),
        c.encoding,
        c.pooling,
        c.multi_word_affect,
        c.normalize,
    )
}

fn cache_for(out: &Path, fingerprint: &str, disabled: bool) -> Option<RunCache> {
    if disabled {
        return None;
    }
    let dir = std::env::var_os(RunCache::ENV).map_or_else(|| out.join(".cache"), PathBuf::from);
    Some(RunCache {
        dir,
        fingerprint: fingerprint.to_owned(),
    })
}

pub fn validate_corpus(a: &ValidateArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    println!(
        "{}: {} dialogues, {} utterances, {} labelled ({}), sessions {:?}, K_max {}",
        a.corpus.display(),
        corpus.len(),
        corpus.utterance_count(),
        corpus.labeled_count(a.taxonomy),
        a.taxonomy,
        corpus.sessions(),
        corpus.k_max()
    );
    if let Some(path) = &a.embeddings {
        let store = open_store(path)?;
        let mut missing = Vec::new();
        for (_, u) in corpus.utterances() {
            let keys = std::iter::once(u.utt_id.clone())
                .chain((0..u.sentences.len()).map(|i| u.sentence_key(i)));
            missing.extend(keys.filter(|k| store.get(k).is_none()));
        }
        if !missing.is_empty() {
            return Err(Error::MissingRecord(format!(
                "{} keys absent from {} (first: {})",
                missing.len(),
                path.display(),
                missing[0]
            )));
        }
        println!(
            "{}: {} records, dim {}, layer mode {}; every utterance and sentence covered",
            path.display(),
            store.len(),
            store.dim(),
            store.layer_mode()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Distribution {
    n: usize,
    min: usize,
    max: usize,
    mean: f64,
    median: f64,
    counts: BTreeMap<usize, usize>,
}

fn distribution(values: &[usize]) -> Distribution {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    let median = match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2] as f64,
        _ => (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0,
    };
    let mut counts = BTreeMap::new();
    for &x in &v {
        *counts.entry(x).or_default() += 1;
    }
    Distribution {
        n,
        min: v.first().copied().unwrap_or(0),
        max: v.last().copied().unwrap_or(0),
        mean: if n == 0 {
            f64::NAN
        } else {
            v.iter().sum::<usize>() as f64 / n as f64
        },
        median,
        counts,
    }
}

fn distribution_csv(header: &str, column: &str, d: &Distribution) -> String {
    let mut out = header.to_owned();
    let _ = writeln!(out, "{column},count");
    for (k, c) in &d.counts {
        let _ = writeln!(out, "{k},{c}");
    }
    out
}

#[derive(Serialize)]
struct CorpusStats {
    dialogue_length: Distribution,
    sentences_per_utterance: Distribution,
}

pub fn corpus_stats(a: &CorpusStatsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let lengths: Vec<usize> = corpus
        .dialogues
        .iter()
        .map(|d| d.utterances.len())
        .collect();
    let sentences: Vec<usize> = corpus
        .utterances()
        .map(|(_, u)| u.sentences.len())
        .collect();
    let stats = CorpusStats {
        dialogue_length: distribution(&lengths),
        sentences_per_utterance: distribution(&sentences),
    };
    for (title, d) in [
        ("Dialogue length (turns)", &stats.dialogue_length),
        ("Sentences per utterance", &stats.sentences_per_utterance),
    ] {
        println!(
            "{title}: n={} min={} median={} mean={:.2} max={}",
            d.n, d.min, d.median, d.mean, d.max
        );
    }
    let Some(out) = &a.out else {
        return Ok(());
    };
    fs::create_dir_all(out)?;
    #[derive(Serialize)]
    struct StatsConfig {
        command: &'static str,
        corpus: String,
    }
    let config = StatsConfig {
        command: "corpus-stats",
        corpus: data_fingerprint(&[&read(&a.corpus)?]),
    };
    let hash = hash_json(&config);
    write_json(
        &out.join("config.json"),
        &ConfigRecord {
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: hash.clone(),
            config,
        },
    )?;
    let header = csv_header_line(&hash, &[]);
    fs::write(
        out.join("dialogue_lengths.csv"),
        distribution_csv(&header, "turns", &stats.dialogue_length),
    )?;
    fs::write(
        out.join("sentence_counts.csv"),
        distribution_csv(&header, "sentences", &stats.sentences_per_utterance),
    )?;
    write_json(&out.join("corpus_stats.json"), &stats)?;
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let mut config = resolve_config(&a.model)?;
    if let Some(k) = a.k {
        config.k = k;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let features = features_for(&data, &data.store, &config)?;
    let outcome = train_with_features(&config, &data.splits, &features)?;
    write_run_outputs(&a.out, &config, &outcome)?;
    let r = &outcome.result;
    println!(
        "K={} seed={} WF1={:.4} acc={:.4} best epoch {} of {} -> {}",
        r.k,
        r.seed,
        r.weighted_f1,
        r.accuracy,
        r.best_epoch,
        r.epochs_run,
        a.out.display()
    );
    Ok(())
}

fn split_k_max(splits: &Splits) -> usize {
    [&splits.train, &splits.val, &splits.test]
        .iter()
        .map(|c| c.k_max())
        .max()
        .unwrap_or(0)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let base = resolve_config(&a.model)?;
    let config = SweepConfig {
        grid: parse_grid(&a.grid, split_k_max(&data.splits))?,
        seeds: parse_seeds(&a.seeds)?,
        base,
    };
    let features = features_for(&data, &data.store, &config.base)?;
    let cache = cache_for(&a.out, &data.fingerprint, a.no_cache);
    let result = k_sweep(&config, &data.splits, &features, cache.as_ref(), a.jobs)?;
    let profiles = emotion_profiles(&result)?;
    write_sweep_outputs(&a.out, &config, &result, &profiles, &data.fingerprint)?;
    for s in &result.per_k {
        println!("K={:<4} WF1={:.4}", s.k, s.mean_weighted_f1);
    }
    let sat = profiles.overall;
    println!(
        "K*={} delta={:+.4} saturation K={} headline K={} (val {:.4}, test {:.4}) -> {}",
        sat.k_star,
        sat.delta,
        sat.saturation_k,
        result.headline.k,
        result.headline.mean_val_weighted_f1,
        result.headline.mean_test_weighted_f1,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AblationConfig<'a> {
    dimension: AblationDimension,
    seeds: &'a [u64],
    variants: Vec<(String, TrainConfig)>,
    data: &'a str,
}

fn default_variants(dimension: AblationDimension) -> Result<Vec<String>> {
    Ok(match dimension {
        AblationDimension::Pooling => ["mean", "wmean_pos", "wmean_pos_rev"].map(String::from).to_vec(),
        AblationDimension::Encoding => ["flat", "hier:mean", "hier:wmean_pos"].map(String::from).to_vec(),
        AblationDimension::Fusion => std::iter::once(FusionSpec::None)
            .chain(FusionSpec::appendix_grid())
            .map(|f| f.to_string())
            .collect(),
        AblationDimension::LayerMode => {
            return Err(Error::Config(
                "layer_mode ablation needs --variants name=path,name=path with one EMB1 file per layer mode".into(),
            ))
        }
    })
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let mut data = load_data(&a.data)?;
    let mut base = resolve_config(&a.model)?;
    if let Some(k) = a.k {
        base.k = k;
    }
    let seeds = parse_seeds(&a.seeds)?;
    let names = if a.variants.is_empty() {
        default_variants(a.dimension)?
    } else {
        a.variants.clone()
    };
    let mut configs = Vec::with_capacity(names.len());
    let mut stores: Vec<Option<EmbeddingStore>> = Vec::with_capacity(names.len());
    let mut extra_bytes = Vec::new();
    for raw in &names {
        let mut c = base.clone();
        let mut store = None;
        let name = match a.dimension {
            AblationDimension::Pooling => {
                c.pooling = raw.parse::<PoolingKind>().map_err(Error::Config)?;
                raw.clone()
            }
            AblationDimension::Encoding => {
                c.encoding = raw.parse::<EncodingSpec>().map_err(Error::Config)?;
                raw.clone()
            }
            AblationDimension::Fusion => {
                c.fusion = raw.parse::<FusionSpec>().map_err(Error::Config)?;
                raw.clone()
            }
            AblationDimension::LayerMode => {
                let (name, path) = raw.split_once('=').ok_or_else(|| {
                    Error::Config(format!("layer_mode variant '{raw}' is not name=path"))
                })?;
                extra_bytes.push(read(Path::new(path))?);
                store = Some(open_store(path)?);
                name.to_owned()
            }
        };
        configs.push((name, c));
        stores.push(store);
    }
    if !extra_bytes.is_empty() {
        let mut parts = vec![data.fingerprint.as_bytes().to_vec()];
        parts.extend(extra_bytes);
        data.fingerprint = data_fingerprint(&parts.iter().map(Vec::as_slice).collect::<Vec<_>>());
    }
    let features = configs
        .iter()
        .zip(&stores)
        .map(|((_, c), s)| features_for(&data, s.as_ref().unwrap_or(&data.store), c))
        .collect::<Result<Vec<_>>>()?;
    let variants: Vec<Variant<'_>> = configs
        .iter()
        .zip(&features)
        .map(|((name, c), f)| Variant {
            name: name.clone(),
            config: c.clone(),
            features: f,
        })
        .collect();
    let record = AblationConfig {
        dimension: a.dimension,
        seeds: &seeds,
        variants: configs
            .iter()
            .map(|(n, c)| (n.clone(), c.resolved()))
            .collect(),
        data: &data.fingerprint,
    };
    let hash = hash_json(&record);
    let cache = cache_for(&a.out, &data.fingerprint, a.no_cache);
    let report = ablation_grid(
        a.dimension,
        &variants,
        &seeds,
        &data.splits,
        cache.as_ref(),
        a.jobs,
    )?;
    fs::create_dir_all(&a.out)?;
    write_json(
        &a.out.join("config.json"),
        &ConfigRecord {
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: hash.clone(),
            config: record,
        },
    )?;
    fs::write(
        a.out.join("ablation.csv"),
        ablation_csv(&report, &hash, &data.fingerprint),
    )?;
    write_json(&a.out.join("ablation.json"), &report)?;
    for v in &report.variants {
        println!("{:<16} mean WF1={:.4}", v.name, v.mean);
    }
    println!(
        "{}: statistic={:.4} p={:.3e} -> {}",
        report.omnibus.test,
        report.omnibus.statistic,
        report.omnibus.p_value,
        a.out.display()
    );
    for row in &report.pairwise {
        println!(
            "  {} vs {}: delta={:+.4} p(Bonferroni)={:.3e}",
            row.variant, row.baseline, row.delta, row.report.p_value
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct DmConfig<'a> {
    taxonomy: Taxonomy,
    options: &'a DmOptions,
    inventory: &'a [(String, String)],
    corpus: String,
}

pub fn dm_analyze(a: &DmArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let inventory = match &a.inventory {
        Some(p) => load_inventory(p)?,
        None => MarkerInventory::default(),
    };
    let options = DmOptions {
        exclude_single_token: a.exclude_single_token,
        markers: a
            .markers
            .as_ref()
            .map(|m| m.iter().map(|s| s.trim().to_lowercase()).collect()),
    };
    if let Some(unknown) = options
        .markers
        .iter()
        .flatten()
        .find(|m| inventory.category(m).is_none())
    {
        return Err(Error::Config(format!(
            "--markers names '{unknown}', which is not in the inventory"
        )));
    }
    let (report, occurrences) = dm_report(&corpus, a.taxonomy, &inventory, &options)?;
    let config = DmConfig {
        taxonomy: a.taxonomy,
        options: &options,
        inventory: inventory.entries(),
        corpus: data_fingerprint(&[&read(&a.corpus)?]),
    };
    let hash = hash_json(&config);
    fs::create_dir_all(&a.out)?;
    write_json(
        &a.out.join("config.json"),
        &ConfigRecord {
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: hash.clone(),
            config,
        },
    )?;
    fs::write(
        a.out.join("dm_occurrences.csv"),
        occurrences_csv(&occurrences, &csv_header_line(&hash, &[])),
    )?;
    write_json(&a.out.join("dm_report.json"), &report)?;
    println!(
        "{} occurrences, {} labelled, {} analysed ({} in one-token utterances)",
        report.counts.all,
        report.counts.labelled,
        report.counts.analysed,
        report.counts.single_token
    );
    if let Some(r) = &report.association {
        println!(
            "emotion x periphery: chi2={:.4} df={} p={:.3e} V={:.4}",
            r.statistic,
            r.df.first().copied().unwrap_or(f64::NAN),
            r.p_value,
            r.effect_size.unwrap_or(f64::NAN)
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}

pub fn stats_selftest() -> Result<()> {
    let cases = selftest()?;
    let mut failed = 0;
    for c in &cases {
        println!(
            "{} {:<34} expected {:<32} got {}",
            if c.pass { "ok  " } else { "FAIL" },
            c.name,
            c.expected,
            c.got
        );
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(Error::Verification(format!(
            "{failed} of {} statistics fixtures failed",
            cases.len()
        )));
    }
    println!("{} fixtures passed", cases.len());
    Ok(())
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let checks = reference_checks(a.seed)?;
    let mut worst = 0.0f64;
    for c in &checks {
        println!(
            "{:<30} max relative error {:.3e} ({} of {} coordinates)",
            c.name, c.report.max_rel_error, c.report.checked, c.report.total
        );
        worst = worst.max(c.report.max_rel_error);
    }
    let any_nan = checks.iter().any(|c| c.report.max_rel_error.is_nan());
    if any_nan || worst >= GRADCHECK_TOLERANCE {
        return Err(Error::Verification(format!(
            "gradient check error {worst:.3e} >= {GRADCHECK_TOLERANCE:e}"
        )));
    }
    println!("all below {GRADCHECK_TOLERANCE:e}");
    Ok(())
}

fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    corpus.write_jsonl(&mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let corpus_path = a.out.join("corpus.jsonl");
    let emb_path = a.out.join("embeddings.emb1");
    match a.kind {
        SynthKind::Context => {
            let data = ContextCorpus::generate(a.dialogues, 5, 0.129, a.seed)?;
            write_corpus(&data.corpus, &corpus_path)?;
            data.store(a.dim, a.seed, 2.0)?.save(&emb_path)?;
        }
        SynthKind::Positional => {
            let (corpus, store) = positional_corpus(a.dialogues, a.dim, 3.0, a.seed)?;
            write_corpus(&corpus, &corpus_path)?;
            store.save(&emb_path)?;
        }
        SynthKind::Discourse => {
            let inventory = MarkerInventory::default();
            let markers: Vec<&str> = inventory
                .entries()
                .iter()
                .take(8)
                .map(|(m, _)| m.as_str())
                .collect();
            let corpus = discourse_corpus(a.per_emotion, &markers, a.medial, a.seed)?;
            write_corpus(&corpus, &corpus_path)?;
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use erc_core::embedding::HierAggregation;

    #[test]
    fn distribution_summary() {
        let d = distribution(&[3, 1, 2, 2]);
        assert_eq!((d.min, d.max, d.median, d.mean), (1, 3, 2.0, 2.0));
        assert_eq!(d.counts[&2], 2);
    }

    #[test]
    fn hier_default_variant_parses() {
        let v = default_variants(AblationDimension::Encoding).unwrap();
        assert_eq!(
            v[1].parse::<EncodingSpec>().unwrap(),
            EncodingSpec::Hier {
                aggregation: HierAggregation::Mean
            }
        );
        assert!(default_variants(AblationDimension::LayerMode).is_err());
    }
}
