//! One training job: a fixed configuration and seed, Adam with early
//! stopping on validation loss, and test-set metrics for the selected epoch.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{build_context_windows, Corpus, Splits, Taxonomy};
use crate::embedding::{utterance_vector, EmbeddingStore, EncodingSpec, PoolingKind};
use crate::error::{Error, Result};
use crate::lexicon::{utterance_affect, FusionSpec, SenticLexicon};
use crate::nn::{
    argmax, cross_entropy, write_checkpoint, AdamConfig, AdamState, Checkpoint, InputStep, Model,
    Params, Precision, Scalar,
};
use crate::rng::PrngStream;
use crate::stats::t_quantile;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn default_max_epochs() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub taxonomy: Taxonomy,
    pub k: usize,
    pub encoding: EncodingSpec,
    pub pooling: PoolingKind,
    #[serde(default)]
    pub fusion: FusionSpec,
    pub lr: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub batch: usize,
    /// `None` means 60 epochs for K = 0 and 20 otherwise.
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Match multi-word lexicon concepts before single words.
    #[serde(default)]
    pub multi_word_affect: bool,
    /// L2-normalize utterance vectors before fusion.
    #[serde(default)]
    pub normalize: bool,
    /// Rescale the batch gradient to this global L2 norm when it is larger.
    /// Off by default; left out of the hash when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            taxonomy: Taxonomy::FourWay,
            k: 0,
            encoding: EncodingSpec::Flat,
            pooling: PoolingKind::Mean,
            fusion: FusionSpec::None,
            lr: 1e-3,
            hidden: 256,
            dropout: 0.3,
            batch: 64,
            patience: None,
            max_epochs: default_max_epochs(),
            seed: 42,
            precision: Precision::F32,
            multi_word_affect: false,
            normalize: false,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn patience(&self) -> usize {
        self.patience.unwrap_or(if self.k == 0 { 60 } else { 20 })
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.hidden == 0 || self.batch == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "hidden, batch and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The same configuration with the patience default filled in.
    pub fn resolved(&self) -> Self {
        Self {
            patience: Some(self.patience()),
            ..self.clone()
        }
    }

    /// Hex SHA-256 prefix of the resolved configuration's canonical JSON.
    pub fn hash(&self) -> String {
        hash_json(&self.resolved())
    }
}

/// First 16 hex digits of the SHA-256 of a value's JSON encoding.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Fingerprint of the input data: SHA-256 over the length-prefixed parts
/// (corpus, embeddings, lexicon, ...), first 16 hex digits.
pub fn data_fingerprint(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// [`data_fingerprint`] of an in-memory corpus and store.
pub fn fingerprint_of(corpus: &Corpus, store: &EmbeddingStore) -> Result<String> {
    let mut c = Vec::new();
    corpus.write_jsonl(&mut c)?;
    let mut e = Vec::new();
    store.write_to(&mut e)?;
    Ok(data_fingerprint(&[&c, &e]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f1: f64,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

/// Per-class precision, recall and F1 (0 when precision + recall = 0),
/// F1 weighted by gold support, and the confusion matrix.
pub fn evaluate_metrics(pairs: &[(usize, usize)], n_classes: usize) -> Result<Metrics> {
    if pairs.is_empty() {
        return Err(Error::EmptyEval);
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for &(gold, pred) in pairs {
        if gold >= n_classes || pred >= n_classes {
            return Err(Error::Index(format!(
                "label pair ({gold}, {pred}) with {n_classes} classes"
            )));
        }
        confusion[gold][pred] += 1;
    }
    let total = pairs.len() as f64;
    let mut per_class = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = confusion[c][c] as f64;
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp / predicted as f64
        };
        let recall = if support == 0 {
            0.0
        } else {
            tp / support as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
        });
    }
    let weighted_f1 = per_class
        .iter()
        .map(|m| m.f1 * m.support as f64)
        .sum::<f64>()
        / total;
    let accuracy = (0..n_classes).map(|c| confusion[c][c]).sum::<u64>() as f64 / total;
    Ok(Metrics {
        per_class,
        weighted_f1,
        accuracy,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub seed: u64,
    pub k: usize,
    pub taxonomy: Taxonomy,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    /// Rows are gold classes in taxonomy order.
    pub confusion: Vec<Vec<u64>>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_loss: Vec<f64>,
    /// Diagnostics only; selection uses `val_loss`.
    pub val_weighted_f1: Vec<f64>,
    pub test_loss: f64,
    pub windows: WindowCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl RunResult {
    pub fn best_val_weighted_f1(&self) -> f64 {
        self.val_weighted_f1[self.best_epoch - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub ci95: [f64; 2],
}

/// Mean, sample standard deviation, range and a t-based 95% interval.
/// Values are sorted first so the result does not depend on input order.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::InsufficientRuns(values.len()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let (min, max) = (v[0], v[v.len() - 1]);
    // Offsetting by the minimum keeps equal inputs exact.
    let mean = min + v.iter().map(|x| x - min).sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    let half = t_quantile(0.975, n - 1.0)? * std / n.sqrt();
    Ok(Summary {
        n: v.len(),
        mean,
        std,
        min,
        max,
        ci95: [mean - half, mean + half],
    })
}

pub fn aggregate_seeds(results: &[RunResult]) -> Result<Summary> {
    summarize(&results.iter().map(|r| r.weighted_f1).collect::<Vec<_>>())
}

/// Pooled utterance vectors and affect features for every utterance of the
/// three splits, indexed by `utt_id`.
#[derive(Debug, Clone)]
pub struct Features {
    pub dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
    affects: Vec<[f64; 4]>,
    has_affect: bool,
}

impl Features {
    pub fn prepare(
        splits: &Splits,
        store: &EmbeddingStore,
        lexicon: Option<&SenticLexicon>,
        encoding: EncodingSpec,
        pooling: PoolingKind,
        multi_word_affect: bool,
        normalize: bool,
    ) -> Result<Self> {
        let mut f = Self {
            dim: store.dim(),
            index: HashMap::new(),
            vectors: Vec::new(),
            affects: Vec::new(),
            has_affect: false,
        };
        for corpus in [&splits.train, &splits.val, &splits.test] {
            for (_, utt) in corpus.utterances() {
                if f.index.contains_key(&utt.utt_id) {
                    continue;
                }
                f.index.insert(utt.utt_id.clone(), f.vectors.len());
                let mut v = utterance_vector(store, utt, encoding, pooling)?;
                if normalize {
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        v.iter_mut().for_each(|x| *x /= norm);
                    }
                }
                f.vectors.push(v);
                f.affects.push(lexicon.map_or([0.0; 4], |lex| {
                    utterance_affect(&utt.text, lex, multi_word_affect).vector
                }));
            }
        }
        f.has_affect = lexicon.is_some();
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, utt_id: &str) -> Option<&[f64]> {
        self.index.get(utt_id).map(|&i| self.vectors[i].as_slice())
    }
}

/// A trained model in the precision it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: RunResult,
    pub model: TrainedModel,
}

pub fn train_run(
    config: &TrainConfig,
    splits: &Splits,
    store: &EmbeddingStore,
    lexicon: Option<&SenticLexicon>,
) -> Result<RunOutcome> {
    let features = Features::prepare(
        splits,
        store,
        lexicon,
        config.encoding,
        config.pooling,
        config.multi_word_affect,
        config.normalize,
    )?;
    train_with_features(config, splits, &features)
}

/// Train on precomputed features (shared across the runs of a sweep).
pub fn train_with_features(
    config: &TrainConfig,
    splits: &Splits,
    features: &Features,
) -> Result<RunOutcome> {
    config.validate()?;
    if config.fusion.uses_lexicon() && !features.has_affect {
        return Err(Error::Config(format!(
            "fusion {} needs a lexicon",
            config.fusion
        )));
    }
    match config.precision {
        Precision::F32 => {
            train_generic::<f32>(config, splits, features).map(|(result, m)| RunOutcome {
                result,
                model: TrainedModel::F32(m),
            })
        }
        Precision::F64 => {
            train_generic::<f64>(config, splits, features).map(|(result, m)| RunOutcome {
                result,
                model: TrainedModel::F64(m),
            })
        }
    }
}

/// Windows of one split as feature-table indices plus a class label.
struct Instances {
    steps: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

fn instances(corpus: &Corpus, config: &TrainConfig, features: &Features) -> Result<Instances> {
    let windows = build_context_windows(corpus, config.k, config.taxonomy);
    let mut out = Instances {
        steps: Vec::with_capacity(windows.len()),
        labels: Vec::with_capacity(windows.len()),
    };
    for w in windows {
        let steps = w
            .utterances()
            .iter()
            .map(|u| {
                features
                    .index
                    .get(&u.utt_id)
                    .copied()
                    .ok_or_else(|| Error::MissingRecord(u.utt_id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.steps.push(steps);
        out.labels.push(
            config
                .taxonomy
                .class_index(w.label)
                .expect("window labels are in the taxonomy"),
        );
    }
    Ok(out)
}

struct Evaluation {
    loss: f64,
    pairs: Vec<(usize, usize)>,
}

fn evaluate<T: Scalar>(
    model: &Model<T>,
    data: &Instances,
    vectors: &[Vec<T>],
    affects: &[Vec<T>],
    rng: &mut PrngStream,
) -> Result<Evaluation> {
    let mut loss = 0.0;
    let mut pairs = Vec::with_capacity(data.labels.len());
    let mut steps = Vec::new();
    for (idx, &label) in data.steps.iter().zip(&data.labels) {
        fill_steps(&mut steps, idx, vectors, affects);
        let (logits, _) = model.forward(&steps, false, rng)?;
        loss += cross_entropy(&logits, label)?.f64();
        pairs.push((label, argmax(&logits)));
    }
    Ok(Evaluation {
        loss: loss / data.labels.len() as f64,
        pairs,
    })
}

fn fill_steps<'a, T>(
    out: &mut Vec<InputStep<'a, T>>,
    idx: &[usize],
    vectors: &'a [Vec<T>],
    affects: &'a [Vec<T>],
) {
    out.clear();
    out.extend(idx.iter().map(|&i| InputStep {
        ctx: &vectors[i],
        affect: &affects[i],
    }));
}

fn train_generic<T: Scalar>(
    config: &TrainConfig,
    splits: &Splits,
    features: &Features,
) -> Result<(RunResult, Model<T>)> {
    let train = instances(&splits.train, config, features)?;
    let val = instances(&splits.val, config, features)?;
    let test = instances(&splits.test, config, features)?;
    for (name, data) in [("train", &train), ("validation", &val), ("test", &test)] {
        if data.labels.is_empty() {
            return Err(Error::Config(format!(
                "{name} split has no labelled windows"
            )));
        }
    }
    let vectors: Vec<Vec<T>> = features
        .vectors
        .iter()
        .map(|v| v.iter().map(|&x| T::c(x)).collect())
        .collect();
    let affects: Vec<Vec<T>> = if config.fusion.uses_lexicon() {
        features
            .affects
            .iter()
            .map(|a| a.iter().map(|&x| T::c(x)).collect())
            .collect()
    } else {
        vec![Vec::new(); features.len()]
    };

    let n_classes = config.taxonomy.n_classes();
    let mut init_rng = PrngStream::new(config.seed, "init");
    let mut shuffle_rng = PrngStream::new(config.seed, "shuffle");
    let mut dropout_rng = PrngStream::new(config.seed, "dropout");
    let mut eval_rng = PrngStream::new(config.seed, "eval");
    let mut model = Model::<T>::init(
        config.k > 0,
        features.dim,
        config.hidden,
        n_classes,
        config.dropout,
        config.fusion,
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(
        &model,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );

    let patience = config.patience();
    let mut order: Vec<usize> = (0..train.labels.len()).collect();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut val_loss = Vec::new();
    let mut val_wf1 = Vec::new();
    let mut steps = Vec::new();
    for epoch in 1..=config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut train_loss = 0.0;
        for batch in order.chunks(config.batch) {
            let mut grads = model.zeros_like();
            for &i in batch {
                fill_steps(&mut steps, &train.steps[i], &vectors, &affects);
                let (logits, cache) = model.forward(&steps, true, &mut dropout_rng)?;
                train_loss += cross_entropy(&logits, train.labels[i])?.f64();
                model.backward(&cache, train.labels[i], &mut grads);
            }
            grads.scale(T::one() / T::c(batch.len() as f64));
            if !grads.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite gradient in epoch {epoch}"
                )));
            }
            if let Some(max) = config.clip_norm {
                let norm = grads.l2_norm();
                if norm > max {
                    grads.scale(T::c(max / norm));
                }
            }
            adam.step(&mut model, &grads)?;
        }
        train_loss /= train.labels.len() as f64;
        let eval = evaluate(&model, &val, &vectors, &affects, &mut eval_rng)?;
        if !eval.loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Divergence(format!(
                "epoch {epoch}: train loss {train_loss}, validation loss {}",
                eval.loss
            )));
        }
        let wf1 = evaluate_metrics(&eval.pairs, n_classes)?.weighted_f1;
        debug!(
            "epoch {epoch}: train {train_loss:.5} val {:.5} val wf1 {wf1:.4}",
            eval.loss
        );
        val_loss.push(eval.loss);
        val_wf1.push(wf1);
        if eval.loss < best.0 {
            best = (eval.loss, epoch, model.clone());
        }
        if epoch - best.1 >= patience {
            break;
        }
    }
    let (_, best_epoch, model) = best;
    let eval = evaluate(&model, &test, &vectors, &affects, &mut eval_rng)?;
    let metrics = evaluate_metrics(&eval.pairs, n_classes)?;
    let per_class_f1 = config
        .taxonomy
        .classes()
        .iter()
        .zip(&metrics.per_class)
        .map(|(e, m)| (e.as_str().to_owned(), m.f1))
        .collect();
    info!(
        "K={} seed={}: best epoch {best_epoch} of {}, test WF1 {:.4}",
        config.k,
        config.seed,
        val_loss.len(),
        metrics.weighted_f1
    );
    let result = RunResult {
        config_hash: config.hash(),
        seed: config.seed,
        k: config.k,
        taxonomy: config.taxonomy,
        weighted_f1: metrics.weighted_f1,
        accuracy: metrics.accuracy,
        per_class_f1,
        confusion: metrics.confusion,
        best_epoch,
        epochs_run: val_loss.len(),
        val_loss,
        val_weighted_f1: val_wf1,
        test_loss: eval.loss,
        windows: WindowCounts {
            train: train.labels.len(),
            val: val.labels.len(),
            test: test.labels.len(),
        },
    };
    Ok((result, model))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigRecord<C> {
    pub tool_version: String,
    pub config_hash: String,
    pub config: C,
}

/// `config.json`, `result.json` and `checkpoint.bin` in `dir`.
pub fn write_run_outputs(dir: &Path, config: &TrainConfig, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(
        &dir.join("config.json"),
        &ConfigRecord {
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config.hash(),
            config: config.resolved(),
        },
    )?;
    write_json(&dir.join("result.json"), &outcome.result)?;
    let w = BufWriter::new(File::create(dir.join("checkpoint.bin"))?);
    match &outcome.model {
        TrainedModel::F32(m) => write_checkpoint(
            w,
            &Checkpoint {
                seed: config.seed,
                config_hash: config.hash(),
                model: m.clone(),
            },
        ),
        TrainedModel::F64(m) => write_checkpoint(
            w,
            &Checkpoint {
                seed: config.seed,
                config_hash: config.hash(),
                model: m.clone(),
            },
        ),
    }
}
