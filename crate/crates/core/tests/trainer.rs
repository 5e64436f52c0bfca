mod common;

use erc_core::corpus::{make_splits, SplitSpec, Taxonomy};
use erc_core::embedding::{EmbeddingStore, EncodingSpec, LayerMode, PoolingKind};
use erc_core::synth::{random_corpus, synth_store, SignalMap, SignalPlacement};
use erc_core::trainer::{train_run, Features, TrainConfig};
use erc_core::Error;

fn separable() -> (erc_core::corpus::Splits, EmbeddingStore) {
    let classes = Taxonomy::FourWay.classes();
    let corpus = random_corpus(60, 6..=10, 4, |rng| Some(classes[rng.below(4)])).unwrap();
    let map =
        SignalMap::orthogonal(Taxonomy::FourWay, 12, 3.0, SignalPlacement::AllTokens).unwrap();
    let store = synth_store(&corpus, 12, 4, Some(&map)).unwrap();
    (make_splits(&corpus, &SplitSpec::default()).unwrap(), store)
}

#[test]
fn separable_classes_are_learned_without_context() {
    let (splits, store) = separable();
    let out = train_run(&common::small_config(), &splits, &store, None).unwrap();
    assert!(
        out.result.weighted_f1 > 0.95,
        "WF1 {}",
        out.result.weighted_f1
    );
}

#[test]
fn zero_patience_stops_after_one_epoch() {
    let (splits, store) = separable();
    let config = TrainConfig {
        patience: Some(0),
        ..common::small_config()
    };
    let out = train_run(&config, &splits, &store, None).unwrap();
    assert_eq!(out.result.epochs_run, 1);
    assert_eq!(out.result.best_epoch, 1, "epochs are counted from 1");
}

#[test]
fn same_seed_same_result() {
    let (splits, store) = separable();
    let config = TrainConfig {
        k: 3,
        max_epochs: 10,
        ..common::small_config()
    };
    let a = train_run(&config, &splits, &store, None).unwrap();
    let b = train_run(&config, &splits, &store, None).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(a.model, b.model);
    let c = train_run(&TrainConfig { seed: 7, ..config }, &splits, &store, None).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn missing_embedding_record_is_reported() {
    let (splits, _) = separable();
    let empty = EmbeddingStore::new(12, LayerMode::Last).unwrap();
    let err = Features::prepare(
        &splits,
        &empty,
        None,
        EncodingSpec::Flat,
        PoolingKind::Mean,
        false,
        false,
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingRecord(_)), "{err}");
}

#[test]
fn gradient_clipping_is_opt_in() {
    let (splits, store) = separable();
    let base = TrainConfig {
        max_epochs: 5,
        ..common::small_config()
    };
    let clipped = TrainConfig {
        clip_norm: Some(1e-3),
        ..base.clone()
    };
    assert!(!serde_json::to_string(&base).unwrap().contains("clip_norm"));
    assert_ne!(base.hash(), clipped.hash());
    let a = train_run(&base, &splits, &store, None).unwrap();
    let b = train_run(&clipped, &splits, &store, None).unwrap();
    assert_ne!(a.model, b.model);
    let bad = TrainConfig {
        clip_norm: Some(0.0),
        ..base
    };
    assert!(matches!(
        train_run(&bad, &splits, &store, None),
        Err(Error::Config(_))
    ));
}
