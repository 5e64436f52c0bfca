mod common;

use erc_core::corpus::{make_splits, SplitSpec};
use erc_core::embedding::{EncodingSpec, PoolingKind};
use erc_core::sweep::{
    ablation_grid, emotion_profiles, k_sweep, write_sweep_outputs, AblationDimension, RunCache,
    SweepConfig, Variant,
};
use erc_core::synth::positional_corpus;
use erc_core::trainer::{fingerprint_of, Features, TrainConfig};

#[test]
fn final_token_signal_favours_forward_ramp() {
    let (corpus, store) = positional_corpus(60, 12, 3.0, 5).unwrap();
    let splits = make_splits(&corpus, &SplitSpec::default()).unwrap();
    let features = |pooling| {
        Features::prepare(
            &splits,
            &store,
            None,
            EncodingSpec::Flat,
            pooling,
            false,
            false,
        )
        .unwrap()
    };
    let fwd = features(PoolingKind::WmeanPos);
    let rev = features(PoolingKind::WmeanPosRev);
    let config = |pooling| TrainConfig {
        pooling,
        max_epochs: 60,
        ..common::small_config()
    };
    let variants = [
        Variant {
            name: "wmean_pos_rev".into(),
            config: config(PoolingKind::WmeanPosRev),
            features: &rev,
        },
        Variant {
            name: "wmean_pos".into(),
            config: config(PoolingKind::WmeanPos),
            features: &fwd,
        },
    ];
    let report = ablation_grid(
        AblationDimension::Pooling,
        &variants,
        &[0, 1, 2],
        &splits,
        None,
        None,
    )
    .unwrap();
    assert_eq!(report.omnibus.test, "paired_t");
    assert!(
        report.variants[1].mean >= report.variants[0].mean,
        "{:?}",
        report.variants
    );
}

#[test]
fn cached_sweep_reproduces_and_writes_outputs() {
    let setup = common::context_setup(40);
    let config = SweepConfig {
        base: TrainConfig {
            max_epochs: 10,
            ..common::small_config()
        },
        grid: vec![0, 1, 2],
        seeds: vec![0, 1],
    };
    let fingerprint = fingerprint_of(&setup.data.corpus, &setup.store).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = RunCache {
        dir: dir.path().join("cache"),
        fingerprint: fingerprint.clone(),
    };
    let first = k_sweep(
        &config,
        &setup.splits,
        &setup.features,
        Some(&cache),
        Some(1),
    )
    .unwrap();
    assert_eq!(std::fs::read_dir(&cache.dir).unwrap().count(), 6);
    let second = k_sweep(
        &config,
        &setup.splits,
        &setup.features,
        Some(&cache),
        Some(1),
    )
    .unwrap();
    assert_eq!(first, second);
    assert!(first.grid.contains(&first.headline.k));

    let profiles = emotion_profiles(&first).unwrap();
    let out = dir.path().join("out");
    write_sweep_outputs(&out, &config, &first, &profiles, &fingerprint).unwrap();
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash={}", config.hash())));
    assert_eq!(csv.lines().count(), 2 + 6);
    for f in [
        "config.json",
        "sweep.json",
        "saturation.json",
        "f1_vs_k.svg",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn grid_beyond_longest_dialogue_is_rejected() {
    let setup = common::context_setup(10);
    let config = SweepConfig {
        base: common::small_config(),
        grid: vec![0, 500],
        seeds: vec![0],
    };
    assert!(k_sweep(&config, &setup.splits, &setup.features, None, None).is_err());
}
