#![allow(dead_code)]

use std::path::Path;

use erc_core::corpus::{make_splits, SplitSpec, Splits};
use erc_core::discourse::Periphery;
use erc_core::embedding::{EmbeddingStore, EncodingSpec, PoolingKind};
use erc_core::synth::ContextCorpus;
use erc_core::trainer::{Features, TrainConfig};

/// One line of the hand-labelled marker fixture.
pub struct SpanCase {
    pub text: String,
    pub spans: Vec<(String, usize, Periphery)>,
}

pub fn load_span_fixture() -> Vec<SpanCase> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dm_spans.tsv");
    let text = std::fs::read_to_string(path).expect("fixture present");
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|line| {
            let (utt, expected) = line.split_once('\t').expect("two columns");
            let spans = if expected == "-" {
                Vec::new()
            } else {
                expected
                    .split('|')
                    .map(|s| {
                        let (marker, rest) = s.split_once('@').expect("marker@start:P");
                        let (start, p) = rest.split_once(':').expect("marker@start:P");
                        let periphery = match p {
                            "L" => Periphery::Lp,
                            "M" => Periphery::Medial,
                            "R" => Periphery::Rp,
                            other => panic!("bad periphery {other}"),
                        };
                        (
                            marker.to_owned(),
                            start.parse().expect("start index"),
                            periphery,
                        )
                    })
                    .collect()
            };
            SpanCase {
                text: utt.to_owned(),
                spans,
            }
        })
        .collect()
}

/// The context-dependent corpus: a neutral-looking turn is sad when one of
/// the previous 5 turns carried a trigger.
pub struct ContextSetup {
    pub data: ContextCorpus,
    pub store: EmbeddingStore,
    pub splits: Splits,
    pub features: Features,
}

pub fn context_setup(dialogues: usize) -> ContextSetup {
    let data = ContextCorpus::generate(dialogues, 5, 0.129, 7).expect("generator");
    let store = data.store(16, 7, 2.0).expect("store");
    let splits = make_splits(&data.corpus, &SplitSpec::default()).expect("splits");
    let features = Features::prepare(
        &splits,
        &store,
        None,
        EncodingSpec::Flat,
        PoolingKind::Mean,
        false,
        false,
    )
    .expect("features");
    ContextSetup {
        data,
        store,
        splits,
        features,
    }
}

/// Small, fast trainer settings for the synthetic corpora.
pub fn small_config() -> TrainConfig {
    TrainConfig {
        hidden: 32,
        dropout: 0.1,
        lr: 5e-3,
        patience: Some(15),
        max_epochs: 150,
        ..TrainConfig::default()
    }
}
