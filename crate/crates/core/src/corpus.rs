//! Conversational corpora: loading, session splits and causal context windows.
//!
//! The on-disk format is JSONL with one dialogue per line:
//!
//! ```text
//! {"dialogue_id": "Ses01F_impro01", "session": 1, "utterances": [
//!   {"utt_id": "...", "turn_index": 0, "speaker": "F", "text": "...",
//!    "sentences": ["..."], "label4": "neutral", "label6": null}, ...]}
//! ```
//!
//! Utterances without a label in a taxonomy stay in the corpus; they serve as
//! context for later targets but are never classified themselves.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Angry,
    Happy,
    Sad,
    Neutral,
    Excited,
    Frustrated,
}

impl Emotion {
    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Angry => "angry",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Neutral => "neutral",
            Emotion::Excited => "excited",
            Emotion::Frustrated => "frustrated",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "angry" => Ok(Emotion::Angry),
            "happy" => Ok(Emotion::Happy),
            "sad" => Ok(Emotion::Sad),
            "neutral" => Ok(Emotion::Neutral),
            "excited" => Ok(Emotion::Excited),
            "frustrated" => Ok(Emotion::Frustrated),
            other => Err(format!("unknown emotion '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Taxonomy {
    #[serde(rename = "4way")]
    FourWay,
    #[serde(rename = "6way")]
    SixWay,
}

const FOUR_WAY: [Emotion; 4] = [
    Emotion::Angry,
    Emotion::Happy,
    Emotion::Sad,
    Emotion::Neutral,
];
const SIX_WAY: [Emotion; 6] = [
    Emotion::Angry,
    Emotion::Happy,
    Emotion::Sad,
    Emotion::Neutral,
    Emotion::Excited,
    Emotion::Frustrated,
];

impl Taxonomy {
    /// Classes in model output order.
    pub fn classes(self) -> &'static [Emotion] {
        match self {
            Taxonomy::FourWay => &FOUR_WAY,
            Taxonomy::SixWay => &SIX_WAY,
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().len()
    }

    pub fn class_index(self, e: Emotion) -> Option<usize> {
        self.classes().iter().position(|&c| c == e)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Taxonomy::FourWay => "4way",
            Taxonomy::SixWay => "6way",
        }
    }
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Taxonomy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4way" | "4-way" => Ok(Taxonomy::FourWay),
            "6way" | "6-way" => Ok(Taxonomy::SixWay),
            other => Err(format!(
                "unknown taxonomy '{other}' (expected 4way or 6way)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utt_id: String,
    pub turn_index: usize,
    pub speaker: String,
    pub text: String,
    pub sentences: Vec<String>,
    #[serde(default)]
    pub label4: Option<Emotion>,
    #[serde(default)]
    pub label6: Option<Emotion>,
}

impl Utterance {
    pub fn label(&self, taxonomy: Taxonomy) -> Option<Emotion> {
        match taxonomy {
            Taxonomy::FourWay => self.label4,
            Taxonomy::SixWay => self.label6,
        }
    }

    /// Embedding-store key of the `index`-th sentence unit.
    pub fn sentence_key(&self, index: usize) -> String {
        sentence_key(&self.utt_id, index)
    }
}

pub fn sentence_key(utt_id: &str, index: usize) -> String {
    format!("{utt_id}#s{index}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub session: u32,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Result<Self> {
        let corpus = Self { dialogues };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn utterance_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.utterances.len()).sum()
    }

    pub fn utterances(&self) -> impl Iterator<Item = (&Dialogue, &Utterance)> {
        self.dialogues
            .iter()
            .flat_map(|d| d.utterances.iter().map(move |u| (d, u)))
    }

    pub fn labeled_count(&self, taxonomy: Taxonomy) -> usize {
        self.utterances()
            .filter(|(_, u)| u.label(taxonomy).is_some())
            .count()
    }

    /// Longest dialogue in turns; the upper end of an exhaustive K sweep.
    pub fn k_max(&self) -> usize {
        self.dialogues
            .iter()
            .map(|d| d.utterances.len())
            .max()
            .unwrap_or(0)
    }

    pub fn sessions(&self) -> BTreeSet<u32> {
        self.dialogues.iter().map(|d| d.session).collect()
    }

    fn validate(&self) -> Result<()> {
        let mut dialogue_ids = HashSet::new();
        let mut utt_ids = HashSet::new();
        for d in &self.dialogues {
            let fail = |message: String| Error::Validation {
                dialogue_id: d.dialogue_id.clone(),
                message,
            };
            if !dialogue_ids.insert(d.dialogue_id.as_str()) {
                return Err(fail("duplicate dialogue_id".into()));
            }
            if !(1..=5).contains(&d.session) {
                return Err(fail(format!("session {} outside 1..=5", d.session)));
            }
            if d.utterances.is_empty() {
                return Err(fail("dialogue has no utterances".into()));
            }
            for (expected, u) in d.utterances.iter().enumerate() {
                if u.turn_index != expected {
                    return Err(fail(format!(
                        "utterance {} has turn_index {}, expected {expected}",
                        u.utt_id, u.turn_index
                    )));
                }
                if !utt_ids.insert(u.utt_id.as_str()) {
                    return Err(fail(format!("duplicate utt_id {}", u.utt_id)));
                }
                if u.sentences.is_empty() {
                    return Err(fail(format!("utterance {} has no sentences", u.utt_id)));
                }
                if let Some(l) = u.label4 {
                    if Taxonomy::FourWay.class_index(l).is_none() {
                        return Err(fail(format!(
                            "utterance {} has label4 '{l}', which is not a 4-way class",
                            u.utt_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for d in &self.dialogues {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Raw line shape; unknown fields are ignored.
#[derive(Deserialize)]
struct RawDialogue {
    dialogue_id: String,
    session: u32,
    utterances: Vec<RawUtterance>,
}

#[derive(Deserialize)]
struct RawUtterance {
    utt_id: String,
    turn_index: usize,
    speaker: String,
    text: String,
    sentences: Vec<String>,
    #[serde(default)]
    label4: Option<String>,
    #[serde(default)]
    label6: Option<String>,
}

fn parse_label(raw: Option<String>, line: usize) -> Result<Option<Emotion>> {
    raw.map(|s| {
        s.parse::<Emotion>()
            .map_err(|message| Error::Parse { line, message })
    })
    .transpose()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let file = File::open(path.as_ref())?;
    parse_corpus(BufReader::new(file))
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut dialogues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDialogue = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut utterances = Vec::with_capacity(raw.utterances.len());
        for u in raw.utterances {
            utterances.push(Utterance {
                utt_id: u.utt_id,
                turn_index: u.turn_index,
                speaker: u.speaker,
                text: u.text,
                sentences: u.sentences,
                label4: parse_label(u.label4, line_no)?,
                label6: parse_label(u.label6, line_no)?,
            });
        }
        dialogues.push(Dialogue {
            dialogue_id: raw.dialogue_id,
            session: raw.session,
            utterances,
        });
    }
    if dialogues.is_empty() {
        warn!("corpus contains no dialogues");
    }
    Corpus::new(dialogues)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_sessions: BTreeSet<u32>,
    pub val_sessions: BTreeSet<u32>,
    pub test_sessions: BTreeSet<u32>,
}

impl Default for SplitSpec {
    /// Speaker-disjoint IEMOCAP protocol: sessions 2-4 / 1 / 5.
    fn default() -> Self {
        Self {
            train_sessions: [2, 3, 4].into_iter().collect(),
            val_sessions: [1].into_iter().collect(),
            test_sessions: [5].into_iter().collect(),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("train", &self.train_sessions, "val", &self.val_sessions),
            ("train", &self.train_sessions, "test", &self.test_sessions),
            ("val", &self.val_sessions, "test", &self.test_sessions),
        ];
        for (an, a, bn, b) in pairs {
            let common: Vec<_> = a.intersection(b).collect();
            if !common.is_empty() {
                return Err(Error::Spec(format!(
                    "{an} and {bn} share sessions {common:?}"
                )));
            }
        }
        if self.train_sessions.is_empty()
            && self.val_sessions.is_empty()
            && self.test_sessions.is_empty()
        {
            return Err(Error::Spec("no sessions assigned".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

pub fn make_splits(corpus: &Corpus, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let present = corpus.sessions();
    for s in spec
        .train_sessions
        .iter()
        .chain(&spec.val_sessions)
        .chain(&spec.test_sessions)
    {
        if !present.contains(s) {
            warn!("session {s} named in the split is absent from the corpus");
        }
    }
    let pick = |sessions: &BTreeSet<u32>| Corpus {
        dialogues: corpus
            .dialogues
            .iter()
            .filter(|d| sessions.contains(&d.session))
            .cloned()
            .collect(),
    };
    Ok(Splits {
        train: pick(&spec.train_sessions),
        val: pick(&spec.val_sessions),
        test: pick(&spec.test_sessions),
    })
}

/// A labelled target plus up to `k_requested` preceding turns of its dialogue.
#[derive(Debug, Clone, Copy)]
pub struct ContextWindow<'a> {
    pub dialogue: &'a Dialogue,
    pub start: usize,
    pub target: usize,
    pub k_requested: usize,
    pub label: Emotion,
}

impl<'a> ContextWindow<'a> {
    /// Oldest first; the target is the last element.
    pub fn utterances(&self) -> &'a [Utterance] {
        &self.dialogue.utterances[self.start..=self.target]
    }

    pub fn target(&self) -> &'a Utterance {
        &self.dialogue.utterances[self.target]
    }

    pub fn len(&self) -> usize {
        self.target - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn build_context_windows(
    corpus: &Corpus,
    k: usize,
    taxonomy: Taxonomy,
) -> Vec<ContextWindow<'_>> {
    corpus
        .dialogues
        .iter()
        .flat_map(|d| {
            d.utterances.iter().enumerate().filter_map(move |(i, u)| {
                u.label(taxonomy).map(|label| ContextWindow {
                    dialogue: d,
                    start: i.saturating_sub(k),
                    target: i,
                    k_requested: k,
                    label,
                })
            })
        })
        .collect()
}
