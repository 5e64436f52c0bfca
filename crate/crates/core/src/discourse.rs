//! Discourse-marker matching, left/right periphery classification and the
//! emotion-by-position association report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Emotion, Taxonomy};
use crate::error::{Error, Result};
use crate::stats::{anova_oneway, chi_square_cramers_v, Correction, StatReport};
use crate::text::tokenize;

/// Positions strictly below this are left-peripheral.
pub const LP_THRESHOLD: f64 = 0.15;
/// Positions strictly above this are right-peripheral.
pub const RP_THRESHOLD: f64 = 0.85;

const DEFAULT_INVENTORY: [(&str, &str); 20] = [
    ("and", "elaborative"),
    ("so", "inferential"),
    ("like", "pragmatic particle"),
    ("but", "contrastive"),
    ("well", "turn-management"),
    ("oh", "turn-management"),
    ("you know", "intersubjective"),
    ("i mean", "intersubjective"),
    ("maybe", "epistemic (doubt)"),
    ("though", "contrastive"),
    ("i think", "epistemic (stance)"),
    ("probably", "epistemic (doubt)"),
    ("i guess", "epistemic (stance)"),
    ("yet", "contrastive"),
    ("also", "elaborative"),
    ("i believe", "epistemic (stance)"),
    ("however", "contrastive"),
    ("although", "contrastive"),
    ("unfortunately", "attitudinal"),
    ("therefore", "inferential"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerInventory {
    entries: Vec<(String, String)>,
    lookup: HashMap<String, usize>,
}

impl Default for MarkerInventory {
    fn default() -> Self {
        Self::new(
            DEFAULT_INVENTORY
                .iter()
                .map(|&(m, c)| (m.to_owned(), c.to_owned()))
                .collect(),
        )
        .expect("built-in inventory is valid")
    }
}

impl MarkerInventory {
    /// Markers are lowercased and must be one or two words and unique.
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut inv = Self {
            entries: Vec::with_capacity(entries.len()),
            lookup: HashMap::new(),
        };
        for (marker, category) in entries {
            let words: Vec<&str> = marker.split_whitespace().collect();
            if !(1..=2).contains(&words.len()) {
                return Err(Error::Config(format!(
                    "marker '{marker}' must have one or two words"
                )));
            }
            let key = words.join(" ").to_lowercase();
            if inv.lookup.insert(key.clone(), inv.entries.len()).is_some() {
                return Err(Error::DuplicateKey(key));
            }
            inv.entries.push((key, category));
        }
        Ok(inv)
    }

    /// `marker<TAB>category` per line; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (marker, category) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected marker<TAB>category".into(),
            })?;
            if marker.trim().is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty marker".into(),
                });
            }
            entries.push((marker.trim().to_owned(), category.trim().to_owned()));
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn category(&self, marker: &str) -> Option<&str> {
        self.lookup.get(marker).map(|&i| self.entries[i].1.as_str())
    }

    fn contains(&self, key: &str) -> bool {
        self.lookup.contains_key(key)
    }
}

pub fn load_inventory(path: impl AsRef<Path>) -> Result<MarkerInventory> {
    MarkerInventory::parse(&fs::read_to_string(path)?)
}

/// Greedy left-to-right matching: at each token a two-word marker is tried
/// before a one-word marker; matched spans are consumed, so spans never
/// overlap.
pub fn match_markers(tokens: &[String], inventory: &MarkerInventory) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() {
            let bigram = format!("{} {}", tokens[i], tokens[i + 1]);
            if inventory.contains(&bigram) {
                out.push((bigram, i));
                i += 2;
                continue;
            }
        }
        if inventory.contains(&tokens[i]) {
            out.push((tokens[i].clone(), i));
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Periphery {
    Lp,
    Medial,
    Rp,
}

impl Periphery {
    pub const ALL: [Periphery; 3] = [Periphery::Lp, Periphery::Medial, Periphery::Rp];

    pub fn from_position(position: f64) -> Self {
        if position < LP_THRESHOLD {
            Periphery::Lp
        } else if position > RP_THRESHOLD {
            Periphery::Rp
        } else {
            Periphery::Medial
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Periphery::Lp => "LP",
            Periphery::Medial => "medial",
            Periphery::Rp => "RP",
        }
    }
}

impl fmt::Display for Periphery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `start / (n - 1)`, or 0.0 (left periphery) for one-token utterances.
pub fn position_and_periphery(start: usize, n_tokens: usize) -> Result<(f64, Periphery)> {
    if start >= n_tokens {
        return Err(Error::Index(format!(
            "marker start {start} in an utterance of {n_tokens} tokens"
        )));
    }
    let position = if n_tokens == 1 {
        0.0
    } else {
        start as f64 / (n_tokens - 1) as f64
    };
    Ok((position, Periphery::from_position(position)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerOccurrence {
    pub dialogue_id: String,
    pub utt_id: String,
    pub turn_index: usize,
    pub marker: String,
    pub category: String,
    pub emotion: Option<Emotion>,
    pub start: usize,
    pub n_tokens: usize,
    pub position: f64,
    pub periphery: Periphery,
}

impl MarkerOccurrence {
    pub fn single_token(&self) -> bool {
        self.n_tokens == 1
    }
}

/// Every marker occurrence in the corpus, in (dialogue, turn, start) order.
pub fn scan_corpus(
    corpus: &Corpus,
    taxonomy: Taxonomy,
    inventory: &MarkerInventory,
) -> Vec<MarkerOccurrence> {
    let mut out = Vec::new();
    for (d, u) in corpus.utterances() {
        let tokens = tokenize(&u.text);
        for (marker, start) in match_markers(&tokens, inventory) {
            let (position, periphery) = position_and_periphery(start, tokens.len())
                .expect("matches lie inside the token list");
            out.push(MarkerOccurrence {
                dialogue_id: d.dialogue_id.clone(),
                utt_id: u.utt_id.clone(),
                turn_index: u.turn_index,
                category: inventory.category(&marker).unwrap_or_default().to_owned(),
                marker,
                emotion: u.label(taxonomy),
                start,
                n_tokens: tokens.len(),
                position,
                periphery,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DmOptions {
    /// Drop occurrences in one-token utterances from the analysis set.
    #[serde(default)]
    pub exclude_single_token: bool,
    /// Restrict the analysis set to these markers.
    #[serde(default)]
    pub markers: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub marker: String,
    pub category: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    /// All occurrences in the corpus, labelled or not.
    pub all: usize,
    /// Occurrences in utterances labelled in the taxonomy.
    pub labelled: usize,
    /// Labelled occurrences in one-token utterances.
    pub single_token: usize,
    /// Size of the analysis set after the optional filters.
    pub analysed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionShares {
    pub emotion: Emotion,
    pub n: usize,
    pub lp: f64,
    pub medial: f64,
    pub rp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: Emotion,
    pub b: Emotion,
    /// LP share of `a` minus LP share of `b`.
    pub lp_difference: f64,
    pub report: StatReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmReport {
    pub taxonomy: Taxonomy,
    pub options: DmOptions,
    pub counts: Counts,
    pub frequencies: Vec<FrequencyRow>,
    /// Rows are emotions with at least one occurrence; columns LP, medial, RP.
    pub contingency_rows: Vec<Emotion>,
    pub contingency: Vec<[u64; 3]>,
    pub association: Option<StatReport>,
    pub position_anova: Option<StatReport>,
    /// Pairwise 2 x 3 periphery χ² tests, Bonferroni over all pairs.
    pub pairwise_method: String,
    pub pairwise: Vec<PairwiseTest>,
    pub shares: Vec<EmotionShares>,
    pub notes: Vec<String>,
}

fn contingency_without_empty_columns(rows: &[[u64; 3]]) -> Vec<Vec<u64>> {
    let keep: Vec<usize> = (0..3).filter(|&j| rows.iter().any(|r| r[j] > 0)).collect();
    rows.iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect()
}

fn chi_square_if_testable(table: &[Vec<u64>]) -> Result<Option<StatReport>> {
    if table.len() < 2 || table.first().map_or(0, Vec::len) < 2 {
        return Ok(None);
    }
    chi_square_cramers_v(table).map(Some)
}

pub fn dm_report(
    corpus: &Corpus,
    taxonomy: Taxonomy,
    inventory: &MarkerInventory,
    options: &DmOptions,
) -> Result<(DmReport, Vec<MarkerOccurrence>)> {
    let all = scan_corpus(corpus, taxonomy, inventory);
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &all {
        *freq.entry(o.marker.as_str()).or_default() += 1;
    }
    let frequencies = inventory
        .entries()
        .iter()
        .map(|(m, c)| FrequencyRow {
            marker: m.clone(),
            category: c.clone(),
            count: freq.get(m.as_str()).copied().unwrap_or(0),
        })
        .collect();
    let labelled: Vec<&MarkerOccurrence> = all.iter().filter(|o| o.emotion.is_some()).collect();
    let single_token = labelled.iter().filter(|o| o.single_token()).count();
    let analysed: Vec<MarkerOccurrence> = labelled
        .iter()
        .filter(|o| !(options.exclude_single_token && o.single_token()))
        .filter(|o| {
            options
                .markers
                .as_ref()
                .is_none_or(|set| set.contains(&o.marker))
        })
        .map(|&o| o.clone())
        .collect();
    let counts = Counts {
        all: all.len(),
        labelled: labelled.len(),
        single_token,
        analysed: analysed.len(),
    };
    info!(
        "{} marker occurrences, {} labelled, {} analysed ({} in one-token utterances)",
        counts.all, counts.labelled, counts.analysed, counts.single_token
    );
    let mut report = DmReport {
        taxonomy,
        options: options.clone(),
        counts,
        frequencies,
        contingency_rows: Vec::new(),
        contingency: Vec::new(),
        association: None,
        position_anova: None,
        pairwise_method:
            "pairwise 2x3 chi-square (emotion pair x periphery), Bonferroni over all pairs".into(),
        pairwise: Vec::new(),
        shares: Vec::new(),
        notes: Vec::new(),
    };
    if analysed.is_empty() {
        warn!("no marker occurrences in the analysis set; no tests run");
        report
            .notes
            .push("no marker occurrences in the analysis set; no tests run".into());
        return Ok((report, all));
    }

    let mut by_emotion: BTreeMap<usize, ([u64; 3], Vec<f64>)> = BTreeMap::new();
    for o in &analysed {
        let e = o.emotion.expect("analysis set is labelled");
        let idx = taxonomy
            .class_index(e)
            .expect("labels belong to the taxonomy");
        let entry = by_emotion.entry(idx).or_default();
        entry.0[o.periphery as usize] += 1;
        entry.1.push(o.position);
    }
    let classes = taxonomy.classes();
    report.contingency_rows = by_emotion.keys().map(|&i| classes[i]).collect();
    report.contingency = by_emotion.values().map(|(c, _)| *c).collect();
    for (&i, (c, _)) in &by_emotion {
        let n: u64 = c.iter().sum();
        let share = |k: usize| c[k] as f64 / n as f64;
        report.shares.push(EmotionShares {
            emotion: classes[i],
            n: n as usize,
            lp: share(0),
            medial: share(1),
            rp: share(2),
        });
    }

    let table = contingency_without_empty_columns(&report.contingency);
    report.association = chi_square_if_testable(&table)?;
    if report.association.is_none() {
        report.notes.push(
            "emotion x periphery table smaller than 2 x 2 after dropping empty rows/columns".into(),
        );
    }

    let groups: Vec<Vec<f64>> = by_emotion
        .values()
        .map(|(_, p)| p.clone())
        .filter(|p| p.len() >= 2)
        .collect();
    if groups.len() >= 2 {
        report.position_anova = Some(anova_oneway(&groups)?);
        if groups.len() < by_emotion.len() {
            report.notes.push(
                "emotions with fewer than 2 occurrences left out of the position ANOVA".into(),
            );
        }
    } else {
        report
            .notes
            .push("position ANOVA needs two emotions with at least 2 occurrences".into());
    }

    let keys: Vec<usize> = by_emotion.keys().copied().collect();
    let m = keys.len() * keys.len().saturating_sub(1) / 2;
    for (x, &a) in keys.iter().enumerate() {
        for &b in &keys[x + 1..] {
            let pair = [by_emotion[&a].0, by_emotion[&b].0];
            let Some(raw) = chi_square_if_testable(&contingency_without_empty_columns(&pair))?
            else {
                report.notes.push(format!(
                    "{} vs {}: all occurrences in one periphery class; no test",
                    classes[a], classes[b]
                ));
                continue;
            };
            let share = |c: [u64; 3]| c[0] as f64 / c.iter().sum::<u64>() as f64;
            let p = crate::stats::bonferroni(&[raw.p_value], Some(m))?[0];
            report.pairwise.push(PairwiseTest {
                a: classes[a],
                b: classes[b],
                lp_difference: share(pair[0]) - share(pair[1]),
                report: StatReport {
                    p_value: p,
                    correction: Correction::Bonferroni { m },
                    ..raw
                },
            });
        }
    }
    Ok((report, all))
}

/// One row per occurrence, preceded by the `#` metadata line.
pub fn occurrences_csv(occurrences: &[MarkerOccurrence], header: &str) -> String {
    let mut out = header.to_owned();
    out.push_str(
        "dialogue_id,utt_id,turn_index,marker,category,emotion,start,n_tokens,position,periphery\n",
    );
    for o in occurrences {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            o.dialogue_id,
            o.utt_id,
            o.turn_index,
            o.marker,
            o.category,
            o.emotion.map_or("", Emotion::as_str),
            o.start,
            o.n_tokens,
            o.position,
            o.periphery
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Utterance};
    use crate::synth::discourse_corpus;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn spans(words: &[&str]) -> Vec<(String, usize)> {
        match_markers(&toks(words), &MarkerInventory::default())
    }

    #[test]
    fn default_inventory_has_twenty_markers() {
        let inv = MarkerInventory::default();
        assert_eq!(inv.len(), 20);
        assert_eq!(inv.category("you know"), Some("intersubjective"));
    }

    #[test]
    fn longest_match_examples() {
        assert_eq!(
            spans(&["well", "i", "mean", "fine"]),
            [("well".into(), 0), ("i mean".into(), 1)]
        );
        assert_eq!(
            spans(&["you", "know", "so"]),
            [("you know".into(), 0), ("so".into(), 2)]
        );
        assert_eq!(spans(&["i", "i", "think"]), [("i think".into(), 1)]);
        assert!(spans(&[]).is_empty());
    }

    #[test]
    fn periphery_examples() {
        assert_eq!(position_and_periphery(0, 7).unwrap(), (0.0, Periphery::Lp));
        assert_eq!(
            position_and_periphery(3, 7).unwrap(),
            (0.5, Periphery::Medial)
        );
        assert_eq!(position_and_periphery(6, 7).unwrap(), (1.0, Periphery::Rp));
        assert_eq!(position_and_periphery(0, 1).unwrap(), (0.0, Periphery::Lp));
        assert!(matches!(position_and_periphery(7, 7), Err(Error::Index(_))));
    }

    #[test]
    fn inventory_file_format() {
        let inv = MarkerInventory::parse("# custom\nWell\tturn\n\nyou know\tinter\n").unwrap();
        assert_eq!(inv.entries()[0].0, "well");
        assert!(matches!(
            MarkerInventory::parse("so\tx\nso\ty\n"),
            Err(Error::DuplicateKey(_))
        ));
        assert!(matches!(
            MarkerInventory::parse("so x\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(MarkerInventory::parse("a b c\tx\n").is_err());
    }

    #[test]
    fn empty_report_when_no_markers() {
        let corpus = Corpus::new(vec![Dialogue {
            dialogue_id: "d".into(),
            session: 1,
            utterances: vec![Utterance {
                utt_id: "u".into(),
                turn_index: 0,
                speaker: "A".into(),
                text: "red table".into(),
                sentences: vec!["red table".into()],
                label4: Some(Emotion::Sad),
                label6: None,
            }],
        }])
        .unwrap();
        let (r, occ) = dm_report(
            &corpus,
            Taxonomy::FourWay,
            &MarkerInventory::default(),
            &DmOptions::default(),
        )
        .unwrap();
        assert!(occ.is_empty());
        assert!(r.association.is_none() && r.pairwise.is_empty());
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn periphery_counts_sum_to_analysis_set() {
        let c = discourse_corpus(30, &["well", "you know", "so"], Some(Emotion::Sad), 2).unwrap();
        let (r, _) = dm_report(
            &c,
            Taxonomy::FourWay,
            &MarkerInventory::default(),
            &DmOptions::default(),
        )
        .unwrap();
        let total: u64 = r.contingency.iter().flatten().sum();
        assert_eq!(total as usize, r.counts.analysed);
        assert_eq!(r.counts.analysed, 120);
        assert_eq!(r.pairwise.len(), 6);
    }

    #[test]
    fn marker_filter_restricts_analysis() {
        let c = discourse_corpus(30, &["well", "so"], None, 2).unwrap();
        let opts = DmOptions {
            markers: Some(["well".to_owned()].into()),
            ..DmOptions::default()
        };
        let (r, _) = dm_report(&c, Taxonomy::FourWay, &MarkerInventory::default(), &opts).unwrap();
        assert_eq!(r.counts.all, 120);
        assert_eq!(r.counts.analysed, 60);
    }
}
