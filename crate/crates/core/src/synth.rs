//! Synthetic corpora and embedding stores with known structure, for
//! end-to-end checks that do not need licensed data or encoders.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, Dialogue, Emotion, Taxonomy, Utterance};
use crate::embedding::{EmbeddingStore, LayerMode, TokenMatrix};
use crate::error::{Error, Result};
use crate::rng::PrngStream;
use crate::text::whitespace_token_count;

/// Filler vocabulary; none of these words belong to the default marker
/// inventory.
const WORDS: [&str; 30] = [
    "red", "table", "window", "river", "paper", "green", "seven", "train", "coffee", "garden",
    "music", "phone", "letter", "city", "water", "stone", "movie", "bread", "chair", "cloud",
    "house", "street", "friend", "morning", "dinner", "ticket", "bottle", "sister", "doctor",
    "office",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalPlacement {
    AllTokens,
    FinalToken,
    InitialToken,
}

/// Additive per-label directions for [`synth_store`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMap {
    pub taxonomy: Taxonomy,
    pub directions: BTreeMap<Emotion, Vec<f64>>,
    pub placement: SignalPlacement,
}

impl SignalMap {
    /// Class `i` of the taxonomy gets `scale` on coordinate `i`.
    pub fn orthogonal(
        taxonomy: Taxonomy,
        dim: usize,
        scale: f64,
        placement: SignalPlacement,
    ) -> Result<Self> {
        let classes = taxonomy.classes();
        if dim < classes.len() {
            return Err(Error::Domain(format!(
                "dim {dim} too small for {} orthogonal directions",
                classes.len()
            )));
        }
        let directions = classes
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let mut v = vec![0.0; dim];
                v[i] = scale;
                (e, v)
            })
            .collect();
        Ok(Self {
            taxonomy,
            directions,
            placement,
        })
    }
}

fn noise_matrix(seed: u64, key: &str, n: usize, dim: usize) -> Vec<f64> {
    let mut rng = PrngStream::derive(seed, "synth", key);
    (0..n * dim).map(|_| rng.normal()).collect()
}

fn add_signal(data: &mut [f64], n: usize, dim: usize, signal: &[f64], placement: SignalPlacement) {
    let rows: Vec<usize> = match placement {
        SignalPlacement::AllTokens => (0..n).collect(),
        SignalPlacement::FinalToken => vec![n - 1],
        SignalPlacement::InitialToken => vec![0],
    };
    for r in rows {
        data[r * dim..(r + 1) * dim]
            .iter_mut()
            .zip(signal)
            .for_each(|(x, s)| *x += s);
    }
}

/// Store with one record per utterance and per sentence: standard-normal
/// token rows (token count = whitespace token count of the unit text) drawn
/// from a stream keyed by the record key, plus `signal(utterance)` placed on
/// the chosen tokens of every unit of that utterance.
pub fn synth_store_with<F>(
    corpus: &Corpus,
    dim: usize,
    seed: u64,
    placement: SignalPlacement,
    signal: F,
) -> Result<EmbeddingStore>
where
    F: Fn(&Utterance) -> Option<Vec<f64>>,
{
    if dim < 4 {
        return Err(Error::Domain(format!(
            "synthetic stores need dim >= 4, got {dim}"
        )));
    }
    let mut store = EmbeddingStore::new(dim, LayerMode::Last)?;
    for (_, utt) in corpus.utterances() {
        let extra = signal(utt);
        if let Some(s) = &extra {
            if s.len() != dim {
                return Err(Error::Shape(format!(
                    "signal of length {} for dim {dim}",
                    s.len()
                )));
            }
        }
        let units = std::iter::once((utt.utt_id.clone(), utt.text.as_str())).chain(
            utt.sentences
                .iter()
                .enumerate()
                .map(|(i, s)| (utt.sentence_key(i), s.as_str())),
        );
        for (key, text) in units {
            let n = whitespace_token_count(text).max(1);
            let mut data = noise_matrix(seed, &key, n, dim);
            if let Some(s) = &extra {
                add_signal(&mut data, n, dim, s, placement);
            }
            store.insert(
                key,
                TokenMatrix::new(n, dim, data.into_iter().map(|x| x as f32).collect())?,
            )?;
        }
    }
    Ok(store)
}

/// Label-driven store: each utterance labelled in `signal_map.taxonomy`
/// receives its class direction.
pub fn synth_store(
    corpus: &Corpus,
    dim: usize,
    seed: u64,
    signal_map: Option<&SignalMap>,
) -> Result<EmbeddingStore> {
    let placement = signal_map.map_or(SignalPlacement::AllTokens, |m| m.placement);
    synth_store_with(corpus, dim, seed, placement, |u| {
        let m = signal_map?;
        m.directions.get(&u.label(m.taxonomy)?).cloned()
    })
}

fn sentence(rng: &mut PrngStream, words: usize) -> String {
    (0..words)
        .map(|_| WORDS[rng.below(WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn utterance(
    dialogue: &str,
    turn: usize,
    text_rng: &mut PrngStream,
    label: Option<Emotion>,
) -> Utterance {
    let n_sent = 1 + text_rng.below(2);
    let sentences: Vec<String> = (0..n_sent)
        .map(|_| {
            let words = 3 + text_rng.below(6);
            sentence(text_rng, words)
        })
        .collect();
    Utterance {
        utt_id: format!("{dialogue}_u{turn:03}"),
        turn_index: turn,
        speaker: if turn.is_multiple_of(2) { "A" } else { "B" }.to_owned(),
        text: sentences.join(" "),
        sentences,
        label4: label,
        label6: label,
    }
}

/// Label-free corpus skeleton: `dialogues` dialogues spread round-robin over
/// sessions 1..=5, with lengths drawn uniformly from `turns`.
pub fn random_corpus(
    dialogues: usize,
    turns: std::ops::RangeInclusive<usize>,
    seed: u64,
    mut label: impl FnMut(&mut PrngStream) -> Option<Emotion>,
) -> Result<Corpus> {
    let mut rng = PrngStream::new(seed, "synth/corpus");
    let span = turns.end() - turns.start() + 1;
    let out = (0..dialogues)
        .map(|d| {
            let id = format!("synth_d{d:04}");
            let n = turns.start() + rng.below(span);
            let utterances = (0..n).map(|t| {
                let l = label(&mut rng);
                utterance(&id, t, &mut rng, l)
            });
            Dialogue {
                session: (d % 5) as u32 + 1,
                utterances: utterances.collect(),
                dialogue_id: id,
            }
        })
        .collect();
    Corpus::new(out)
}

/// Latent per-turn state of the context-dependent generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Latent {
    /// Index into [`ContextCorpus::APPEARANCE`].
    pub appearance: usize,
    pub trigger: bool,
}

/// Four-class corpus in which one class can only be told apart from another
/// by looking back: a turn that *looks* neutral is labelled sad whenever any
/// of the previous `lag` turns carried a trigger.
#[derive(Debug, Clone)]
pub struct ContextCorpus {
    pub corpus: Corpus,
    pub latents: BTreeMap<String, Latent>,
    pub lag: usize,
}

impl ContextCorpus {
    pub const APPEARANCE: [Emotion; 3] = [Emotion::Angry, Emotion::Happy, Emotion::Neutral];

    /// With `trigger_p` = 1 − 0.5^(1/5) ≈ 0.129 and `lag` = 5, about half of
    /// the neutral-looking turns are relabelled.
    pub fn generate(dialogues: usize, lag: usize, trigger_p: f64, seed: u64) -> Result<Self> {
        let mut rng = PrngStream::new(seed, "synth/context");
        let mut dialogs = Vec::with_capacity(dialogues);
        let mut latents = BTreeMap::new();
        for d in 0..dialogues {
            let id = format!("ctx_d{d:04}");
            let n = 10 + rng.below(11);
            let mut history: Vec<Latent> = Vec::with_capacity(n);
            let mut utts = Vec::with_capacity(n);
            for t in 0..n {
                let u = rng.next_f64();
                let appearance = if u < 0.25 {
                    0
                } else if u < 0.5 {
                    1
                } else {
                    2
                };
                let latent = Latent {
                    appearance,
                    trigger: rng.bernoulli(trigger_p),
                };
                let recent = history.iter().rev().take(lag).any(|l| l.trigger);
                let label = match (Self::APPEARANCE[appearance], recent) {
                    (Emotion::Neutral, true) => Emotion::Sad,
                    (e, _) => e,
                };
                let utt = utterance(&id, t, &mut rng, Some(label));
                latents.insert(utt.utt_id.clone(), latent);
                utts.push(utt);
                history.push(latent);
            }
            dialogs.push(Dialogue {
                dialogue_id: id,
                session: (d % 5) as u32 + 1,
                utterances: utts,
            });
        }
        Ok(Self {
            corpus: Corpus::new(dialogs)?,
            latents,
            lag,
        })
    }

    /// Appearance direction on coordinates 0..3 and the trigger on
    /// coordinate 3, each with amplitude `scale`, on every token.
    pub fn store(&self, dim: usize, seed: u64, scale: f64) -> Result<EmbeddingStore> {
        synth_store_with(&self.corpus, dim, seed, SignalPlacement::AllTokens, |u| {
            let l = self.latents.get(&u.utt_id)?;
            let mut v = vec![0.0; dim];
            v[l.appearance] = scale;
            if l.trigger {
                v[3] = scale;
            }
            Some(v)
        })
    }
}

/// Corpus whose class signal sits on the utterance-final token only.
pub fn positional_corpus(
    dialogues: usize,
    dim: usize,
    scale: f64,
    seed: u64,
) -> Result<(Corpus, EmbeddingStore)> {
    let classes = Taxonomy::FourWay.classes();
    let corpus = random_corpus(dialogues, 6..=10, seed, |rng| {
        Some(classes[rng.below(classes.len())])
    })?;
    let map = SignalMap::orthogonal(Taxonomy::FourWay, dim, scale, SignalPlacement::FinalToken)?;
    let store = synth_store(&corpus, dim, seed, Some(&map))?;
    Ok((corpus, store))
}

/// Single-marker utterances for the periphery analysis: every labelled
/// utterance carries exactly one marker. Without skew, each emotion's
/// markers cycle start / middle / end, so all emotions share one periphery
/// profile. With `medial` set, that emotion's markers are always medial.
pub fn discourse_corpus(
    per_emotion: usize,
    markers: &[&str],
    medial: Option<Emotion>,
    seed: u64,
) -> Result<Corpus> {
    if markers.is_empty() {
        return Err(Error::Config(
            "discourse generator needs at least one marker".into(),
        ));
    }
    let mut rng = PrngStream::new(seed, "synth/discourse");
    let classes = Taxonomy::FourWay.classes();
    let mut dialogues = Vec::new();
    for (ci, &emotion) in classes.iter().enumerate() {
        for chunk in 0..per_emotion.div_ceil(10) {
            let id = format!("dm_{}_{chunk:03}", emotion.as_str());
            let mut utts = Vec::new();
            for t in 0..10.min(per_emotion - chunk * 10) {
                let i = chunk * 10 + t;
                let marker = markers[(i + ci) % markers.len()];
                let n_fill = 6 + rng.below(5);
                let mut words: Vec<String> = (0..n_fill)
                    .map(|_| WORDS[rng.below(WORDS.len())].to_owned())
                    .collect();
                let slot = match (medial == Some(emotion), i % 3) {
                    (true, _) | (false, 1) => n_fill / 2,
                    (false, 0) => 0,
                    _ => n_fill,
                };
                words.insert(slot, marker.to_owned());
                let text = words.join(" ");
                utts.push(Utterance {
                    utt_id: format!("{id}_u{t:02}"),
                    turn_index: t,
                    speaker: if t.is_multiple_of(2) { "A" } else { "B" }.to_owned(),
                    sentences: vec![text.clone()],
                    text,
                    label4: Some(emotion),
                    label6: Some(emotion),
                });
            }
            dialogues.push(Dialogue {
                dialogue_id: id,
                session: (chunk % 5) as u32 + 1,
                utterances: utts,
            });
        }
    }
    Corpus::new(dialogues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{pool_tokens, PoolingKind};

    fn tiny() -> Corpus {
        random_corpus(6, 3..=5, 1, |rng| {
            Some(Taxonomy::FourWay.classes()[rng.below(4)])
        })
        .unwrap()
    }

    #[test]
    fn store_is_deterministic() {
        let c = tiny();
        let map =
            SignalMap::orthogonal(Taxonomy::FourWay, 8, 3.0, SignalPlacement::AllTokens).unwrap();
        let mut a = Vec::new();
        synth_store(&c, 8, 9, Some(&map))
            .unwrap()
            .write_to(&mut a)
            .unwrap();
        let mut b = Vec::new();
        synth_store(&c, 8, 9, Some(&map))
            .unwrap()
            .write_to(&mut b)
            .unwrap();
        assert_eq!(a, b);
        let mut other = Vec::new();
        synth_store(&c, 8, 10, Some(&map))
            .unwrap()
            .write_to(&mut other)
            .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn token_counts_follow_text() {
        let c = tiny();
        let s = synth_store(&c, 4, 0, None).unwrap();
        for (_, u) in c.utterances() {
            assert_eq!(
                s.get(&u.utt_id).unwrap().n_tokens,
                whitespace_token_count(&u.text)
            );
            for (i, sent) in u.sentences.iter().enumerate() {
                assert_eq!(
                    s.get(&u.sentence_key(i)).unwrap().n_tokens,
                    whitespace_token_count(sent)
                );
            }
        }
    }

    #[test]
    fn small_dim_rejected() {
        assert!(matches!(
            synth_store(&tiny(), 3, 0, None),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn final_token_signal() {
        let (corpus, store) = positional_corpus(5, 8, 10.0, 3).unwrap();
        for (_, u) in corpus.utterances() {
            let m = store.get(&u.utt_id).unwrap();
            let c = Taxonomy::FourWay.class_index(u.label4.unwrap()).unwrap();
            assert!(m.row(m.n_tokens - 1)[c] > 5.0);
            let forward = pool_tokens(m, PoolingKind::WmeanPos).unwrap();
            let reverse = pool_tokens(m, PoolingKind::WmeanPosRev).unwrap();
            assert!(forward[c] > reverse[c]);
        }
    }

    #[test]
    fn context_labels_follow_the_rule() {
        let g = ContextCorpus::generate(30, 5, 0.13, 4).unwrap();
        let mut counts = BTreeMap::new();
        for d in &g.corpus.dialogues {
            for (t, u) in d.utterances.iter().enumerate() {
                let l = g.latents[&u.utt_id];
                let recent = d.utterances[t.saturating_sub(5)..t]
                    .iter()
                    .any(|p| g.latents[&p.utt_id].trigger);
                let expected = if l.appearance == 2 && recent {
                    Emotion::Sad
                } else {
                    ContextCorpus::APPEARANCE[l.appearance]
                };
                assert_eq!(u.label4, Some(expected));
                *counts.entry(expected).or_insert(0) += 1;
            }
        }
        assert_eq!(counts.len(), 4);
    }

    #[test]
    fn discourse_corpus_layout() {
        let c = discourse_corpus(12, &["well", "so"], Some(Emotion::Sad), 0).unwrap();
        assert_eq!(c.utterance_count(), 48);
        for (_, u) in c.utterances() {
            let words: Vec<&str> = u.text.split(' ').collect();
            let pos = words
                .iter()
                .position(|w| *w == "well" || *w == "so")
                .unwrap();
            if u.label4 == Some(Emotion::Sad) {
                assert!(pos > 0 && pos < words.len() - 1);
            }
        }
    }
}
