//! SenticNet-style affect lexicon: 4-d (pleasantness, attention, sensitivity,
//! aptitude) ratings per concept, utterance-level affect vectors, and fusion
//! with encoder representations.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const AFFECT_DIM: usize = 4;

pub type AffectVector = [f64; AFFECT_DIM];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenticLexicon {
    entries: HashMap<String, AffectVector>,
    max_words: usize,
}

impl SenticLexicon {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, concept: &str) -> Option<&AffectVector> {
        self.entries.get(concept)
    }

    /// Insert or replace a concept. Returns true when an entry was replaced.
    pub fn insert(&mut self, concept: &str, values: AffectVector) -> Result<bool> {
        let key = concept.trim().to_lowercase();
        if key.is_empty() {
            return Err(Error::Range("empty concept".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::Range(format!("{key}: value {v} outside [-1, 1]")));
        }
        self.max_words = self.max_words.max(key.split_whitespace().count());
        Ok(self.entries.insert(key, values).is_some())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 1 + AFFECT_DIM {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 5 tab-separated fields, found {}", fields.len()),
                });
            }
            let mut values = [0.0; AFFECT_DIM];
            for (slot, raw) in values.iter_mut().zip(&fields[1..]) {
                *slot = raw.trim().parse().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad number '{raw}': {e}"),
                })?;
            }
            let replaced = lex.insert(fields[0], values).map_err(|e| match e {
                Error::Range(m) => Error::Range(format!("line {line_no}: {m}")),
                other => other,
            })?;
            if replaced {
                warn!(
                    "line {line_no}: duplicate concept '{}', keeping the later entry",
                    fields[0].trim()
                );
            }
        }
        Ok(lex)
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<SenticLexicon> {
    SenticLexicon::parse(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affect {
    pub vector: AffectVector,
    pub matched: usize,
    pub tokens: usize,
}

impl Affect {
    pub fn coverage(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.matched as f64 / self.tokens as f64
        }
    }
}

/// Mean of the lexicon vectors of all matched words; zero when nothing
/// matches. With `multi_word` set, longer concepts are matched greedily
/// before single words.
pub fn utterance_affect(text: &str, lex: &SenticLexicon, multi_word: bool) -> Affect {
    let tokens = tokenize(text);
    let mut sum = [0.0; AFFECT_DIM];
    let mut matched = 0;
    let mut concepts = 0usize;
    let longest = if multi_word { lex.max_words.max(1) } else { 1 };
    let mut i = 0;
    while i < tokens.len() {
        let mut step = 1;
        for len in (1..=longest.min(tokens.len() - i)).rev() {
            let key = tokens[i..i + len].join(" ");
            if let Some(v) = lex.get(&key) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                matched += len;
                concepts += 1;
                step = len;
                break;
            }
        }
        i += step;
    }
    let vector = if concepts == 0 {
        [0.0; AFFECT_DIM]
    } else {
        sum.map(|s| s / concepts as f64)
    };
    Affect {
        vector,
        matched,
        tokens: tokens.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionSpec {
    #[default]
    None,
    Concat,
    /// `(1 - alpha) * e_ctx + alpha * P e_sentic`, with `P` a learned 4 -> d map.
    Blend {
        alpha: f64,
    },
}

impl FusionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FusionSpec::Blend { alpha } if !(0.0..=1.0).contains(alpha) => {
                Err(Error::Config(format!("blend alpha {alpha} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            FusionSpec::Concat => d + AFFECT_DIM,
            _ => d,
        }
    }

    pub fn uses_lexicon(&self) -> bool {
        !matches!(self, FusionSpec::None)
    }

    /// Standard fusion grid: five blend weights plus concatenation.
    pub fn appendix_grid() -> Vec<FusionSpec> {
        let mut grid: Vec<FusionSpec> = [0.05, 0.1, 0.2, 0.5, 1.0]
            .into_iter()
            .map(|alpha| FusionSpec::Blend { alpha })
            .collect();
        grid.push(FusionSpec::Concat);
        grid
    }
}

impl fmt::Display for FusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionSpec::None => f.write_str("none"),
            FusionSpec::Concat => f.write_str("concat"),
            FusionSpec::Blend { alpha } => write!(f, "blend:{alpha}"),
        }
    }
}

impl FromStr for FusionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spec = match s {
            "none" => FusionSpec::None,
            "concat" => FusionSpec::Concat,
            other => {
                let alpha = other
                    .strip_prefix("blend:")
                    .ok_or_else(|| {
                        format!("unknown fusion '{other}' (none, concat, blend:<alpha>)")
                    })?
                    .parse::<f64>()
                    .map_err(|e| format!("bad blend alpha: {e}"))?;
                FusionSpec::Blend { alpha }
            }
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

/// Fuse a context vector with an affect vector. `projection` is the row-major
/// `d x 4` blend matrix and is only read for [`FusionSpec::Blend`].
pub fn fuse(
    e_ctx: &[f64],
    e_sentic: &AffectVector,
    spec: FusionSpec,
    projection: Option<&[f64]>,
) -> Result<Vec<f64>> {
    match spec {
        FusionSpec::None => Ok(e_ctx.to_vec()),
        FusionSpec::Concat => Ok(e_ctx.iter().chain(e_sentic).copied().collect()),
        FusionSpec::Blend { alpha } => {
            let d = e_ctx.len();
            let p =
                projection.ok_or_else(|| Error::Shape("blend fusion needs a projection".into()))?;
            if p.len() != d * AFFECT_DIM {
                return Err(Error::Shape(format!(
                    "projection has {} values, expected {d}x{AFFECT_DIM}",
                    p.len()
                )));
            }
            Ok(e_ctx
                .iter()
                .zip(p.chunks_exact(AFFECT_DIM))
                .map(|(&e, row)| {
                    let projected: f64 = row.iter().zip(e_sentic).map(|(a, b)| a * b).sum();
                    (1.0 - alpha) * e + alpha * projected
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str =
        "good\t0.5\t-0.2\t0\t0.1\nbad\t-0.8\t0.1\t0.3\t-0.5\nhappy day\t0.9\t0.2\t0.1\t0.4\n";

    #[test]
    fn parses_valid_lines() {
        assert_eq!(SenticLexicon::parse(SAMPLE).unwrap().len(), 3);
    }

    #[test]
    fn out_of_range_value_rejected() {
        assert!(matches!(
            SenticLexicon::parse("x\t1.5\t0\t0\t0\n"),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn malformed_line_has_line_number() {
        match SenticLexicon::parse("good\t0\t0\t0\t0\nbad\t0\t0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_last_wins() {
        let lex = SenticLexicon::parse("Good\t0.1\t0\t0\t0\ngood \t0.2\t0\t0\t0\n").unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.get("good").unwrap()[0], 0.2);
    }

    #[test]
    fn affect_examples() {
        let lex = SenticLexicon::parse(SAMPLE).unwrap();
        let none = utterance_affect("nothing here at all", &lex, false);
        assert_eq!(none.vector, [0.0; 4]);
        assert_eq!(none.coverage(), 0.0);

        let one = utterance_affect("a good one", &lex, false);
        assert_eq!(one.vector, [0.5, -0.2, 0.0, 0.1]);
        assert!((one.coverage() - 1.0 / 3.0).abs() < 1e-15);

        let lex2 = SenticLexicon::parse("up\t1\t0\t0\t0\ndown\t0\t1\t0\t0\n").unwrap();
        assert_eq!(
            utterance_affect("up and down", &lex2, false).vector,
            [0.5, 0.5, 0.0, 0.0]
        );
    }

    #[test]
    fn multi_word_is_opt_in() {
        let lex = SenticLexicon::parse(SAMPLE).unwrap();
        assert_eq!(utterance_affect("happy day", &lex, false).matched, 0);
        let a = utterance_affect("happy day", &lex, true);
        assert_eq!(a.vector, [0.9, 0.2, 0.1, 0.4]);
        assert_eq!(a.matched, 2);
    }

    #[test]
    fn fusion_examples() {
        let e = [1.0, 2.0];
        assert_eq!(
            fuse(&e, &[0.0; 4], FusionSpec::Concat, None).unwrap(),
            [1.0, 2.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(fuse(&e, &[0.3; 4], FusionSpec::None, None).unwrap(), e);
        let p = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let s = [0.25, -0.5, 0.9, 0.1];
        assert_eq!(
            fuse(&e, &s, FusionSpec::Blend { alpha: 0.0 }, Some(&p)).unwrap(),
            e
        );
        assert_eq!(
            fuse(&e, &s, FusionSpec::Blend { alpha: 1.0 }, Some(&p)).unwrap(),
            [0.25, -0.5]
        );
        assert!(matches!(
            fuse(&e, &s, FusionSpec::Blend { alpha: 0.5 }, Some(&p[..4])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fusion_spec_parsing() {
        assert_eq!(
            "blend:0.2".parse::<FusionSpec>().unwrap(),
            FusionSpec::Blend { alpha: 0.2 }
        );
        assert_eq!("concat".parse::<FusionSpec>().unwrap(), FusionSpec::Concat);
        assert!("blend:1.5".parse::<FusionSpec>().is_err());
        assert!("mix".parse::<FusionSpec>().is_err());
        assert_eq!(FusionSpec::appendix_grid().len(), 6);
    }

    proptest! {
        #[test]
        fn blend_is_linear_in_alpha(e in prop::collection::vec(-5.0f64..5.0, 3), s in prop::array::uniform4(-1.0f64..1.0), p in prop::collection::vec(-1.0f64..1.0, 12), a in 0.0f64..0.5) {
            let at = |alpha| fuse(&e, &s, FusionSpec::Blend { alpha }, Some(&p)).unwrap();
            let (x0, x1, x2) = (at(a), at(a + 0.25), at(a + 0.5));
            for i in 0..3 {
                prop_assert!(((x1[i] - x0[i]) - (x2[i] - x1[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn affect_ignores_order_and_punctuation(words in prop::collection::vec(prop::sample::select(vec!["good", "bad", "meh", "ok"]), 0..10), seed in any::<u64>()) {
            let lex = SenticLexicon::parse(SAMPLE).unwrap();
            let base = utterance_affect(&words.join(" "), &lex, false);
            let mut shuffled = words.clone();
            crate::rng::PrngStream::new(seed, "p").shuffle(&mut shuffled);
            let noisy = shuffled.iter().map(|w| format!("{w}!")).collect::<Vec<_>>().join(" ");
            let other = utterance_affect(&noisy, &lex, false);
            prop_assert_eq!(base.matched, other.matched);
            for i in 0..4 {
                prop_assert!((base.vector[i] - other.vector[i]).abs() < 1e-12);
            }
        }
    }
}
