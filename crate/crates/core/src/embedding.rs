//! Token-embedding store (EMB1 files) and utterance-level pooling.
//!
//! EMB1 layout, little-endian throughout:
//!
//! ```text
//! "EMB1" | u32 version = 1 | u32 dim | u8 layer_mode (0 = last, 1 = avg_last4)
//! u64 record_count
//! per record: u16 key_len | key (UTF-8) | u32 n_tokens | n_tokens * dim f32, row-major
//! ```
//!
//! Keys are utterance ids for whole-utterance records and `utt_id#s<i>` for
//! the i-th sentence of an utterance.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerMode {
    Last,
    AvgLast4,
}

impl LayerMode {
    fn code(self) -> u8 {
        match self {
            LayerMode::Last => 0,
            LayerMode::AvgLast4 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(LayerMode::Last),
            1 => Ok(LayerMode::AvgLast4),
            other => Err(Error::Format(format!("unknown layer_mode byte {other}"))),
        }
    }
}

impl fmt::Display for LayerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerMode::Last => "last",
            LayerMode::AvgLast4 => "avg_last4",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub n_tokens: usize,
    pub dim: usize,
    /// Row-major, `n_tokens * dim` values.
    pub data: Vec<f32>,
}

impl TokenMatrix {
    pub fn new(n_tokens: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if n_tokens == 0 {
            return Err(Error::Domain("token matrix needs at least one row".into()));
        }
        if data.len() != n_tokens * dim {
            return Err(Error::Shape(format!(
                "{} values for {n_tokens}x{dim} matrix",
                data.len()
            )));
        }
        Ok(Self {
            n_tokens,
            dim,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    layer_mode: LayerMode,
    records: IndexMap<String, TokenMatrix>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, layer_mode: LayerMode) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("embedding dim must be positive".into()));
        }
        Ok(Self {
            dim,
            layer_mode,
            records: IndexMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_mode(&self) -> LayerMode {
        self.layer_mode
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&TokenMatrix> {
        self.records.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, m: TokenMatrix) -> Result<()> {
        let key = key.into();
        if m.dim != self.dim {
            return Err(Error::Shape(format!(
                "record {key} has width {}, store dim is {}",
                m.dim, self.dim
            )));
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "record {key} contains non-finite values"
            )));
        }
        if self.records.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        self.records.insert(key, m);
        Ok(())
    }

    fn require(&self, key: &str) -> Result<&TokenMatrix> {
        self.records
            .get(key)
            .ok_or_else(|| Error::MissingRecord(key.to_owned()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u8(self.layer_mode.code())?;
        w.write_u64::<LittleEndian>(self.records.len() as u64)?;
        for (key, m) in &self.records {
            let kb = key.as_bytes();
            let key_len = u16::try_from(kb.len())
                .map_err(|_| Error::Format(format!("key too long: {key}")))?;
            w.write_u16::<LittleEndian>(key_len)?;
            w.write_all(kb)?;
            w.write_u32::<LittleEndian>(m.n_tokens as u32)?;
            for &v in &m.data {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let layer_mode = LayerMode::from_code(r.read_u8().map_err(truncated)?)?;
        let count = r.read_u64::<LittleEndian>().map_err(truncated)?;
        let mut store = Self::new(dim, layer_mode).map_err(|_| Error::Format("dim is 0".into()))?;
        for _ in 0..count {
            let key_len = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
            let mut kb = vec![0u8; key_len];
            read_exact(&mut r, &mut kb)?;
            let key =
                String::from_utf8(kb).map_err(|e| Error::Format(format!("key not UTF-8: {e}")))?;
            let n_tokens = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            if n_tokens == 0 {
                return Err(Error::Format(format!("record {key} has zero tokens")));
            }
            let mut data = vec![0f32; n_tokens * dim];
            r.read_f32_into::<LittleEndian>(&mut data)
                .map_err(truncated)?;
            store.insert(
                key,
                TokenMatrix {
                    n_tokens,
                    dim,
                    data,
                },
            )?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after last record".into()));
        }
        Ok(store)
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Io(e)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(truncated)
}

pub fn open_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    EmbeddingStore::read_from(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingKind {
    Mean,
    /// Linear ramp favouring the last tokens.
    WmeanPos,
    /// Linear ramp favouring the first tokens.
    WmeanPosRev,
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingKind::Mean => "mean",
            PoolingKind::WmeanPos => "wmean_pos",
            PoolingKind::WmeanPosRev => "wmean_pos_rev",
        })
    }
}

impl FromStr for PoolingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(PoolingKind::Mean),
            "wmean_pos" => Ok(PoolingKind::WmeanPos),
            "wmean_pos_rev" => Ok(PoolingKind::WmeanPosRev),
            other => Err(format!("unknown pooling '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierAggregation {
    Mean,
    WmeanPos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EncodingSpec {
    Flat,
    Hier { aggregation: HierAggregation },
}

impl fmt::Display for EncodingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodingSpec::Flat => f.write_str("flat"),
            EncodingSpec::Hier {
                aggregation: HierAggregation::Mean,
            } => f.write_str("hier:mean"),
            EncodingSpec::Hier {
                aggregation: HierAggregation::WmeanPos,
            } => f.write_str("hier:wmean_pos"),
        }
    }
}

impl FromStr for EncodingSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(EncodingSpec::Flat),
            "hier" | "hier:mean" => Ok(EncodingSpec::Hier {
                aggregation: HierAggregation::Mean,
            }),
            "hier:wmean_pos" => Ok(EncodingSpec::Hier {
                aggregation: HierAggregation::WmeanPos,
            }),
            other => Err(format!(
                "unknown encoding '{other}' (flat, hier, hier:mean, hier:wmean_pos)"
            )),
        }
    }
}

/// Normalised linear ramp: `w_i = (i + 1) / (n (n + 1) / 2)` going forward,
/// mirrored for [`Direction::Reverse`].
pub fn position_weights(n: usize, direction: Direction) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("position weights need n >= 1".into()));
    }
    let total = (n * (n + 1)) as f64 / 2.0;
    let mut w: Vec<f64> = (1..=n).map(|i| i as f64 / total).collect();
    if direction == Direction::Reverse {
        w.reverse();
    }
    Ok(w)
}

/// Pool `n` rows of width `dim` (row-major) into one vector.
pub fn pool_rows<S: Copy + Into<f64>>(
    data: &[S],
    n: usize,
    dim: usize,
    kind: PoolingKind,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("cannot pool an empty matrix".into()));
    }
    if data.len() != n * dim {
        return Err(Error::Shape(format!("{} values for {n}x{dim}", data.len())));
    }
    let mut out = vec![0.0; dim];
    let rows = data.chunks_exact(dim);
    match kind {
        PoolingKind::Mean => {
            // Sum then divide, so constant rows come back exactly.
            for row in rows {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v.into();
                }
            }
            out.iter_mut().for_each(|o| *o /= n as f64);
        }
        PoolingKind::WmeanPos | PoolingKind::WmeanPosRev => {
            let direction = if kind == PoolingKind::WmeanPos {
                Direction::Forward
            } else {
                Direction::Reverse
            };
            for (row, w) in rows.zip(position_weights(n, direction)?) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += w * v.into();
                }
            }
        }
    }
    Ok(out)
}

pub fn pool_tokens(tokens: &TokenMatrix, kind: PoolingKind) -> Result<Vec<f64>> {
    pool_rows(&tokens.data, tokens.n_tokens, tokens.dim, kind)
}

pub fn utterance_vector(
    store: &EmbeddingStore,
    utt: &Utterance,
    enc: EncodingSpec,
    pool: PoolingKind,
) -> Result<Vec<f64>> {
    match enc {
        EncodingSpec::Flat => pool_tokens(store.require(&utt.utt_id)?, pool),
        EncodingSpec::Hier { aggregation } => {
            let n = utt.sentences.len();
            let mut sentence_vecs = Vec::with_capacity(n * store.dim());
            for i in 0..n {
                sentence_vecs.extend(pool_tokens(store.require(&utt.sentence_key(i))?, pool)?);
            }
            let agg = match aggregation {
                HierAggregation::Mean => PoolingKind::Mean,
                HierAggregation::WmeanPos => PoolingKind::WmeanPos,
            };
            pool_rows(&sentence_vecs, n, store.dim(), agg)
        }
    }
}
