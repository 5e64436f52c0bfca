//! Versioned parameter checkpoints.
//!
//! ```text
//! "ERCK" | u32 version = 1 | u8 precision bytes (4 or 8) | u64 seed
//! u16 len + config hash (UTF-8) | u16 len + fusion spec (UTF-8)
//! u8 net kind (0 = mlp, 1 = lstm) | f64 dropout | u32 tensor count
//! per tensor: u32 rows | u32 cols | rows * cols little-endian floats
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::lexicon::FusionSpec;

use super::{LstmParams, MlpParams, Model, Net, Params, Precision, Scalar, Tensor};

const MAGIC: &[u8; 4] = b"ERCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub seed: u64,
    pub config_hash: String,
    pub model: Model<T>,
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Format("header string too long".into()))?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_checkpoint<T: Scalar, W: Write>(mut w: W, ckpt: &Checkpoint<T>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u8(T::PRECISION.bytes() as u8)?;
    w.write_u64::<LittleEndian>(ckpt.seed)?;
    write_str(&mut w, &ckpt.config_hash)?;
    write_str(&mut w, &ckpt.model.fusion.to_string())?;
    w.write_u8(u8::from(ckpt.model.is_sequential()))?;
    w.write_f64::<LittleEndian>(ckpt.model.dropout())?;
    let tensors = ckpt.model.tensors();
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    let mut buf = Vec::new();
    for t in tensors {
        w.write_u32::<LittleEndian>(t.rows as u32)?;
        w.write_u32::<LittleEndian>(t.cols as u32)?;
        buf.clear();
        for &v in &t.data {
            v.write_le(&mut buf);
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Checkpoint<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let width = r.read_u8()? as usize;
    let expected: Precision = T::PRECISION;
    if width != expected.bytes() {
        return Err(Error::Format(format!(
            "checkpoint stores {width}-byte floats, reader expects {expected:?}"
        )));
    }
    let seed = r.read_u64::<LittleEndian>()?;
    let config_hash = read_str(&mut r)?;
    let fusion: FusionSpec = read_str(&mut r)?.parse().map_err(Error::Format)?;
    let sequential = r.read_u8()? == 1;
    let dropout = r.read_f64::<LittleEndian>()?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut tensors = Vec::with_capacity(count);
    let mut buf = vec![0u8; width];
    for _ in 0..count {
        let rows = r.read_u32::<LittleEndian>()? as usize;
        let cols = r.read_u32::<LittleEndian>()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)?;
            data.push(T::read_le(&buf));
        }
        tensors.push(Tensor { rows, cols, data });
    }
    let mut it = tensors.into_iter();
    let projection = if matches!(fusion, FusionSpec::Blend { .. }) {
        it.next()
    } else {
        None
    };
    let mut next = || {
        it.next()
            .ok_or_else(|| Error::Format("too few tensors".into()))
    };
    let net = if sequential {
        Net::Lstm(LstmParams {
            w_x: next()?,
            w_h: next()?,
            b: next()?,
            w_o: next()?,
            b_o: next()?,
            dropout,
        })
    } else {
        Net::Mlp(MlpParams {
            w1: next()?,
            b1: next()?,
            w2: next()?,
            b2: next()?,
            dropout,
        })
    };
    Ok(Checkpoint {
        seed,
        config_hash,
        model: Model {
            fusion,
            projection,
            net,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PrngStream;

    #[test]
    fn roundtrip_both_kinds() {
        for (sequential, fusion) in [
            (false, FusionSpec::None),
            (true, FusionSpec::Blend { alpha: 0.2 }),
            (true, FusionSpec::Concat),
        ] {
            let model = Model::<f32>::init(
                sequential,
                6,
                5,
                4,
                0.3,
                fusion,
                &mut PrngStream::new(3, "init"),
            )
            .unwrap();
            let ckpt = Checkpoint {
                seed: 42,
                config_hash: "abc123".into(),
                model,
            };
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &ckpt).unwrap();
            let back: Checkpoint<f32> = read_checkpoint(&buf[..]).unwrap();
            assert_eq!(back, ckpt);
            assert!(read_checkpoint::<f64, _>(&buf[..]).is_err());
        }
    }
}
