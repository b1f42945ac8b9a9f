//! `CWFCN1` weight store.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic      6 bytes  "CWFCN1"
//! count      u32      number of entries
//! entry * count:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   rank     u32, dims (u32 * rank)
//!   len      u64      element count, must equal the product of dims
//!   payload  f32 * len
//! ```
//!
//! Entries are written in name order, so equal stores encode to equal bytes.
//! Layer `L` is stored as `L.weight` `[out, in, kh, kw]` and `L.bias` `[out]`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::NetConfig;
use crate::rng::SplitMix64;

pub const MAGIC: &[u8; 6] = b"CWFCN1";

#[derive(Clone, Debug, PartialEq)]
pub struct WeightEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightEntry {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("weight entry payload", n, data.len()));
        }
        Ok(WeightEntry { shape, data })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    entries: BTreeMap<String, WeightEntry>,
}

impl WeightStore {
    pub fn get(&self, name: &str) -> Option<&WeightEntry> {
        self.entries.get(name)
    }

    pub fn insert(&mut self, name: String, entry: WeightEntry) -> Option<WeightEntry> {
        self.entries.insert(name, entry)
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightEntry> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Payloads compared by bit pattern.
    pub fn bit_eq(&self, other: &WeightStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.iter().zip(other.iter()).all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape == b.shape
                    && a.data.len() == b.data.len()
                    && a.data
                        .iter()
                        .zip(&b.data)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

pub fn encode_weights(store: &WeightStore) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend((store.len() as u32).to_le_bytes());
    for (name, e) in store.iter() {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.extend((e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend((d as u32).to_le_bytes());
        }
        out.extend((e.data.len() as u64).to_le_bytes());
        for v in &e.data {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Decode {
                offset: self.bytes.len(),
                reason: format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightStore> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        let n = bytes.len().min(MAGIC.len());
        return Err(Error::FormatVersion {
            found: String::from_utf8_lossy(&bytes[..n]).into_owned(),
        });
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let count = r.u32("entry count")?;
    let mut store = WeightStore::default();
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name_off = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Decode {
                offset: name_off,
                reason: "entry name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let len = r.u64("payload length")?;
        let product: u64 = shape.iter().map(|&d| d as u64).product();
        if product != len {
            return Err(Error::Corrupt {
                entry: name,
                reason: format!("dims {shape:?} hold {product} values but payload has {len}"),
            });
        }
        let payload = r.take(len as usize * 4, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if store.entries.contains_key(&name) {
            return Err(Error::Corrupt {
                entry: name,
                reason: "duplicate entry name".into(),
            });
        }
        store.entries.insert(name, WeightEntry { shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Decode {
            offset: r.pos,
            reason: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(store)
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    decode_weights(&super::read_bytes(path.as_ref())?)
}

pub fn write_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_weights(store))
}

/// Deterministic weights for `cfg`. One [`SplitMix64`] stream seeded with
/// `seed` is consumed layer by layer in topology order; each weight is
/// `SplitMix64::uniform(-s, s)` with `s = sqrt(6 / (in*kh*kw + out*kh*kw))`
/// computed in `f64` and rounded to `f32`. Biases are zero.
pub fn gen_weights(cfg: &NetConfig, seed: u64) -> Result<WeightStore> {
    cfg.validate()?;
    let mut g = SplitMix64::new(seed);
    let mut store = WeightStore::default();
    for l in cfg.layers() {
        let k2 = l.kernel * l.kernel;
        let s = (6.0 / ((l.in_channels + l.out_channels) * k2) as f64).sqrt() as f32;
        let shape = l.weight_shape();
        let n: usize = shape.iter().product();
        let w = (0..n).map(|_| g.uniform(-s, s)).collect();
        let b = vec![0.0; l.out_channels];
        store.insert(format!("{}.weight", l.name), WeightEntry { shape, data: w });
        store.insert(
            format!("{}.bias", l.name),
            WeightEntry {
                shape: vec![l.out_channels],
                data: b,
            },
        );
    }
    Ok(store)
}
