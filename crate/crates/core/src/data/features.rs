//! `CMVF` region-feature files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CMVF"  u32 version=1  u32 record_count  u32 K  u32 d_x  u32 d_v
//! per record:
//!   u32 id_len, id bytes (UTF-8)
//!   K·d_x f32 region values, region-major
//!   d_v   f32 context values
//! ```
//!
//! Values are narrowed to `f32` on write and widened back to `f64` on read.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"CMVF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub image_id: String,
    /// K×d_x.
    pub regions: Tensor,
    /// d_v.
    pub context: Tensor,
}

/// A whole feature file: uniform dimensions plus records in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub regions: usize,
    pub d_x: usize,
    pub d_v: usize,
    pub records: Vec<FeatureRecord>,
}

impl FeatureFile {
    pub fn new(regions: usize, d_x: usize, d_v: usize, records: Vec<FeatureRecord>) -> Result<Self> {
        let f = Self {
            regions,
            d_x,
            d_v,
            records,
        };
        f.check_dims()?;
        Ok(f)
    }

    fn check_dims(&self) -> Result<()> {
        if self.regions == 0 || self.d_x == 0 || self.d_v == 0 {
            return Err(Error::format(0, "feature dimensions must be positive"));
        }
        for r in &self.records {
            if r.regions.shape() != [self.regions, self.d_x] || r.context.shape() != [self.d_v] {
                return Err(Error::format(
                    0,
                    format!(
                        "record `{}` has regions {:?} and context {:?}, file declares K={} d_x={} d_v={}",
                        r.image_id,
                        r.regions.shape(),
                        r.context.shape(),
                        self.regions,
                        self.d_x,
                        self.d_v
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Size in bytes of the encoded file.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .records
                .iter()
                .map(|r| 4 + r.image_id.len() + 4 * (self.regions * self.d_x + self.d_v))
                .sum::<usize>()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.check_dims()?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            u32_len(self.records.len())?,
            u32_len(self.regions)?,
            u32_len(self.d_x)?,
            u32_len(self.d_v)?,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.records {
            out.extend_from_slice(&u32_len(r.image_id.len())?.to_le_bytes());
            out.extend_from_slice(r.image_id.as_bytes());
            for &v in r.regions.data().iter().chain(r.context.data()) {
                let narrow = v as f32;
                if !narrow.is_finite() {
                    return Err(Error::format(
                        out.len() as u64,
                        format!("record `{}`: {v} is not representable as f32", r.image_id),
                    ));
                }
                out.extend_from_slice(&narrow.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}, expected \"CMVF\"")));
        }
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported version {version}, expected {VERSION}")));
        }
        let count = cur.u32("record count")? as usize;
        let regions = cur.u32("K")? as usize;
        let d_x = cur.u32("d_x")? as usize;
        let d_v = cur.u32("d_v")? as usize;
        if regions == 0 || d_x == 0 || d_v == 0 {
            return Err(Error::format(12, "feature dimensions must be positive"));
        }
        let mut records = Vec::with_capacity(count.min(bytes.len() / 4));
        for _ in 0..count {
            let id_len = cur.u32("id length")? as usize;
            let id_at = cur.pos;
            let id = std::str::from_utf8(cur.take(id_len, "image id")?)
                .map_err(|_| Error::format(id_at as u64, "image id is not UTF-8"))?
                .to_string();
            let region_vals = cur.f32s(regions * d_x, "region values")?;
            let context_vals = cur.f32s(d_v, "context values")?;
            records.push(FeatureRecord {
                image_id: id,
                regions: Tensor::new(vec![regions, d_x], region_vals)
                    .map_err(|e| Error::format(cur.pos as u64, e.to_string()))?,
                context: Tensor::new(vec![d_v], context_vals)
                    .map_err(|e| Error::format(cur.pos as u64, e.to_string()))?,
            });
        }
        if cur.pos != bytes.len() {
            return Err(Error::format(
                cur.pos as u64,
                format!("{} trailing bytes after last record", bytes.len() - cur.pos),
            ));
        }
        Ok(Self {
            regions,
            d_x,
            d_v,
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Image id → record index. Later duplicates shadow earlier ones.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.as_str(), i))
            .collect()
    }

    pub fn get(&self, image_id: &str) -> Option<&FeatureRecord> {
        self.records.iter().rev().find(|r| r.image_id == image_id)
    }
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::format(0, format!("{n} does not fit in u32")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(
                self.pos as u64,
                format!("truncated file: {what} needs {n} bytes, {} left", self.bytes.len() - self.pos),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.pos as u64, format!("{what}: length overflow")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}
