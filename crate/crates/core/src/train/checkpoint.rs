//! `CMCK` checkpoints. All integers and reals little-endian:
//!
//! ```text
//! "CMCK"  u32 version=1
//! config:  u32 d_q d_h d_x d_v d_z regions question_vocab answer_vocab max_answer_len
//!          f64 lambda_lang lambda_epi   u8 q_source   u8 variant
//! u64 iteration
//! rng:     32-byte seed   u64 stream   u128 word position
//! u32 parameter count
//! per parameter: u32 name_len, name, u32 rank, u32 dims[rank], f64 values
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, QSource, Variant, VqaNetwork};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CMCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const CONFIG_LEN: usize = 9 * 4 + 2 * 8 + 2;
const RNG_LEN: usize = 32 + 8 + 16;
/// Bytes before the first parameter record.
pub const HEADER_LEN: usize = 4 + 4 + CONFIG_LEN + 8 + RNG_LEN + 4;

/// Enough of a ChaCha generator to resume its stream exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn of(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub iteration: u64,
    pub rng: RngState,
    /// Every parameter in registration order.
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(net: &VqaNetwork, iteration: u64, rng: &ChaCha8Rng) -> Self {
        Self {
            config: net.config.clone(),
            iteration,
            rng: RngState::of(rng),
            params: net.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .params
                .iter()
                .map(|(name, t)| 4 + name.len() + 4 + 4 * t.shape().len() + 8 * t.len())
                .sum::<usize>()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::with_capacity(self.encoded_len()));
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let c = &self.config;
        for v in [
            c.d_q,
            c.d_h,
            c.d_x,
            c.d_v,
            c.d_z,
            c.regions,
            c.question_vocab,
            c.answer_vocab,
            c.max_answer_len,
        ] {
            w.usize(v)?;
        }
        w.f64(c.lambda_lang);
        w.f64(c.lambda_epi);
        w.0.push(c.q_source.code());
        w.0.push(c.variant.code());
        w.0.extend_from_slice(&self.iteration.to_le_bytes());
        w.0.extend_from_slice(&self.rng.seed);
        w.0.extend_from_slice(&self.rng.stream.to_le_bytes());
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.usize(self.params.len())?;
        for (name, t) in &self.params {
            w.usize(name.len())?;
            w.0.extend_from_slice(name.as_bytes());
            w.usize(t.shape().len())?;
            for &d in t.shape() {
                w.usize(d)?;
            }
            for &v in t.data() {
                w.f64(v);
            }
        }
        Ok(w.0)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "bad magic, expected \"CMCK\""));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                4,
                format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
            ));
        }
        let mut dims = [0usize; 9];
        for d in &mut dims {
            *d = r.u32("config")? as usize;
        }
        let lambda_lang = r.f64("config")?;
        let lambda_epi = r.f64("config")?;
        let at = r.pos;
        let q_source = QSource::from_code(r.take(1, "config")?[0])
            .ok_or_else(|| Error::format(at as u64, "unknown question source code"))?;
        let variant = Variant::from_code(r.take(1, "config")?[0])
            .ok_or_else(|| Error::format(at as u64 + 1, "unknown variant code"))?;
        let config = NetworkConfig {
            d_q: dims[0],
            d_h: dims[1],
            d_x: dims[2],
            d_v: dims[3],
            d_z: dims[4],
            regions: dims[5],
            question_vocab: dims[6],
            answer_vocab: dims[7],
            max_answer_len: dims[8],
            lambda_lang,
            lambda_epi,
            q_source,
            variant,
        };
        let iteration = u64::from_le_bytes(r.array("iteration")?);
        let seed: [u8; 32] = r.array("rng seed")?;
        let stream = u64::from_le_bytes(r.array("rng stream")?);
        let word_pos = u128::from_le_bytes(r.array("rng position")?);
        let count = r.u32("parameter count")? as usize;
        let mut params = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len, "parameter name")?)
                .map_err(|_| Error::format(at as u64, "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let at = r.pos;
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::format(at as u64, format!("`{name}`: dimension overflow")))?;
            let mut data = Vec::with_capacity(count.min(bytes.len() / 8));
            for _ in 0..count {
                data.push(r.f64(&name)?);
            }
            let t = Tensor::new(shape, data).map_err(|e| Error::format(at as u64, format!("`{name}`: {e}")))?;
            params.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                r.pos as u64,
                format!("{} trailing bytes after last parameter", bytes.len() - r.pos),
            ));
        }
        Ok(Self {
            config,
            iteration,
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            params,
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

    /// Copies the stored values into `net`, whose configuration must match exactly.
    pub fn load_into(&self, net: &mut VqaNetwork) -> Result<()> {
        if net.config != self.config {
            return Err(Error::ConfigConflict(format!(
                "checkpoint was written for {:?}, network is {:?}",
                self.config, net.config
            )));
        }
        if self.params.len() != net.params.len() {
            return Err(Error::format(
                0,
                format!(
                    "checkpoint holds {} parameters, network has {}",
                    self.params.len(),
                    net.params.len()
                ),
            ));
        }
        for ((name, t), p) in self.params.iter().zip(net.params.iter()) {
            if *name != p.name || t.shape() != p.value.shape() {
                return Err(Error::format(
                    0,
                    format!(
                        "parameter `{name}` {:?} does not match `{}` {:?}",
                        t.shape(),
                        p.name,
                        p.value.shape()
                    ),
                ));
            }
        }
        for ((_, t), p) in self.params.iter().zip(net.params.iter_mut()) {
            p.value = t.clone();
        }
        Ok(())
    }

    /// Rebuilds the network this checkpoint was taken from.
    pub fn to_network(&self) -> Result<VqaNetwork> {
        let mut net = VqaNetwork::new(self.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        self.load_into(&mut net)?;
        Ok(net)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::format(self.0.len() as u64, format!("{v} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated checkpoint: {what} needs {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn net() -> VqaNetwork {
        let cfg = NetworkConfig {
            d_q: 3,
            d_h: 4,
            d_z: 2,
            ..NetworkConfig::new(5, 2, 3, 9, 7)
        };
        VqaNetwork::new(cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    fn checkpoint() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let _: u64 = rng.random();
        Checkpoint::capture(&net(), 1234, &rng)
    }

    #[test]
    fn size_formula() {
        let ck = checkpoint();
        let bytes = ck.encode().unwrap();
        assert_eq!(bytes.len(), ck.encoded_len());
        assert_eq!(HEADER_LEN, 130);
        // name length, name, rank, dims, values
        let expected: usize = HEADER_LEN
            + ck.params
                .iter()
                .map(|(n, t)| 4 + n.len() + 4 + 4 * t.shape().len() + 8 * t.len())
                .sum::<usize>();
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = checkpoint();
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let _: u64 = a.random();
        let mut b = back.rng.restore();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn config_conflict_is_explicit() {
        let ck = checkpoint();
        let mut other = net();
        other.config.max_answer_len = 3;
        assert!(matches!(ck.load_into(&mut other), Err(Error::ConfigConflict(_))));
    }

    #[test]
    fn corrupt_headers_are_format_errors() {
        let bytes = checkpoint().encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format { offset: 4, .. })));
        for n in [0, 7, HEADER_LEN - 1, HEADER_LEN + 3, bytes.len() - 1] {
            assert!(matches!(Checkpoint::decode(&bytes[..n]), Err(Error::Format { .. })));
        }
    }

    #[test]
    fn dimension_mismatch_is_a_format_error() {
        let mut ck = checkpoint();
        ck.params[1].1 = Tensor::zeros(&[1, 1]);
        let mut n = net();
        assert!(matches!(ck.load_into(&mut n), Err(Error::Format { .. })));
    }
}
