//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            8 bytes  "HEBBCKPT"
//! format version   u32
//! config hash      32 bytes (SHA-256 of the trajectory-relevant config)
//! preset version   u32
//! generation       u64      (the next generation to run)
//! base seed        u64
//! model kind       u8
//! sigma            f64
//! mu               u32 rows, u32 cols, rows*cols f64 row-major
//! lambda flag      u8; if 1: u32 rows, u32 cols, f64 data
//! assignment flag  u8; if 1: u32 len, len x u32
//! adam flag        u8; if 1: m then v, each |theta| f64 in mu-then-lambda order
//! crc32            u32 over every preceding byte
//! ```
//!
//! Every random stream is derived from (base seed, generation), so the
//! generation counter is the whole RNG state.

use std::io::Write;
use std::path::Path;

use hebb_core::es::AdamMoments;
use hebb_core::{EsState, GenotypeModel, ModelKind, Params};
use ndarray::Array2;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"HEBBCKPT";
pub const FORMAT_VERSION: u32 = 1;
/// Upper bound on any matrix decoded from a file.
pub const MAX_ELEMENTS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub preset_version: u32,
    pub state: EsState,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let s = &self.state;
        let model = &s.model;
        let p = model.params();
        let mut out = Vec::with_capacity(128 + 8 * 3 * p.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&self.preset_version.to_le_bytes());
        out.extend_from_slice(&s.generation.to_le_bytes());
        out.extend_from_slice(&s.base_seed.to_le_bytes());
        out.push(model.kind().tag());
        out.extend_from_slice(&model.sigma().to_le_bytes());
        put_matrix(&mut out, &p.mu);
        match &p.lambda {
            Some(l) => {
                out.push(1);
                put_matrix(&mut out, l);
            }
            None => out.push(0),
        }
        match model.assignment() {
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&(a.len() as u32).to_le_bytes());
                for &k in a {
                    out.extend_from_slice(&(k as u32).to_le_bytes());
                }
            }
            None => out.push(0),
        }
        match &s.adam {
            Some(AdamMoments { m, v }) => {
                out.push(1);
                for x in m.to_flat().into_iter().chain(v.to_flat()) {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses and validates a checkpoint. Never panics on malformed input.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 4 {
            return Err(bad("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("bad magic; not a checkpoint file"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { buf: &body[8..] };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let preset_version = r.u32()?;
        let generation = r.u64()?;
        let base_seed = r.u64()?;
        let tag = r.u8()?;
        let kind = ModelKind::from_tag(tag).ok_or_else(|| bad(format!("unknown model kind tag {tag}")))?;
        let sigma = r.f64()?;
        let mu = r.matrix()?;
        let lambda = if r.flag()? { Some(r.matrix()?) } else { None };
        let assignment = if r.flag()? {
            let len = r.u32()? as usize;
            if len > MAX_ELEMENTS || len * 4 > r.buf.len() {
                return Err(bad("assignment length exceeds file"));
            }
            Some(
                (0..len)
                    .map(|_| r.u32().map(|k| k as usize))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let params = Params { mu, lambda };
        let adam = if r.flag()? {
            let n = params.len();
            let mut m = params.zeros_like();
            let mut v = params.zeros_like();
            m.set_from_flat(&r.f64s(n)?).map_err(|e| bad(e.to_string()))?;
            v.set_from_flat(&r.f64s(n)?).map_err(|e| bad(e.to_string()))?;
            Some(AdamMoments { m, v })
        } else {
            None
        };
        if !r.buf.is_empty() {
            return Err(bad(format!("{} trailing bytes", r.buf.len())));
        }
        let model = GenotypeModel::from_parts(kind, params, sigma, assignment).map_err(|e| bad(e.to_string()))?;
        Ok(Checkpoint {
            config_hash,
            preset_version,
            state: EsState {
                model,
                generation,
                adam,
                base_seed,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            HarnessError::Checkpoint(msg) => bad(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

fn put_matrix(out: &mut Vec<u8>, a: &Array2<f64>) {
    out.extend_from_slice(&(a.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(a.ncols() as u32).to_le_bytes());
    for x in a.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(bad("unexpected end of file"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(bad(format!("invalid flag byte {b}"))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > MAX_ELEMENTS || n.saturating_mul(8) > self.buf.len() {
            return Err(bad("array length exceeds file"));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| bad("matrix too large"))?;
        let data = self.f64s(n)?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hebb_core::{EsConfig, Updater};

    fn sample(kind: ModelKind, adam: bool) -> Checkpoint {
        let model = match kind {
            ModelKind::PerSynapse => GenotypeModel::per_synapse(7, 5, 0.1, 1.0, 3),
            ModelKind::SharedGmm => GenotypeModel::shared_gmm(7, 3, 0.1, 1.0, 3),
            ModelKind::JointGmm => GenotypeModel::joint_gmm(7, 2, 0.1, 1.0, 3),
            ModelKind::SingleRule => GenotypeModel::single_rule(7, 0.1, 1.0, 3),
            ModelKind::FixedRandom => GenotypeModel::fixed_random(7, 3, 0.1, 1.0, 3, 4),
        }
        .unwrap();
        let config = EsConfig {
            updater: if adam { Updater::Adam } else { Updater::Sgd },
            ..EsConfig::default()
        };
        let mut state = EsState::new(model, &config, 99);
        let grad = state.model.params().clone();
        state.apply(&config, &grad).unwrap();
        Checkpoint {
            config_hash: [7; 32],
            preset_version: 1,
            state,
        }
    }

    #[test]
    fn roundtrip_every_kind() {
        for kind in ModelKind::ALL {
            for adam in [false, true] {
                let c = sample(kind, adam);
                assert_eq!(Checkpoint::decode(&c.encode()).unwrap(), c, "{kind:?}");
            }
        }
    }

    #[test]
    fn every_truncation_and_bit_flip_is_rejected() {
        let bytes = sample(ModelKind::SharedGmm, true).encode();
        for len in 0..bytes.len() {
            assert!(Checkpoint::decode(&bytes[..len]).is_err());
        }
        for i in 0..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x10;
            assert!(Checkpoint::decode(&b).is_err(), "flip at {i}");
        }
    }

    #[test]
    fn oversized_header_with_valid_checksum_is_rejected() {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        b.extend_from_slice(&[0; 32]);
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&0u64.to_le_bytes());
        b.extend_from_slice(&0u64.to_le_bytes());
        b.push(ModelKind::PerSynapse.tag());
        b.extend_from_slice(&0.1f64.to_le_bytes());
        b.extend_from_slice(&u32::MAX.to_le_bytes());
        b.extend_from_slice(&u32::MAX.to_le_bytes());
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(Checkpoint::decode(&b), Err(HarnessError::Checkpoint(_))));
    }

    #[test]
    fn save_is_atomic_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let c = sample(ModelKind::PerSynapse, false);
        c.save(&path).unwrap();
        assert!(!dir.path().join("c.bin.tmp").exists());
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }
}
