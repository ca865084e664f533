//! Flat binary parameter snapshots.
//!
//! Layout (little-endian): `b"HVGN"`, `u32` version, `u64` parameter
//! count, then for each parameter a `u16` name length, the UTF-8 name, a
//! `u8` rank, `rank` `u64` extents and the `f64` values.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nets::{ArchConfig, DiscriminatorNet, GeneratorNet};
use crate::autodiff::{Parameter, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HVGN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

impl Checkpoint {
    pub fn from_networks(g: &GeneratorNet, d: &DiscriminatorNet) -> Self {
        let entries = g
            .params()
            .iter()
            .chain(d.params())
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        Self { entries }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if &r.array::<4>()? != CHECKPOINT_MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let count = u64::from_le_bytes(r.array()?);
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| "parameter name is not UTF-8".to_string())?
                .to_string();
            let rank = r.array::<1>()?[0] as usize;
            let shape = (0..rank)
                .map(|_| Ok(u64::from_le_bytes(r.array()?) as usize))
                .collect::<std::result::Result<Vec<_>, String>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .ok_or_else(|| format!("{name}: shape overflows"))?;
            let raw = r.take(numel.checked_mul(8).ok_or("size overflow")?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
            entries.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| Error::Format {
            path: path.to_path_buf(),
            msg,
        })
    }

    fn fill(&self, params: &mut [Parameter]) -> Result<()> {
        for p in params {
            let (_, t) = self
                .entries
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks parameter {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "checkpoint restore",
                    lhs: p.value.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            p.value = t.clone();
        }
        Ok(())
    }

    /// Rebuilds networks of the given architecture from the stored values.
    pub fn restore(&self, arch: &ArchConfig) -> Result<(GeneratorNet, DiscriminatorNet)> {
        // Random init only fixes shapes and names; every value is replaced.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = GeneratorNet::new(arch, &mut rng)?;
        let mut d = DiscriminatorNet::new(arch, &mut rng)?;
        self.fill(g.params_mut())?;
        self.fill(d.params_mut())?;
        Ok((g, d))
    }
}
