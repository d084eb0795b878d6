//! Binary checkpoint format.
//!
//! All integers little-endian:
//!
//! ```text
//! "DINT"  u16 version
//! u32 count, then per tensor: u16 name length, UTF-8 name, u8 rank,
//!     u32 per dim, f32 payload
//! (momentum section, same layout)
//! u64 iteration, 4 × u64 rng state, 32-byte config fingerprint
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{Param, ParamStore};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"DINT";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorRecord {
    fn of<F: Real>(name: &str, dims: &[usize], t: &Tensor<F>) -> Self {
        TensorRecord {
            name: name.to_string(),
            dims: dims.to_vec(),
            data: t.data().iter().map(|v| v.to_f64() as f32).collect(),
        }
    }

    /// Tensor shape implied by the logical dims: rank 4 maps directly,
    /// rank 1 is a per-channel vector stored as 1×C×1×1.
    pub fn shape(&self) -> Result<Shape> {
        match self.dims[..] {
            [n, c, h, w] => Shape::new(n, c, h, w),
            [c] => Shape::new(1, c, 1, 1),
            _ => Err(Error::Checkpoint(format!(
                "tensor {} has unsupported rank {}",
                self.name,
                self.dims.len()
            ))),
        }
    }

    fn tensor<F: Real>(&self) -> Result<Tensor<F>> {
        let data = self.data.iter().map(|&v| F::from_f64(v as f64)).collect();
        Tensor::from_vec(self.shape()?, data)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub params: Vec<TensorRecord>,
    pub momentum: Vec<TensorRecord>,
    pub rng_state: [u64; 4],
    pub fingerprint: [u8; 32],
}

impl Checkpoint {
    pub fn capture<F: Real>(params: &ParamStore<F>, iteration: u64, rng: &Rng, fingerprint: [u8; 32]) -> Self {
        Checkpoint {
            iteration,
            params: params.iter().map(|p| TensorRecord::of(&p.name, &p.dims, &p.value)).collect(),
            momentum: params.iter().map(|p| TensorRecord::of(&p.name, &p.dims, &p.momentum)).collect(),
            rng_state: rng.state(),
            fingerprint,
        }
    }

    pub fn rng(&self) -> Rng {
        Rng::from_state(self.rng_state)
    }

    /// A fresh registry holding the saved values and momentum buffers.
    pub fn to_store<F: Real>(&self) -> Result<ParamStore<F>> {
        let mut store = ParamStore::new();
        for (p, m) in self.params.iter().zip(&self.momentum) {
            let mut param = Param::new(p.name.clone(), p.dims.clone(), p.tensor()?);
            param.momentum = m.tensor()?;
            store.insert(param)?;
        }
        Ok(store)
    }

    /// Overwrites values and momentum in `store`, which must hold exactly
    /// the saved tensors with the same shapes.
    pub fn apply_to<F: Real>(&self, store: &mut ParamStore<F>) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, network has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (p, m) in self.params.iter().zip(&self.momentum) {
            let target = store
                .get_mut(&p.name)
                .map_err(|_| Error::Checkpoint(format!("network has no tensor {}", p.name)))?;
            let shape = p.shape()?;
            if target.shape() != shape || target.dims != p.dims {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?} in the checkpoint but {:?} in the network",
                    p.name, p.dims, target.dims
                )));
            }
            target.value = p.tensor()?;
            target.momentum = m.tensor()?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        write_section(&mut out, &self.params);
        write_section(&mut out, &self.momentum);
        out.extend_from_slice(&self.iteration.to_le_bytes());
        for s in self.rng_state {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&self.fingerprint);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic (not a DINT checkpoint)".into()));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {VERSION})"
            )));
        }
        let params = read_section(&mut r, "parameter")?;
        let momentum = read_section(&mut r, "momentum")?;
        if params.len() != momentum.len()
            || params.iter().zip(&momentum).any(|(p, m)| p.name != m.name || p.dims != m.dims)
        {
            return Err(Error::Checkpoint("momentum section does not match parameter section".into()));
        }
        let iteration = r.u64("iteration")?;
        let mut rng_state = [0u64; 4];
        for s in &mut rng_state {
            *s = r.u64("rng state")?;
        }
        let fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().expect("32 bytes");
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after fingerprint",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            iteration,
            params,
            momentum,
            rng_state,
            fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_bytes(&bytes).map_err(|e| Error::file(path, e.to_string()))
    }
}

fn write_section(out: &mut Vec<u8>, records: &[TensorRecord]) {
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for t in records {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_section(r: &mut Reader, what: &str) -> Result<Vec<TensorRecord>> {
    let count = r.u32(what)? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint(format!("{what} tensor name is not UTF-8")))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} dims overflow")))?;
        let data = r
            .take(n, "payload")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push(TensorRecord { name, dims, data });
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}
