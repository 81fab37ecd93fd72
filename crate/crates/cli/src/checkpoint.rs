//! Binary checkpoint: `VIPG` magic, format version, config snapshot, named
//! tensor records and the memory bank, little-endian throughout.

use std::fs;
use std::path::Path;

use vipgan::model::{MemoryBank, VipGanParams};
use vipgan::tensor::{Precision, Real, Tensor};
use vipgan::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VIPG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub tensor: Tensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    /// Completed training epochs.
    pub epochs_done: u64,
    pub steps: u64,
    /// Shape id of each memory row.
    pub shape_ids: Vec<String>,
    pub tensors: Vec<TensorRecord>,
    pub memory: MemoryBank<f32>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_payload(out: &mut Vec<u8>, data: &[f32]) {
    for &v in data {
        v.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }

    fn payload(&mut self, precision: u8, numel: usize, what: &str) -> Result<Vec<f32>> {
        if Precision::from_tag(precision) != Some(f32::PRECISION) {
            return Err(Error::Format(format!("{what}: unsupported precision tag {precision}")));
        }
        let bytes = self.take(numel.checked_mul(f32::BYTES).unwrap_or(usize::MAX), what)?;
        Ok(bytes.chunks_exact(f32::BYTES).map(f32::read_le).collect())
    }
}

impl Checkpoint {
    pub fn from_model(
        config: String,
        epochs_done: u64,
        shape_ids: Vec<String>,
        params: &VipGanParams<f32>,
        memory: &MemoryBank<f32>,
    ) -> Self {
        let tensors = params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| TensorRecord { name, tensor: t.clone().with_requires_grad(false) })
            .collect();
        Self { config, epochs_done, steps: params.steps, shape_ids, tensors, memory: memory.clone() }
    }

    /// Copies stored tensors into `params`; names and shapes must match exactly.
    pub fn restore_into(&self, params: &mut VipGanParams<f32>) -> Result<()> {
        let mut targets = params.named_tensors_mut();
        if targets.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                targets.len()
            )));
        }
        for ((name, t), rec) in targets.iter_mut().zip(&self.tensors) {
            if *name != rec.name || t.shape() != rec.tensor.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {name} {:?}",
                    rec.name,
                    rec.tensor.shape(),
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(rec.tensor.data());
        }
        drop(targets);
        params.steps = self.steps;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_str(&mut out, &self.config);
        put_u64(&mut out, self.epochs_done);
        put_u64(&mut out, self.steps);
        put_u32(&mut out, self.shape_ids.len() as u32);
        for id in &self.shape_ids {
            put_str(&mut out, id);
        }
        put_u32(&mut out, self.tensors.len() as u32);
        for rec in &self.tensors {
            put_str(&mut out, &rec.name);
            out.push(f32::PRECISION.tag());
            put_u32(&mut out, rec.tensor.shape().len() as u32);
            for &d in rec.tensor.shape() {
                put_u64(&mut out, d as u64);
            }
            put_payload(&mut out, rec.tensor.data());
        }
        out.push(f32::PRECISION.tag());
        put_u64(&mut out, self.memory.shapes() as u64);
        put_u64(&mut out, self.memory.dim() as u64);
        out.extend(self.memory.trainable_flags().iter().map(|&f| f as u8));
        put_payload(&mut out, self.memory.matrix().data());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format(format!("checkpoint format version {version}, expected {VERSION}")));
        }
        let config = r.string("config")?;
        let epochs_done = r.u64("epoch counter")?;
        let steps = r.u64("step counter")?;
        let n_ids = r.u32("shape id count")? as usize;
        let shape_ids = (0..n_ids).map(|_| r.string("shape id")).collect::<Result<Vec<_>>>()?;
        let n_tensors = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name = r.string("tensor name")?;
            let precision = r.u8(&name)?;
            let rank = r.u32(&name)? as usize;
            let shape = (0..rank).map(|_| r.u64(&name).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().product();
            let data = r.payload(precision, numel, &name)?;
            tensors.push(TensorRecord { tensor: Tensor::from_vec(&shape, data)?, name });
        }
        let precision = r.u8("memory")?;
        let shapes = r.u64("memory")? as usize;
        let dim = r.u64("memory")? as usize;
        let flags = r.take(shapes, "memory flags")?.iter().map(|&b| b != 0).collect();
        let rows = r.payload(precision, shapes * dim, "memory")?;
        let memory = MemoryBank::from_parts(Tensor::from_vec(&[shapes, dim], rows)?, flags)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        if shape_ids.len() != shapes {
            return Err(Error::Format(format!("{} shape ids for {shapes} memory rows", shape_ids.len())));
        }
        Ok(Self { config, epochs_done, steps, shape_ids, tensors, memory })
    }

    /// Writes through a temporary file and a rename so a crash never leaves
    /// a half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
