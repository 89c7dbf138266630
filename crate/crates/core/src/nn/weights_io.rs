//! Binary weights file.
//!
//! Little-endian layout: magic `PSNW`, format version (u32), the model
//! configuration (input_size, levels, base_channels, num_classes as u32,
//! dropout_rate as f64, batchnorm as u32), then every tensor of
//! [`Model::tensors`] as rank (u32), dims (u32 each) and an f32 payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::model::{build_model, Model, ModelConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PSNW";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::CorruptWeights(format!("value {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn to_bytes(model: &Model<f32>) -> Result<Vec<u8>> {
    let cfg = &model.config;
    let mut out = Vec::with_capacity(64 + 4 * model.tensors().iter().map(|t| t.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [cfg.input_size, cfg.levels, cfg.base_channels, cfg.num_classes] {
        put_u32(&mut out, v)?;
    }
    out.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
    put_u32(&mut out, cfg.batchnorm as usize)?;
    for t in model.tensors() {
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptWeights(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).ok() != Some(&MAGIC[..]) {
        return Err(Error::CorruptWeights("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::CorruptWeights(format!("unsupported version {version}")));
    }
    let (input_size, levels, base_channels, num_classes) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let dropout_rate = r.f64()?;
    let batchnorm = match r.u32()? {
        0 => false,
        1 => true,
        v => return Err(Error::CorruptWeights(format!("batchnorm flag {v}"))),
    };
    let cfg = ModelConfig {
        input_size,
        levels,
        base_channels,
        num_classes,
        dropout_rate,
        batchnorm,
    };
    cfg.validate()
        .map_err(|e| Error::CorruptWeights(format!("invalid configuration: {e}")))?;
    if cfg.channels(levels).checked_mul(cfg.channels(levels) * 9).is_none_or(|n| n > bytes.len()) {
        return Err(Error::CorruptWeights("configuration does not match file size".into()));
    }
    let mut model = build_model::<f32>(&cfg, 0)?;
    for slot in model.tensors_mut() {
        let rank = r.u32()?;
        if rank != slot.shape().len() {
            return Err(Error::CorruptWeights(format!("tensor rank {rank}, expected {}", slot.shape().len())));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()?);
        }
        if dims != slot.shape() {
            return Err(Error::CorruptWeights(format!("tensor dims {dims:?}, expected {:?}", slot.shape())));
        }
        let raw = r.take(4 * slot.len())?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        *slot = Tensor::from_vec(&dims, data)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptWeights(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if !model.is_finite() {
        return Err(Error::CorruptWeights("non-finite parameter".into()));
    }
    Ok(model)
}

pub fn save(path: &Path, model: &Model<f32>) -> Result<()> {
    let bytes = to_bytes(model)?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
