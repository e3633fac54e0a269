//! Weight container format.
//!
//! Little-endian layout:
//!   magic "PNPW", u32 version (1), u32 tensor count, then per tensor:
//!   u16 name length, UTF-8 name, u8 rank, u64 dims, f64 data row-major.
//! Tensors appear in canonical manifest order; readers accept any order
//! since the bundle is reassembled by name.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use pnp_core::config::ArchConfig;
use pnp_core::tensor::Tensor;
use pnp_core::weights::ModelBundle;

use crate::error::{FileError, Result};

const MAGIC: &[u8; 4] = b"PNPW";
const VERSION: u32 = 1;

pub fn write_bundle(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let tensors = bundle.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(tensor.dims().len() as u8);
        for &d in tensor.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| FileError::io(path, e))?;
    f.write_all(&out).map_err(|e| FileError::io(path, e))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            FileError::format(self.path, format!("truncated at byte {}", self.pos))
        })?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_bundle(path: &Path, cfg: &ArchConfig) -> Result<ModelBundle> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| FileError::io(path, e))?;
    let mut c = Cursor { buf: &buf, pos: 0, path };
    if c.take(4)? != MAGIC {
        return Err(FileError::format(path, "not a PNPW weight container"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(FileError::format(
            path,
            format!("unsupported container version {version}, expected {VERSION}"),
        ));
    }
    let count = c.u32()? as usize;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| FileError::format(path, "tensor name is not UTF-8"))?
            .to_string();
        let rank = c.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut total = 1usize;
        for _ in 0..rank {
            let d = c.u64()? as usize;
            total = total.checked_mul(d).ok_or_else(|| {
                FileError::format(path, format!("tensor '{name}' dims overflow"))
            })?;
            dims.push(d);
        }
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(c.f64()?);
        }
        let tensor = Tensor::new(dims, data)?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(FileError::format(path, format!("duplicate tensor '{name}'")));
        }
    }
    if c.pos != buf.len() {
        return Err(FileError::format(
            path,
            format!("{} trailing bytes after the last tensor", buf.len() - c.pos),
        ));
    }
    Ok(ModelBundle::from_named(cfg, tensors)?)
}
