//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "DLIMDNET"
//! version    u32      1
//! variant    u16 length + UTF-8 tag
//! count      u32      number of tensors
//! directory  per tensor: u16 name length, name, u8 rank, u32 dims[rank],
//!            u64 byte offset into the payload
//! payload    f32 values, tensors back to back
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use crate::arch::Variant;
use crate::error::{NnError, Result};
use crate::network::{Network, ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"DLIMDNET";
pub const VERSION: u32 = 1;

pub fn to_bytes(net: &Network<f32>) -> Vec<u8> {
    let params = net.params();
    let mut out = Vec::with_capacity(params.len() * 4 + 1024);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let tag = net.variant().tag().as_bytes();
    out.extend_from_slice(&(tag.len() as u16).to_le_bytes());
    out.extend_from_slice(tag);
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for t in &params.tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.data.len() as u64 * 4;
    }
    for t in &params.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::BadCheckpoint(msg.into())
}

fn read_n<const N: usize>(cur: &mut Cursor<&[u8]>) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    cur.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
    Ok(buf)
}

fn read_string(cur: &mut Cursor<&[u8]>) -> Result<String> {
    let len = u16::from_le_bytes(read_n(cur)?) as usize;
    let mut buf = vec![0u8; len];
    cur.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
    String::from_utf8(buf).map_err(|_| bad("non UTF-8 name"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network<f32>> {
    let mut cur = Cursor::new(bytes);
    if &read_n::<8>(&mut cur)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(read_n(&mut cur)?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let variant: Variant = read_string(&mut cur)?.parse()?;
    let count = u32::from_le_bytes(read_n(&mut cur)?) as usize;
    let mut dir = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = read_string(&mut cur)?;
        let rank = read_n::<1>(&mut cur)?[0] as usize;
        let shape = (0..rank)
            .map(|_| read_n::<4>(&mut cur).map(|b| u32::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = u64::from_le_bytes(read_n(&mut cur)?) as usize;
        dir.push((name, shape, offset));
    }
    let payload = &bytes[cur.position() as usize..];
    let mut tensors = Vec::with_capacity(count);
    for (name, shape, offset) in dir {
        let len: usize = shape.iter().product();
        let end = offset
            .checked_add(len * 4)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| bad(format!("tensor `{name}` exceeds payload")))?;
        let data = payload[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    Network::from_params(variant, ParamSet { tensors })
}

pub fn save(net: &Network<f32>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network<f32>> {
    from_bytes(&fs::read(path)?)
}
