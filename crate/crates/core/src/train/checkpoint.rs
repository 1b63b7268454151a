//! Binary checkpoints: `HCRB` magic, `u32` LE version, a `u32`-length-prefixed
//! JSON header, `u32` tensor count, then per tensor a `u16`-prefixed name,
//! `u8` rank, `u32` dims and raw `f32` LE values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::TagCode;
use crate::error::{CheckpointError, Error, Result};
use crate::model::{Model, ModelSpec};
use crate::rng::{Rng, RngState};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"HCRB";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub epoch: usize,
    pub rng: Option<RngState>,
    /// Tag code of each class index, when known.
    #[serde(default)]
    pub tag_codes: Vec<TagCode>,
}

impl CheckpointHeader {
    pub fn new(spec: ModelSpec) -> Self {
        CheckpointHeader {
            spec,
            epoch: 0,
            rng: None,
            tag_codes: Vec::new(),
        }
    }
}

pub fn encode_checkpoint(model: &Model, header: &CheckpointHeader) -> Result<Vec<u8>> {
    if &header.spec != model.spec() {
        return Err(
            CheckpointError::SpecMismatch("header spec differs from the model".into()).into(),
        );
    }
    let json = serde_json::to_vec(header)?;
    let state = model.state();
    let mut out = Vec::with_capacity(64 + json.len() + 4 * model.param_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (name, t) in state {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(malformed(format!("truncated {what} at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    CheckpointError::Malformed(msg.into()).into()
}

/// Decodes a checkpoint, optionally requiring its spec to equal `expected`.
pub fn decode_checkpoint(
    bytes: &[u8],
    expected: Option<&ModelSpec>,
) -> Result<(Model, CheckpointHeader)> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic).into());
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let len = c.u32("header length")? as usize;
    let header: CheckpointHeader = serde_json::from_slice(c.take(len, "header")?)
        .map_err(|e| malformed(format!("header: {e}")))?;
    if let Some(exp) = expected {
        if exp != &header.spec {
            return Err(CheckpointError::SpecMismatch(format!(
                "checkpoint holds {}, expected {}",
                serde_json::to_string(&header.spec)?,
                serde_json::to_string(exp)?
            ))
            .into());
        }
    }
    header
        .spec
        .validate()
        .map_err(|e| malformed(format!("invalid spec: {e}")))?;
    let mut model = Model::new(header.spec.clone(), &mut Rng::new(0))?;
    let count = c.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(c.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| malformed("tensor name is not UTF-8"))?
            .to_string();
        let rank = c.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dim")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = c.take(
            n.checked_mul(4)
                .ok_or_else(|| malformed("tensor too large"))?,
            "tensor data",
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| malformed(format!("{name}: {e}")))?;
        tensors.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let mut source = tensors.into_iter();
    model.for_each_state_mut(|name, dst| {
        let (got, t) = source
            .next()
            .ok_or_else(|| malformed(format!("missing tensor {name}")))?;
        if got != name || t.shape() != dst.shape() {
            return Err(malformed(format!(
                "expected {name} {:?}, found {got} {:?}",
                dst.shape(),
                t.shape()
            )));
        }
        *dst = t;
        Ok(())
    })?;
    if let Some((name, _)) = source.next() {
        return Err(malformed(format!("unexpected tensor {name}")));
    }
    Ok((model, header))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    header: &CheckpointHeader,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, header)?).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: Option<&ModelSpec>,
) -> Result<(Model, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_checkpoint(&bytes, expected)
}
