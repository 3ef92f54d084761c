//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "CLOSETCK"
//! version  u32      1
//! meta     u32 length, then UTF-8 JSON
//! count    u32
//! table    count x { u32 name length, name bytes, u32 rows, u32 cols }
//! data     f32 values of every tensor in table order, row-major
//! ```

use std::path::Path;

use super::params::ParameterStore;
use super::tensor::Tensor;
use super::NetError;

const MAGIC: &[u8; 8] = b"CLOSETCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form JSON describing how to rebuild the model.
    pub metadata: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParameterStore, metadata: serde_json::Value) -> Self {
        Self {
            metadata,
            tensors: store
                .entries()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }
}

pub fn checkpoint_to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let meta = serde_json::to_vec(&ck.metadata).expect("json value serializes");
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(ck.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ck.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    }
    for (_, t) in &ck.tensors {
        for &x in t.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| NetError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint, NetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(NetError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NetError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let meta_len = r.u32()? as usize;
    let metadata = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| NetError::Checkpoint(format!("metadata: {e}")))?;
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NetError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        table.push((name, rows, cols));
    }
    let mut tensors = Vec::with_capacity(table.len());
    for (name, rows, cols) in table {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| NetError::Checkpoint(format!("tensor '{name}' too large")))?;
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| NetError::Checkpoint("size overflow".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        tensors.push((name, Tensor::from_vec(rows, cols, data)));
    }
    if r.pos != bytes.len() {
        return Err(NetError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { metadata, tensors })
}

pub fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), NetError> {
    crate::geom::io::write_file(path, &checkpoint_to_bytes(ck)).map_err(|e| match e {
        crate::geom::io::FormatError::Io { path, source } => NetError::Io {
            path: path.display().to_string(),
            source,
        },
        other => NetError::Checkpoint(other.to_string()),
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    let bytes = std::fs::read(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    checkpoint_from_bytes(&bytes)
}
