//! `CCF1` feature cache.
//!
//! After the 4-byte magic, records follow back to back until end of file:
//! source_id length (u32) and UTF-8 bytes, composer index (u32), channel
//! count (u32), T (u32), K or F (u32), then channel-major row-major f32
//! values. All integers and floats little-endian.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::stack::InputStack;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};

pub const CACHE_MAGIC: &[u8; 4] = b"CCF1";

#[derive(Clone, Debug, PartialEq)]
pub struct CacheRecord {
    pub source_id: String,
    pub label: u32,
    pub input: InputStack,
}

pub fn write_cache<'a>(path: &Path, records: impl IntoIterator<Item = &'a CacheRecord>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    out.write_all(CACHE_MAGIC).map_err(io)?;
    for rec in records {
        let mut w = ByteWriter::default();
        w.put_str(&rec.source_id);
        w.put_u32(rec.label);
        w.put_u32(rec.input.channels as u32);
        w.put_u32(rec.input.rows as u32);
        w.put_u32(rec.input.cols as u32);
        w.put_f32s(&rec.input.data);
        out.write_all(&w.into_inner()).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn decode_cache(bytes: &[u8]) -> Result<Vec<CacheRecord>> {
    if bytes.len() < 4 || &bytes[..4] != CACHE_MAGIC {
        return Err(Error::Cache("missing CCF1 magic".into()));
    }
    let mut r = ByteReader::new(&bytes[4..]);
    let mut out = Vec::new();
    let bad = |e: Error| Error::Cache(e.to_string());
    while !r.is_at_end() {
        let source_id = r.string().map_err(bad)?;
        let label = r.u32().map_err(bad)?;
        let channels = r.u32().map_err(bad)? as usize;
        let rows = r.u32().map_err(bad)? as usize;
        let cols = r.u32().map_err(bad)? as usize;
        let n = channels
            .checked_mul(rows)
            .and_then(|v| v.checked_mul(cols))
            .ok_or_else(|| Error::Cache("record size overflow".into()))?;
        let data = r.f32s(n).map_err(bad)?;
        out.push(CacheRecord {
            source_id,
            label,
            input: InputStack {
                channels,
                rows,
                cols,
                data,
            },
        });
    }
    Ok(out)
}

pub fn read_cache(path: &Path) -> Result<Vec<CacheRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cache(&bytes)
}
