//! Binary checkpoint container shared by the radiance field and the
//! evaluator.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                     |
//! |--------------|---------------------------------------------|
//! | 8            | magic `RCKPT\0\0\x01`                        |
//! | 8            | header length `H` (u64)                      |
//! | H            | UTF-8 JSON header `{"kind": …, "meta": …}`   |
//! | 8            | parameter count `N` (u64)                    |
//! | 8·N          | parameters as IEEE-754 f64                   |
//!
//! Parameters are stored as raw bits, so a reload is bit-exact.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};

const MAGIC: &[u8; 8] = b"RCKPT\0\0\x01";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header<M> {
    kind: String,
    meta: M,
}

pub(crate) fn save<M: Serialize>(path: &Path, kind: &str, meta: &M, params: &[f64]) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        kind: kind.to_string(),
        meta,
    })
    .map_err(|e| Error::json(path, e))?;
    let mut bytes = Vec::with_capacity(24 + header.len() + params.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn load<M: DeserializeOwned>(path: &Path, kind: &str) -> Result<(M, Vec<f64>)> {
    let corrupt = |reason: &str| -> Error {
        LoadError::CorruptCheckpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
        .into()
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let take_u64 = |at: usize| -> Option<u64> {
        bytes
            .get(at..at + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    };
    if bytes.get(..8) != Some(MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let hlen = take_u64(8).ok_or_else(|| corrupt("truncated header length"))? as usize;
    let hbytes = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header<M> = serde_json::from_slice(hbytes).map_err(|e| corrupt(&e.to_string()))?;
    if header.kind != kind {
        return Err(corrupt(&format!("expected a `{kind}` checkpoint, found `{}`", header.kind)));
    }
    let n = take_u64(16 + hlen).ok_or_else(|| corrupt("truncated parameter count"))? as usize;
    let start = 24 + hlen;
    if bytes.len() != start + n * 8 {
        return Err(corrupt("parameter block length mismatch"));
    }
    let params = bytes[start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header.meta, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let params = vec![1.0 / 3.0, -0.0, f64::MIN_POSITIVE, 1e300];
        save(&path, "thing", &vec![1u32, 2], &params).unwrap();
        let (meta, back): (Vec<u32>, Vec<f64>) = load(&path, "thing").unwrap();
        assert_eq!(meta, vec![1, 2]);
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            params.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(load::<Vec<u32>>(&path, "other").is_err());
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(load::<Vec<u32>>(&path, "thing").is_err());
    }
}
