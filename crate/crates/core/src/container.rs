//! The `TSLW0001` weight container.
//!
//! One binary format serves encoder weights, slider artifacts, and
//! conditioning exports:
//!
//! ```text
//! bytes 0..8    magic "TSLW0001"
//! bytes 8..16   header length, u64 little-endian
//! bytes 16..    UTF-8 JSON header: {"meta": ..., "tensors": {name: {dtype, shape, offset}}}
//! (zero pad to the next 64-byte boundary)
//! data section  each tensor's raw little-endian f32 payload, 64-byte aligned
//! ```
//!
//! Tensor offsets are relative to the data section, which itself starts on a
//! 64-byte boundary, so every payload is 64-byte aligned in the file. Layout
//! is canonical: tensors are laid out in name order and the JSON header is
//! emitted with sorted keys, so write → read → write reproduces a file
//! byte for byte.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TSLW0001";
const ALIGN: usize = 64;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    dtype: String,
    shape: Vec<usize>,
    /// Byte offset of the payload, relative to the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    tensors: BTreeMap<String, TensorEntry>,
}

fn pad_to(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

/// Serialize `meta` plus named tensors into a fresh container file.
///
/// `meta` should be produced with `serde_json::to_value` — the JSON maps are
/// key-sorted, which is what makes the emitted bytes canonical.
pub fn write_container(
    path: &Path,
    meta: &Value,
    tensors: &BTreeMap<String, Tensor>,
) -> Result<()> {
    let mut entries = BTreeMap::new();
    let mut offset = 0usize;
    for (name, t) in tensors {
        entries.insert(
            name.clone(),
            TensorEntry { dtype: "f32".to_string(), shape: t.shape().to_vec(), offset },
        );
        offset = pad_to(offset + t.numel() * 4);
    }
    let header = Header { meta: meta.clone(), tensors: entries };
    let header_json = serde_json::to_vec(&header)?;

    let data_start = pad_to(MAGIC.len() + 8 + header_json.len());
    let mut out = Vec::with_capacity(data_start + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.resize(data_start, 0);
    for t in tensors.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.resize(pad_to(out.len() - data_start) + data_start, 0);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Read a container back into its metadata and named tensors. Every
/// structural defect (wrong magic, truncation, out-of-range offsets, unknown
/// dtypes) is reported with a diagnostic naming the problem.
pub fn read_container(path: &Path) -> Result<(Value, BTreeMap<String, Tensor>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;

    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::format(format!(
            "{}: {} bytes is too short to hold the magic and header length",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| {
            Error::format(format!(
                "{}: header length {header_len} runs past the {}-byte file",
                path.display(),
                bytes.len()
            ))
        })?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end]).map_err(|e| {
        Error::format(format!("{}: header is not valid JSON: {e}", path.display()))
    })?;

    let data_start = pad_to(header_end);
    let data = bytes.get(data_start.min(bytes.len())..).unwrap_or(&[]);
    let mut tensors = BTreeMap::new();
    for (name, entry) in header.tensors {
        if entry.dtype != "f32" {
            return Err(Error::format(format!(
                "{}: tensor {name} has unsupported dtype {:?}",
                path.display(),
                entry.dtype
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let nbytes = numel * 4;
        let end = entry.offset.checked_add(nbytes).filter(|&e| e <= data.len());
        let Some(end) = end else {
            return Err(Error::format(format!(
                "{}: tensor {name} ({nbytes} bytes at offset {}) runs past the {}-byte data section — truncated file?",
                path.display(),
                entry.offset,
                data.len()
            )));
        };
        let mut values = Vec::with_capacity(numel);
        for chunk in data[entry.offset..end].chunks_exact(4) {
            values.push(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        }
        tensors.insert(name, Tensor::from_vec(entry.shape, values)?);
    }
    Ok((header.meta, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_tensors() -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        m.insert(
            "beta".to_string(),
            Tensor::from_vec(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 7.5, -0.125]).unwrap(),
        );
        m.insert("alpha".to_string(), Tensor::from_vec(vec![3], vec![9.0, -9.0, 0.5]).unwrap());
        m
    }

    #[test]
    fn round_trip_preserves_meta_and_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.tsl");
        let meta = json!({"kind": "test", "note": "round trip", "n": 2});
        write_container(&path, &meta, &sample_tensors()).unwrap();
        let (meta2, tensors2) = read_container(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(tensors2.len(), 2);
        assert_eq!(tensors2["beta"].shape(), &[2, 3]);
        assert_eq!(tensors2["beta"].data(), sample_tensors()["beta"].data());
        assert_eq!(tensors2["alpha"].data(), sample_tensors()["alpha"].data());
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.tsl");
        let second = dir.path().join("b.tsl");
        let meta = json!({"kind": "test", "fields": {"z": 1, "a": [1, 2]}});
        write_container(&first, &meta, &sample_tensors()).unwrap();
        let (meta2, tensors2) = read_container(&first).unwrap();
        write_container(&second, &meta2, &tensors2).unwrap();
        assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    }

    #[test]
    fn payloads_are_64_byte_aligned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aligned.tsl");
        write_container(&path, &json!({}), &sample_tensors()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let data_start = pad_to(16 + header_len);
        assert_eq!(data_start % 64, 0);
        // First tensor (name-sorted: "alpha") starts at data offset 0 and the
        // next one begins on the following 64-byte boundary.
        let header: Header = serde_json::from_slice(&bytes[16..16 + header_len]).unwrap();
        assert_eq!(header.tensors["alpha"].offset, 0);
        assert_eq!(header.tensors["beta"].offset % 64, 0);
        assert!(header.tensors["beta"].offset > 0);
    }

    #[test]
    fn bad_magic_is_rejected_with_a_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsl");
        write_container(&path, &json!({}), &sample_tensors()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = read_container(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "got: {err}");
    }

    #[test]
    fn truncated_payload_is_rejected_with_a_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.tsl");
        write_container(&path, &json!({}), &sample_tensors()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // Cut past the trailing alignment padding into the last payload.
        std::fs::write(&path, &bytes[..bytes.len() - 48]).unwrap();
        let err = read_container(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "got: {err}");

        // Cutting into the header is also caught.
        std::fs::write(&path, &bytes[..20]).unwrap();
        let err = read_container(&path).unwrap_err();
        assert!(err.to_string().contains("header length"), "got: {err}");

        // And an empty file names the size problem.
        std::fs::write(&path, b"TSLW").unwrap();
        let err = read_container(&path).unwrap_err();
        assert!(err.to_string().contains("too short"), "got: {err}");
    }

    #[test]
    fn unsupported_dtype_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dtype.tsl");
        write_container(&path, &json!({}), &sample_tensors()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = String::from_utf8(bytes[16..16 + header_len].to_vec()).unwrap();
        let patched = json.replace("\"f32\"", "\"f64\"");
        assert_ne!(json, patched);
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(patched.len() as u64).to_le_bytes());
        out.extend_from_slice(patched.as_bytes());
        out.resize(pad_to(out.len()), 0);
        out.extend_from_slice(&bytes[pad_to(16 + header_len)..]);
        std::fs::write(&path, &out).unwrap();
        let err = read_container(&path).unwrap_err();
        assert!(err.to_string().contains("dtype"), "got: {err}");
    }

    #[test]
    fn empty_tensor_map_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsl");
        write_container(&path, &json!({"kind": "empty"}), &BTreeMap::new()).unwrap();
        let (meta, tensors) = read_container(&path).unwrap();
        assert_eq!(meta["kind"], "empty");
        assert!(tensors.is_empty());
    }
}
