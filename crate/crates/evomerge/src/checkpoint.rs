//! Tensor checkpoints in the safetensors container format.
//!
//! Layout: bytes 0..8 hold the header length N as u64 little-endian,
//! bytes 8..8+N hold a UTF-8 JSON header mapping tensor name to
//! `{"dtype", "shape", "data_offsets"}`, and the rest of the file is one
//! contiguous little-endian byte buffer the offsets index into. Writes are
//! deterministic: tensor names are serialized in lexicographic order with
//! buffers packed back to back, so the bytes of a file are a pure function
//! of its [`TensorMap`]. The reader rejects gaps, overlaps and
//! out-of-bounds offsets rather than tolerating them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest JSON header the reader will accept, to bound memory on
/// malformed input.
pub const MAX_HEADER_BYTES: u64 = 100 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("file too short for the 8-byte header length")]
    TruncatedPrefix,
    #[error("header length {len} exceeds file size {file}")]
    HeaderPastEof { len: u64, file: u64 },
    #[error("header length {0} exceeds the {MAX_HEADER_BYTES}-byte limit")]
    HeaderTooLarge(u64),
    #[error("header is not valid JSON: {0}")]
    HeaderJson(String),
    #[error("tensor {name}: unknown dtype tag {tag:?}")]
    UnknownDtype { name: String, tag: String },
    #[error("tensor {name}: data_offsets [{begin}, {end}) out of bounds for a {buffer}-byte buffer")]
    OffsetsOutOfBounds {
        name: String,
        begin: usize,
        end: usize,
        buffer: usize,
    },
    #[error("tensor {name}: declared offsets span {got} bytes but dtype/shape require {want}")]
    LengthMismatch { name: String, got: usize, want: usize },
    #[error("tensor {name}: data_offsets begin {begin} after end {end}")]
    OffsetsReversed { name: String, begin: usize, end: usize },
    #[error("tensor {name}: buffer overlaps or leaves a gap (expected to start at {expected}, starts at {begin})")]
    NotContiguous {
        name: String,
        expected: usize,
        begin: usize,
    },
    #[error("buffer has {trailing} trailing bytes not covered by any tensor")]
    TrailingBytes { trailing: usize },
    #[error("tensor name is empty")]
    EmptyName,
    #[error("compat check needs at least 2 checkpoints, got {0}")]
    TooFewForCompat(usize),
}

/// Element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dtype {
    F64,
    F32,
    F16,
    Bf16,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
            Dtype::F16 | Dtype::Bf16 => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Dtype::F64 => "F64",
            Dtype::F32 => "F32",
            Dtype::F16 => "F16",
            Dtype::Bf16 => "BF16",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "F64" => Some(Dtype::F64),
            "F32" => Some(Dtype::F32),
            "F16" => Some(Dtype::F16),
            "BF16" => Some(Dtype::Bf16),
            _ => None,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A dense tensor: dtype tag, shape, and its raw little-endian bytes.
///
/// Storage stays byte-exact through read/write round trips; merge math
/// decodes to f64 and re-encodes only when producing new tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dtype: Dtype,
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl Tensor {
    /// Wrap raw little-endian bytes. Length must match dtype and shape.
    pub fn from_raw(dtype: Dtype, shape: Vec<usize>, data: Vec<u8>) -> Result<Self, String> {
        let elems: usize = shape.iter().product();
        let want = elems * dtype.size();
        if data.len() != want {
            return Err(format!(
                "raw buffer is {} bytes but {:?} x {} needs {}",
                data.len(),
                shape,
                dtype.tag(),
                want
            ));
        }
        Ok(Tensor { dtype, shape, data })
    }

    /// Encode f64 values into the given storage dtype.
    pub fn from_f64(dtype: Dtype, shape: Vec<usize>, values: &[f64]) -> Result<Self, String> {
        let elems: usize = shape.iter().product();
        if values.len() != elems {
            return Err(format!(
                "{} values for shape {:?} (needs {})",
                values.len(),
                shape,
                elems
            ));
        }
        let mut data = Vec::with_capacity(elems * dtype.size());
        match dtype {
            Dtype::F64 => {
                for &v in values {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            }
            Dtype::F32 => {
                for &v in values {
                    data.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Dtype::F16 => {
                for &v in values {
                    data.extend_from_slice(&half::f16::from_f64(v).to_le_bytes());
                }
            }
            Dtype::Bf16 => {
                for &v in values {
                    data.extend_from_slice(&half::bf16::from_f64(v).to_le_bytes());
                }
            }
        }
        Ok(Tensor { dtype, shape, data })
    }

    /// Convenience constructor for f32 test tensors.
    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Self {
        let as_f64: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        Tensor::from_f64(Dtype::F32, shape, &as_f64).expect("shape/value count mismatch")
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decode storage into f64 working precision.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self.dtype {
            Dtype::F64 => self
                .data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F32 => self
                .data
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect(),
            Dtype::F16 => self
                .data
                .chunks_exact(2)
                .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f64())
                .collect(),
            Dtype::Bf16 => self
                .data
                .chunks_exact(2)
                .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f64())
                .collect(),
        }
    }
}

/// A named collection of tensors plus optional string metadata; the unit a
/// merge consumes and produces. Entries iterate in lexicographic name
/// order and names are non-empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorMap {
    tensors: BTreeMap<String, Tensor>,
    metadata: Option<BTreeMap<String, String>>,
}

impl TensorMap {
    pub fn new() -> Self {
        TensorMap::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), CheckpointError> {
        let name = name.into();
        if name.is_empty() {
            return Err(CheckpointError::EmptyName);
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Tensor names in lexicographic order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn metadata(&self) -> Option<&BTreeMap<String, String>> {
        self.metadata.as_ref()
    }

    pub fn set_metadata(&mut self, metadata: Option<BTreeMap<String, String>>) {
        self.metadata = metadata;
    }

    /// Serialized safetensors bytes; identical input produces identical
    /// bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        // Offsets are assigned in lexicographic name order, packed with no
        // gaps. The header is assembled by hand so key order is ours.
        let mut header = String::from("{");
        if let Some(md) = &self.metadata {
            header.push_str("\"__metadata__\":{");
            for (i, (k, v)) in md.iter().enumerate() {
                if i > 0 {
                    header.push(',');
                }
                header.push_str(&json_string(k));
                header.push(':');
                header.push_str(&json_string(v));
            }
            header.push('}');
            if !self.tensors.is_empty() {
                header.push(',');
            }
        }
        let mut offset = 0usize;
        let mut payload = Vec::new();
        for (i, (name, tensor)) in self.tensors.iter().enumerate() {
            if i > 0 {
                header.push(',');
            }
            let begin = offset;
            offset += tensor.raw().len();
            header.push_str(&json_string(name));
            header.push_str(":{\"dtype\":\"");
            header.push_str(tensor.dtype().tag());
            header.push_str("\",\"shape\":[");
            for (j, d) in tensor.shape().iter().enumerate() {
                if j > 0 {
                    header.push(',');
                }
                header.push_str(&d.to_string());
            }
            header.push_str("],\"data_offsets\":[");
            header.push_str(&begin.to_string());
            header.push(',');
            header.push_str(&offset.to_string());
            header.push_str("]}");
            payload.extend_from_slice(tensor.raw());
        }
        header.push('}');

        let header_bytes = header.into_bytes();
        let mut out = Vec::with_capacity(8 + header_bytes.len() + payload.len());
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        out.extend_from_slice(&payload);
        out
    }

    /// Parse safetensors bytes, validating offsets strictly.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 {
            return Err(CheckpointError::TruncatedPrefix);
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        if header_len > MAX_HEADER_BYTES {
            return Err(CheckpointError::HeaderTooLarge(header_len));
        }
        let body_start = 8u64
            .checked_add(header_len)
            .ok_or(CheckpointError::HeaderTooLarge(header_len))?;
        if body_start > bytes.len() as u64 {
            return Err(CheckpointError::HeaderPastEof {
                len: header_len,
                file: bytes.len() as u64,
            });
        }
        let header = &bytes[8..body_start as usize];
        let buffer = &bytes[body_start as usize..];

        let parsed: serde_json::Value = serde_json::from_slice(header)
            .map_err(|e| CheckpointError::HeaderJson(e.to_string()))?;
        let obj = parsed
            .as_object()
            .ok_or_else(|| CheckpointError::HeaderJson("header is not a JSON object".into()))?;

        let mut metadata = None;
        let mut entries: Vec<(String, Dtype, Vec<usize>, usize, usize)> = Vec::new();
        for (name, value) in obj {
            if name == "__metadata__" {
                let map = value
                    .as_object()
                    .ok_or_else(|| CheckpointError::HeaderJson("__metadata__ is not an object".into()))?;
                let mut md = BTreeMap::new();
                for (k, v) in map {
                    let s = v.as_str().ok_or_else(|| {
                        CheckpointError::HeaderJson(format!("__metadata__ value for {k:?} is not a string"))
                    })?;
                    md.insert(k.clone(), s.to_string());
                }
                metadata = Some(md);
                continue;
            }
            if name.is_empty() {
                return Err(CheckpointError::EmptyName);
            }
            let entry = value
                .as_object()
                .ok_or_else(|| CheckpointError::HeaderJson(format!("entry {name:?} is not an object")))?;
            let tag = entry
                .get("dtype")
                .and_then(|v| v.as_str())
                .ok_or_else(|| CheckpointError::HeaderJson(format!("entry {name:?} missing dtype")))?;
            let dtype = Dtype::from_tag(tag).ok_or_else(|| CheckpointError::UnknownDtype {
                name: name.clone(),
                tag: tag.to_string(),
            })?;
            let shape = entry
                .get("shape")
                .and_then(|v| v.as_array())
                .ok_or_else(|| CheckpointError::HeaderJson(format!("entry {name:?} missing shape")))?
                .iter()
                .map(|v| {
                    v.as_u64().map(|d| d as usize).ok_or_else(|| {
                        CheckpointError::HeaderJson(format!("entry {name:?} has a non-integer extent"))
                    })
                })
                .collect::<Result<Vec<usize>, _>>()?;
            let offs = entry
                .get("data_offsets")
                .and_then(|v| v.as_array())
                .filter(|a| a.len() == 2)
                .ok_or_else(|| {
                    CheckpointError::HeaderJson(format!("entry {name:?} missing 2-element data_offsets"))
                })?;
            let begin = offs[0].as_u64().ok_or_else(|| {
                CheckpointError::HeaderJson(format!("entry {name:?} has a non-integer offset"))
            })? as usize;
            let end = offs[1].as_u64().ok_or_else(|| {
                CheckpointError::HeaderJson(format!("entry {name:?} has a non-integer offset"))
            })? as usize;
            entries.push((name.clone(), dtype, shape, begin, end));
        }

        // Offsets must tile the buffer exactly: sorted by begin, no gaps,
        // no overlaps, nothing out of bounds, nothing left over.
        let mut by_offset: Vec<usize> = (0..entries.len()).collect();
        by_offset.sort_by_key(|&i| entries[i].3);
        let mut expected = 0usize;
        for &i in &by_offset {
            let (name, dtype, shape, begin, end) = &entries[i];
            if begin > end {
                return Err(CheckpointError::OffsetsReversed {
                    name: name.clone(),
                    begin: *begin,
                    end: *end,
                });
            }
            if *end > buffer.len() {
                return Err(CheckpointError::OffsetsOutOfBounds {
                    name: name.clone(),
                    begin: *begin,
                    end: *end,
                    buffer: buffer.len(),
                });
            }
            let want: usize = shape.iter().product::<usize>() * dtype.size();
            if end - begin != want {
                return Err(CheckpointError::LengthMismatch {
                    name: name.clone(),
                    got: end - begin,
                    want,
                });
            }
            if *begin != expected {
                return Err(CheckpointError::NotContiguous {
                    name: name.clone(),
                    expected,
                    begin: *begin,
                });
            }
            expected = *end;
        }
        if expected != buffer.len() {
            return Err(CheckpointError::TrailingBytes {
                trailing: buffer.len() - expected,
            });
        }

        let mut map = TensorMap::new();
        map.set_metadata(metadata);
        for (name, dtype, shape, begin, end) in entries {
            let tensor = Tensor {
                dtype,
                shape,
                data: buffer[begin..end].to_vec(),
            };
            map.tensors.insert(name, tensor);
        }
        Ok(map)
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

/// Read a checkpoint file into memory.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<TensorMap, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TensorMap::from_bytes(&bytes)
}

/// Write a checkpoint file. Byte output is deterministic for identical
/// input.
pub fn write_checkpoint(map: &TensorMap, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, map.to_bytes()).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Structural agreement report across checkpoints to be merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    pub compatible: bool,
    /// Per checkpoint index: names present elsewhere but missing here.
    pub missing_keys: Vec<Vec<String>>,
    /// (name, per-checkpoint shapes) for tensors whose shapes disagree.
    pub shape_mismatches: Vec<(String, Vec<Vec<usize>>)>,
    /// (name, per-checkpoint dtype tags) for tensors whose dtypes disagree.
    pub dtype_mismatches: Vec<(String, Vec<String>)>,
}

/// Compare key sets, shapes and dtypes across all maps. Mismatches are
/// reported, never raised.
pub fn validate_compat(maps: &[&TensorMap]) -> Result<CompatReport, CheckpointError> {
    if maps.len() < 2 {
        return Err(CheckpointError::TooFewForCompat(maps.len()));
    }
    let mut all_names: Vec<&str> = maps.iter().flat_map(|m| m.names()).collect();
    all_names.sort_unstable();
    all_names.dedup();

    let mut missing_keys = vec![Vec::new(); maps.len()];
    let mut shape_mismatches = Vec::new();
    let mut dtype_mismatches = Vec::new();

    for name in all_names {
        let present: Vec<Option<&Tensor>> = maps.iter().map(|m| m.get(name)).collect();
        let mut everywhere = true;
        for (i, t) in present.iter().enumerate() {
            if t.is_none() {
                missing_keys[i].push(name.to_string());
                everywhere = false;
            }
        }
        if !everywhere {
            continue;
        }
        let tensors: Vec<&Tensor> = present.into_iter().map(Option::unwrap).collect();
        if tensors.windows(2).any(|w| w[0].shape() != w[1].shape()) {
            shape_mismatches.push((
                name.to_string(),
                tensors.iter().map(|t| t.shape().to_vec()).collect(),
            ));
        }
        if tensors.windows(2).any(|w| w[0].dtype() != w[1].dtype()) {
            dtype_mismatches.push((
                name.to_string(),
                tensors.iter().map(|t| t.dtype().tag().to_string()).collect(),
            ));
        }
    }

    let compatible = missing_keys.iter().all(Vec::is_empty)
        && shape_mismatches.is_empty()
        && dtype_mismatches.is_empty();
    Ok(CompatReport {
        compatible,
        missing_keys,
        shape_mismatches,
        dtype_mismatches,
    })
}
