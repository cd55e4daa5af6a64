//! Named-tensor checkpoint container: bit-exact reading, writing, and
//! compatibility validation.
//!
//! On-disk layout: a `u64` little-endian header length `N`, then `N` bytes
//! of UTF-8 JSON mapping tensor name to `{dtype, shape, offsets}`, then a
//! contiguous data region holding the tensors little-endian row-major.
//! Offsets are relative to the start of the data region. Header order is
//! authoritative for iteration; no sorting is applied.

use indexmap::IndexMap;
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const METADATA_KEY: &str = "__metadata__";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("header/offset inconsistency: {0}")]
    Offsets(String),
    #[error("duplicate tensor name: {0}")]
    DuplicateName(String),
    #[error("unknown dtype: {0}")]
    UnknownDtype(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("invalid tensor {name}: {reason}")]
    InvalidTensor { name: String, reason: String },
}

/// Element type of a stored tensor. BF16 is preserved on disk, never
/// upcast; arithmetic upcasts in memory only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum DType {
    F32,
    F64,
    BF16,
}

impl DType {
    pub fn element_size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::BF16 => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self, StoreError> {
        match s {
            "F32" => Ok(DType::F32),
            "F64" => Ok(DType::F64),
            "BF16" => Ok(DType::BF16),
            other => Err(StoreError::UnknownDtype(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F64 => "F64",
            DType::BF16 => "BF16",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn bf16_bits_to_f32(bits: u16) -> f32 {
    f32::from_bits((bits as u32) << 16)
}

/// Round-to-nearest-even truncation of an `f32` to BF16 bits.
pub fn f32_to_bf16_bits(x: f32) -> u16 {
    let bits = x.to_bits();
    if x.is_nan() {
        return ((bits >> 16) as u16) | 0x0040;
    }
    let rounding_bias = 0x7fff + ((bits >> 16) & 1);
    ((bits + rounding_bias) >> 16) as u16
}

/// A named, shaped, typed tensor backed by a raw little-endian buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl Tensor {
    pub fn new(
        name: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
        data: Vec<u8>,
    ) -> Result<Self, StoreError> {
        let name = name.into();
        let t = Tensor {
            name,
            dtype,
            shape,
            data,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_f32(name: impl Into<String>, shape: Vec<usize>, values: &[f32]) -> Self {
        let mut data = Vec::with_capacity(values.len() * 4);
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        Tensor::new(name, DType::F32, shape, data).expect("shape/value count mismatch")
    }

    pub fn from_f64(name: impl Into<String>, shape: Vec<usize>, values: &[f64]) -> Self {
        let mut data = Vec::with_capacity(values.len() * 8);
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        Tensor::new(name, DType::F64, shape, data).expect("shape/value count mismatch")
    }

    pub fn from_bf16_bits(name: impl Into<String>, shape: Vec<usize>, bits: &[u16]) -> Self {
        let mut data = Vec::with_capacity(bits.len() * 2);
        for b in bits {
            data.extend_from_slice(&b.to_le_bytes());
        }
        Tensor::new(name, DType::BF16, shape, data).expect("shape/value count mismatch")
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.name.is_empty() {
            return Err(StoreError::InvalidTensor {
                name: "<empty>".into(),
                reason: "empty tensor name".into(),
            });
        }
        let expected = self.numel() * self.dtype.element_size();
        if expected != self.data.len() {
            return Err(StoreError::InvalidTensor {
                name: self.name.clone(),
                reason: format!(
                    "shape {:?} x {} bytes/elem = {} bytes, buffer holds {}",
                    self.shape,
                    self.dtype.element_size(),
                    expected,
                    self.data.len()
                ),
            });
        }
        Ok(())
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Elements upcast to `f64`, in storage (row-major) order.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self.dtype {
            DType::F32 => self
                .data
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
            DType::F64 => self
                .data
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
                .collect(),
            DType::BF16 => self
                .data
                .chunks_exact(2)
                .map(|b| bf16_bits_to_f32(u16::from_le_bytes([b[0], b[1]])) as f64)
                .collect(),
        }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        match self.dtype {
            DType::F32 => self
                .data
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            _ => self.to_f64_vec().into_iter().map(|v| v as f32).collect(),
        }
    }
}

/// An ordered collection of named tensors plus string metadata.
///
/// Iteration order equals serialized header order, so load/save round-trips
/// are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: IndexMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn insert(&mut self, tensor: Tensor) -> Result<(), StoreError> {
        tensor.validate()?;
        if self.tensors.contains_key(&tensor.name) {
            return Err(StoreError::DuplicateName(tensor.name));
        }
        self.tensors.insert(tensor.name.clone(), tensor);
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

    /// Tensors in header order.
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    /// Total bytes of tensor data (excludes header).
    pub fn data_len(&self) -> usize {
        self.iter().map(|t| t.data.len()).sum()
    }
}

// ── Container i/o ───────────────────────────────────────────────────────────

struct HeaderEntry {
    dtype: DType,
    shape: Vec<usize>,
    begin: usize,
    end: usize,
}

type ParsedHeader = (Vec<(String, HeaderEntry)>, BTreeMap<String, String>);

fn parse_header(bytes: &[u8]) -> Result<ParsedHeader, StoreError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| StoreError::BadHeader(format!("header is not UTF-8: {e}")))?;
    let root: Value = serde_json::from_str(text)
        .map_err(|e| StoreError::BadHeader(format!("header is not valid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| StoreError::BadHeader("header root is not an object".into()))?;

    let mut entries = Vec::new();
    let mut metadata = BTreeMap::new();
    for (name, value) in obj {
        if name == METADATA_KEY {
            let meta = value
                .as_object()
                .ok_or_else(|| StoreError::BadHeader(format!("{METADATA_KEY} is not an object")))?;
            for (k, v) in meta {
                let s = v.as_str().ok_or_else(|| {
                    StoreError::BadHeader(format!("metadata value for {k} is not a string"))
                })?;
                metadata.insert(k.clone(), s.to_string());
            }
            continue;
        }
        let desc = value.as_object().ok_or_else(|| {
            StoreError::BadHeader(format!("descriptor for {name} is not an object"))
        })?;
        let dtype_str = desc
            .get("dtype")
            .and_then(Value::as_str)
            .ok_or_else(|| StoreError::BadHeader(format!("missing dtype for {name}")))?;
        let dtype = DType::parse(dtype_str)?;
        let shape = desc
            .get("shape")
            .and_then(Value::as_array)
            .ok_or_else(|| StoreError::BadHeader(format!("missing shape for {name}")))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|u| u as usize)
                    .ok_or_else(|| StoreError::BadHeader(format!("bad shape entry for {name}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let offsets = desc
            .get("offsets")
            .and_then(Value::as_array)
            .ok_or_else(|| StoreError::BadHeader(format!("missing offsets for {name}")))?;
        if offsets.len() != 2 {
            return Err(StoreError::BadHeader(format!(
                "offsets for {name} must be [begin,end]"
            )));
        }
        let begin = offsets[0]
            .as_u64()
            .ok_or_else(|| StoreError::BadHeader(format!("bad begin offset for {name}")))?
            as usize;
        let end = offsets[1]
            .as_u64()
            .ok_or_else(|| StoreError::BadHeader(format!("bad end offset for {name}")))?
            as usize;
        entries.push((
            name.clone(),
            HeaderEntry {
                dtype,
                shape,
                begin,
                end,
            },
        ));
    }
    Ok((entries, metadata))
}

/// Parse a checkpoint from raw container bytes.
pub fn read_checkpoint_bytes(bytes: &[u8]) -> Result<Checkpoint, StoreError> {
    if bytes.len() < 8 {
        return Err(StoreError::Truncated(format!(
            "file holds {} bytes, need at least 8 for the header length",
            bytes.len()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let data_start = 8usize
        .checked_add(header_len)
        .ok_or_else(|| StoreError::Truncated("header length overflows".into()))?;
    if data_start > bytes.len() {
        return Err(StoreError::Truncated(format!(
            "declared header length {} exceeds file size {}",
            header_len,
            bytes.len()
        )));
    }
    let (entries, metadata) = parse_header(&bytes[8..data_start])?;
    let data = &bytes[data_start..];

    let mut ckpt = Checkpoint::new();
    ckpt.metadata = metadata;
    for (name, entry) in entries {
        if entry.end < entry.begin {
            return Err(StoreError::Offsets(format!(
                "{name}: end offset {} precedes begin {}",
                entry.end, entry.begin
            )));
        }
        if entry.end > data.len() {
            return Err(StoreError::Offsets(format!(
                "{name}: end offset {} exceeds data region of {} bytes",
                entry.end,
                data.len()
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let expected = numel * entry.dtype.element_size();
        if expected != entry.end - entry.begin {
            return Err(StoreError::Offsets(format!(
                "{name}: shape {:?} needs {} bytes, offsets span {}",
                entry.shape,
                expected,
                entry.end - entry.begin
            )));
        }
        let tensor = Tensor {
            name: name.clone(),
            dtype: entry.dtype,
            shape: entry.shape,
            data: data[entry.begin..entry.end].to_vec(),
        };
        tensor.validate()?;
        ckpt.insert(tensor)?;
    }
    Ok(ckpt)
}

/// Serialize a checkpoint to container bytes. Tensor data is laid out
/// contiguously in iteration order; metadata keys are sorted, so the
/// encoding is a pure function of the checkpoint contents.
pub fn write_checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>, StoreError> {
    let mut header = serde_json::Map::new();
    let mut offset = 0usize;
    for tensor in ckpt.iter() {
        tensor.validate()?;
        let end = offset + tensor.data.len();
        let mut desc = serde_json::Map::new();
        desc.insert("dtype".into(), Value::String(tensor.dtype.as_str().into()));
        desc.insert(
            "shape".into(),
            Value::Array(
                tensor
                    .shape
                    .iter()
                    .map(|&d| Value::from(d as u64))
                    .collect(),
            ),
        );
        desc.insert(
            "offsets".into(),
            Value::Array(vec![Value::from(offset as u64), Value::from(end as u64)]),
        );
        header.insert(tensor.name.clone(), Value::Object(desc));
        offset = end;
    }
    if !ckpt.metadata.is_empty() {
        let meta: serde_json::Map<String, Value> = ckpt
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        header.insert(METADATA_KEY.into(), Value::Object(meta));
    }
    let header_text = serde_json::to_string(&Value::Object(header))
        .map_err(|e| StoreError::BadHeader(format!("header serialization failed: {e}")))?;

    let mut out = Vec::with_capacity(8 + header_text.len() + offset);
    out.extend_from_slice(&(header_text.len() as u64).to_le_bytes());
    out.extend_from_slice(header_text.as_bytes());
    for tensor in ckpt.iter() {
        out.extend_from_slice(&tensor.data);
    }
    Ok(out)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, StoreError> {
    let mut bytes = Vec::new();
    fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    read_checkpoint_bytes(&bytes)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let bytes = write_checkpoint_bytes(ckpt)?;
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(&bytes)?;
    Ok(())
}

// ── Compatibility ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompatIssue {
    /// Tensor present in `a` but missing from `b`.
    MissingInB(String),
    /// Tensor present in `b` but missing from `a`.
    MissingInA(String),
    ShapeMismatch {
        name: String,
        a: Vec<usize>,
        b: Vec<usize>,
    },
    DtypeMismatch {
        name: String,
        a: DType,
        b: DType,
    },
}

impl fmt::Display for CompatIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompatIssue::MissingInB(n) => write!(f, "missing in b: {n}"),
            CompatIssue::MissingInA(n) => write!(f, "missing in a: {n}"),
            CompatIssue::ShapeMismatch { name, a, b } => {
                write!(f, "shape mismatch for {name}: {a:?} vs {b:?}")
            }
            CompatIssue::DtypeMismatch { name, a, b } => {
                write!(f, "dtype mismatch for {name}: {a} vs {b}")
            }
        }
    }
}

/// Name-set, shape, and dtype differences between two checkpoints.
/// Weight arithmetic is legal iff the report is empty.
#[derive(Debug, Clone, Default)]
pub struct CompatReport {
    pub issues: Vec<CompatIssue>,
}

impl CompatReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for CompatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "compatible");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_compat(a: &Checkpoint, b: &Checkpoint) -> CompatReport {
    let mut issues = Vec::new();
    for ta in a.iter() {
        match b.get(&ta.name) {
            None => issues.push(CompatIssue::MissingInB(ta.name.clone())),
            Some(tb) => {
                if ta.shape != tb.shape {
                    issues.push(CompatIssue::ShapeMismatch {
                        name: ta.name.clone(),
                        a: ta.shape.clone(),
                        b: tb.shape.clone(),
                    });
                }
                if ta.dtype != tb.dtype {
                    issues.push(CompatIssue::DtypeMismatch {
                        name: ta.name.clone(),
                        a: ta.dtype,
                        b: tb.dtype,
                    });
                }
            }
        }
    }
    for tb in b.iter() {
        if a.get(&tb.name).is_none() {
            issues.push(CompatIssue::MissingInA(tb.name.clone()));
        }
    }
    CompatReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tensor_ckpt() -> Checkpoint {
        let mut c = Checkpoint::new();
        c.insert(Tensor::from_f32("w", vec![2, 2], &[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        c.insert(Tensor::from_f32("b", vec![2], &[0.5, -0.5]))
            .unwrap();
        c.metadata.insert("id".into(), "toy".into());
        c
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ckpt = two_tensor_ckpt();
        let bytes = write_checkpoint_bytes(&ckpt).unwrap();
        let loaded = read_checkpoint_bytes(&bytes).unwrap();
        let bytes2 = write_checkpoint_bytes(&loaded).unwrap();
        assert_eq!(bytes, bytes2);
        assert_eq!(ckpt, loaded);
    }

    #[test]
    fn save_is_deterministic() {
        let ckpt = two_tensor_ckpt();
        let a = write_checkpoint_bytes(&ckpt).unwrap();
        let b = write_checkpoint_bytes(&ckpt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_checkpoint_round_trips() {
        let ckpt = Checkpoint::new();
        let bytes = write_checkpoint_bytes(&ckpt).unwrap();
        let loaded = read_checkpoint_bytes(&bytes).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(bytes, write_checkpoint_bytes(&loaded).unwrap());
    }

    #[test]
    fn bf16_round_trips_bit_exactly() {
        let bits = [0x3f80u16, 0x4000, 0x7f80, 0x0001];
        let mut ckpt = Checkpoint::new();
        ckpt.insert(Tensor::from_bf16_bits("t", vec![4], &bits))
            .unwrap();
        let bytes = write_checkpoint_bytes(&ckpt).unwrap();
        let loaded = read_checkpoint_bytes(&bytes).unwrap();
        let t = loaded.get("t").unwrap();
        assert_eq!(t.dtype, DType::BF16);
        assert_eq!(t.data, ckpt.get("t").unwrap().data);
    }

    // Bytes written by hand from the container layout: u64 LE header
    // length, a header describing one F32 tensor "w" of shape [2,2], then
    // 16 data bytes for the values [1,2,3,4].
    #[test]
    fn hand_constructed_file_parses() {
        let header = br#"{"w":{"dtype":"F32","shape":[2,2],"offsets":[0,16]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let ckpt = read_checkpoint_bytes(&bytes).unwrap();
        let w = ckpt.get("w").unwrap();
        assert_eq!(w.shape, vec![2, 2]);
        assert_eq!(w.to_f32_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        // And the writer reproduces the same bytes for the same contents.
        let mut rebuilt = Checkpoint::new();
        rebuilt
            .insert(Tensor::from_f32("w", vec![2, 2], &[1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        assert_eq!(write_checkpoint_bytes(&rebuilt).unwrap(), bytes);
    }

    #[test]
    fn declared_header_longer_than_file_is_truncation() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1000u64.to_le_bytes());
        bytes.extend_from_slice(b"{}");
        match read_checkpoint_bytes(&bytes) {
            Err(StoreError::Truncated(_)) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn short_file_is_truncation() {
        match read_checkpoint_bytes(&[1, 2, 3]) {
            Err(StoreError::Truncated(_)) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_name_rejected() {
        let header = br#"{"w":{"dtype":"F32","shape":[1],"offsets":[0,4]}}"#;
        // JSON objects cannot carry duplicate keys portably, so exercise the
        // checkpoint-level check directly.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        let ckpt = read_checkpoint_bytes(&bytes).unwrap();
        let mut dup = ckpt.clone();
        match dup.insert(Tensor::from_f32("w", vec![1], &[2.0])) {
            Err(StoreError::DuplicateName(n)) => assert_eq!(n, "w"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_dtype_rejected() {
        let header = br#"{"w":{"dtype":"I8","shape":[1],"offsets":[0,1]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.push(7);
        match read_checkpoint_bytes(&bytes) {
            Err(StoreError::UnknownDtype(d)) => assert_eq!(d, "I8"),
            other => panic!("expected dtype error, got {other:?}"),
        }
    }

    #[test]
    fn offset_past_data_region_rejected() {
        let header = br#"{"w":{"dtype":"F32","shape":[2],"offsets":[0,8]}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&1.0f32.to_le_bytes()); // only 4 of 8 bytes
        match read_checkpoint_bytes(&bytes) {
            Err(StoreError::Offsets(_)) => {}
            other => panic!("expected offset error, got {other:?}"),
        }
    }

    #[test]
    fn shape_data_mismatch_rejected() {
        match Tensor::new("w", DType::F32, vec![3], vec![0u8; 8]) {
            Err(StoreError::InvalidTensor { .. }) => {}
            other => panic!("expected invalid tensor, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ckpt");
        let ckpt = two_tensor_ckpt();
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, loaded);
        let path2 = dir.path().join("toy2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn compat_report_cases() {
        let a = two_tensor_ckpt();
        assert!(validate_compat(&a, &a).is_empty());

        let mut b = Checkpoint::new();
        b.insert(Tensor::from_f32("w", vec![2, 2], &[0.0; 4]))
            .unwrap();
        let report = validate_compat(&a, &b);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0], CompatIssue::MissingInB("b".into()));

        let mut c = Checkpoint::new();
        c.insert(Tensor::from_f32("w", vec![4], &[0.0; 4])).unwrap();
        c.insert(Tensor::from_f32("b", vec![2], &[0.0; 2])).unwrap();
        let report = validate_compat(&a, &c);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(
            report.issues[0],
            CompatIssue::ShapeMismatch { .. }
        ));

        let mut d = Checkpoint::new();
        d.insert(Tensor::from_f64("w", vec![2, 2], &[0.0; 4]))
            .unwrap();
        d.insert(Tensor::from_f32("b", vec![2], &[0.0; 2])).unwrap();
        let report = validate_compat(&a, &d);
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, CompatIssue::DtypeMismatch { .. })));
    }

    #[test]
    fn bf16_conversion_helpers() {
        assert_eq!(bf16_bits_to_f32(0x3f80), 1.0);
        assert_eq!(f32_to_bf16_bits(1.0), 0x3f80);
        // Round-to-nearest-even at the halfway point.
        assert_eq!(f32_to_bf16_bits(bf16_bits_to_f32(0x4049)), 0x4049);
    }
}
