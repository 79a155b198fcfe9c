//! Model-keyed sentence embedding store and its on-disk formats.
//!
//! Sentences are keyed by the SHA-256 of their exact UTF-8 bytes; no
//! normalization happens before hashing.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SCEV"
//! 4       4     version (u32, = 1)
//! 8       4     dim (u32, >= 2)
//! 12      8     count (u64)
//! 20      4     model_id length in bytes (u32)
//! 24      n     model_id (UTF-8)
//! 24+n    ...   count records, each: 32-byte key, then dim × f32
//! ```
//!
//! Records are written in ascending key order. The JSONL alternative is a
//! header line `{"model": ..., "dim": ...}` followed by one
//! `{"h": <hex key>, "v": [..]}` line per record.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Embedding;

pub const MAGIC: &[u8; 4] = b"SCEV";
pub const VERSION: u32 = 1;
const FIXED_HEADER_LEN: usize = 24;
const KEY_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes; not an SCEV file")]
    BadMagic,
    #[error("unsupported SCEV version {0}")]
    VersionUnsupported(u32),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("{0} unexpected bytes after the last record")]
    TrailingData(u64),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("vector has dimension {got}, store expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("record {0}: invalid vector ({1})")]
    InvalidVector(u64, String),
    #[error("malformed JSONL store at line {line}: {message}")]
    Json { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// SHA-256 of a sentence's UTF-8 bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey([u8; KEY_LEN]);

impl SentenceKey {
    pub fn of(text: &str) -> Self {
        Self(Sha256::digest(text.as_bytes()).into())
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; KEY_LEN];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Self(out))
    }
}

impl fmt::Debug for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SentenceKey({})", &self.to_hex()[..12])
    }
}

/// Anything that can hand out an embedding for a sentence.
pub trait EmbeddingSource: Sync {
    fn embedding(&self, text: &str) -> Option<&Embedding>;
}

/// All embeddings of one model, keyed by sentence hash.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStore {
    model_id: String,
    dim: usize,
    entries: BTreeMap<SentenceKey, Embedding>,
}

impl ModelStore {
    pub fn new(model_id: impl Into<String>, dim: usize) -> Result<Self> {
        if dim < 2 || dim > u32::MAX as usize {
            return Err(StoreError::InvalidHeader(format!("dim {dim} out of range")));
        }
        let model_id = model_id.into();
        if model_id.len() > u32::MAX as usize {
            return Err(StoreError::InvalidHeader("model id too long".into()));
        }
        Ok(Self {
            model_id,
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts under `key`, returning the vector it replaced.
    pub fn insert(&mut self, key: SentenceKey, vector: Embedding) -> Result<Option<Embedding>> {
        if vector.dim() != self.dim {
            return Err(StoreError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        Ok(self.entries.insert(key, vector))
    }

    pub fn insert_text(&mut self, text: &str, vector: Embedding) -> Result<Option<Embedding>> {
        self.insert(SentenceKey::of(text), vector)
    }

    pub fn get(&self, key: &SentenceKey) -> Option<&Embedding> {
        self.entries.get(key)
    }

    /// Hash-then-get. Missing is a value, not an error.
    pub fn lookup(&self, text: &str) -> Option<&Embedding> {
        self.get(&SentenceKey::of(text))
    }

    pub fn contains(&self, text: &str) -> bool {
        self.lookup(text).is_some()
    }

    /// Entries in canonical (ascending key) order.
    pub fn iter(&self) -> impl Iterator<Item = (&SentenceKey, &Embedding)> {
        self.entries.iter()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&SentenceKey) -> bool) {
        self.entries.retain(|k, _| keep(k));
    }

    /// Serialized length of the binary form.
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + self.model_id.len() + self.len() * (KEY_LEN + 4 * self.dim)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.model_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.model_id.as_bytes());
        for (key, v) in &self.entries {
            out.extend_from_slice(key.as_bytes());
            for &x in v.as_slice() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let actual = bytes.len() as u64;
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(StoreError::BadMagic);
        }
        if bytes.len() < FIXED_HEADER_LEN {
            return Err(StoreError::TruncatedFile {
                expected: FIXED_HEADER_LEN as u64,
                actual,
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(StoreError::VersionUnsupported(version));
        }
        let dim = u32_at(8) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let id_len = u32_at(20) as usize;
        if dim < 2 {
            return Err(StoreError::InvalidHeader(format!("dim {dim} < 2")));
        }
        let record_len = (KEY_LEN + 4 * dim) as u64;
        let expected = count
            .checked_mul(record_len)
            .and_then(|p| p.checked_add((FIXED_HEADER_LEN + id_len) as u64))
            .ok_or_else(|| StoreError::InvalidHeader("record count overflows".into()))?;
        if actual < expected {
            return Err(StoreError::TruncatedFile { expected, actual });
        }
        if actual > expected {
            return Err(StoreError::TrailingData(actual - expected));
        }
        let body = FIXED_HEADER_LEN + id_len;
        let model_id = std::str::from_utf8(&bytes[FIXED_HEADER_LEN..body])
            .map_err(|e| StoreError::InvalidHeader(format!("model id is not UTF-8: {e}")))?
            .to_string();
        let mut store = Self::new(model_id, dim)?;
        for (i, rec) in bytes[body..].chunks_exact(record_len as usize).enumerate() {
            let key = SentenceKey::from_bytes(rec[..KEY_LEN].try_into().unwrap());
            let values: Vec<f32> = rec[KEY_LEN..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let v = Embedding::from_f32(&values)
                .map_err(|e| StoreError::InvalidVector(i as u64, e.to_string()))?;
            if store.insert(key, v)?.is_some() {
                log::warn!(
                    "duplicate key {} at record {i}; keeping the later vector",
                    key.to_hex()
                );
            }
        }
        Ok(store)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_jsonl_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl_to(&self, w: &mut impl Write) -> Result<()> {
        let json_err = |e: serde_json::Error| StoreError::Json {
            line: 0,
            message: e.to_string(),
        };
        let header = JsonlHeader {
            model: self.model_id.clone(),
            dim: self.dim,
        };
        serde_json::to_writer(&mut *w, &header).map_err(json_err)?;
        w.write_all(b"\n")?;
        for (key, v) in &self.entries {
            let rec = JsonlRecord {
                h: key.to_hex(),
                v: v.as_slice().iter().map(|&x| x as f32).collect(),
            };
            serde_json::to_writer(&mut *w, &rec).map_err(json_err)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        Self::read_jsonl_from(BufReader::new(fs::File::open(path)?))
    }

    pub fn read_jsonl_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
            Ok(l) => !l.trim().is_empty(),
            Err(_) => true,
        });
        let json_err = |line: usize| {
            move |e: serde_json::Error| StoreError::Json {
                line: line + 1,
                message: e.to_string(),
            }
        };
        let (n, first) = lines.next().ok_or(StoreError::Json {
            line: 1,
            message: "missing header line".into(),
        })?;
        let header: JsonlHeader = serde_json::from_str(&first?).map_err(json_err(n))?;
        let mut store = Self::new(header.model, header.dim)?;
        for (n, line) in lines {
            let rec: JsonlRecord = serde_json::from_str(&line?).map_err(json_err(n))?;
            let key = SentenceKey::from_hex(&rec.h).ok_or_else(|| StoreError::Json {
                line: n + 1,
                message: format!("bad key `{}`", rec.h),
            })?;
            let v = Embedding::from_f32(&rec.v)
                .map_err(|e| StoreError::InvalidVector(n as u64, e.to_string()))?;
            if store.insert(key, v)?.is_some() {
                log::warn!(
                    "duplicate key {} at line {}; keeping the later vector",
                    rec.h,
                    n + 1
                );
            }
        }
        Ok(store)
    }

    /// Reads either format, sniffing the magic bytes.
    pub fn import_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else if bytes.first() == Some(&b'{') {
            Self::read_jsonl_from(bytes.as_slice())
        } else {
            Err(StoreError::BadMagic)
        }
    }

    /// Writes JSONL for `.jsonl` paths, binary otherwise.
    pub fn export_file(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "jsonl") {
            self.write_jsonl(path)
        } else {
            self.write_binary(path)
        }
    }
}

impl EmbeddingSource for ModelStore {
    fn embedding(&self, text: &str) -> Option<&Embedding> {
        self.lookup(text)
    }
}

pub fn import_file(path: &Path) -> Result<ModelStore> {
    ModelStore::import_file(path)
}

pub fn export_file(store: &ModelStore, path: &Path) -> Result<()> {
    store.export_file(path)
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    model: String,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    h: String,
    v: Vec<f32>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(n: usize, dim: usize) -> ModelStore {
        let mut s = ModelStore::new("stub-model@r1", dim).unwrap();
        for i in 0..n {
            let v: Vec<f32> = (0..dim)
                .map(|j| (i * dim + j) as f32 * 0.25 - 1.0)
                .collect();
            s.insert_text(&format!("sentence {i}"), Embedding::from_f32(&v).unwrap())
                .unwrap();
        }
        s
    }

    #[test]
    fn empty_store_is_header_only() {
        let s = ModelStore::new("m", 8).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(bytes.len(), 24 + 1);
        assert_eq!(&bytes[12..20], &0u64.to_le_bytes());
        assert_eq!(ModelStore::from_bytes(&bytes).unwrap(), s);
    }

    #[test]
    fn file_size_from_layout() {
        let s = store_with(3, 4);
        let header = 24 + "stub-model@r1".len();
        assert_eq!(s.to_bytes().len(), header + 3 * (32 + 16));
        assert_eq!(s.encoded_len(), header + 3 * 48);
    }

    #[test]
    fn header_fields_are_little_endian() {
        let bytes = store_with(2, 5).to_bytes();
        assert_eq!(&bytes[..4], b"SCEV");
        assert_eq!(bytes[4..8], [1, 0, 0, 0]);
        assert_eq!(bytes[8..12], [5, 0, 0, 0]);
        assert_eq!(bytes[12..20], [2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes[20..24], [13, 0, 0, 0]);
    }

    #[test]
    fn corrupted_headers() {
        let mut bytes = store_with(2, 4).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            ModelStore::from_bytes(&bytes),
            Err(StoreError::BadMagic)
        ));

        let mut bytes = store_with(2, 4).to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            ModelStore::from_bytes(&bytes),
            Err(StoreError::VersionUnsupported(2))
        ));

        let bytes = store_with(2, 4).to_bytes();
        assert!(matches!(
            ModelStore::from_bytes(&bytes[..bytes.len() - 3]),
            Err(StoreError::TruncatedFile { .. })
        ));
        assert!(matches!(
            ModelStore::from_bytes(&bytes[..10]),
            Err(StoreError::TruncatedFile { .. })
        ));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            ModelStore::from_bytes(&long),
            Err(StoreError::TrailingData(1))
        ));
    }

    #[test]
    fn non_finite_vectors_rejected() {
        let mut bytes = store_with(1, 2).to_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            ModelStore::from_bytes(&bytes),
            Err(StoreError::InvalidVector(0, _))
        ));
    }

    #[test]
    fn duplicate_records_last_writer_wins() {
        let s = store_with(1, 2);
        let mut bytes = s.to_bytes();
        let key = *s.iter().next().unwrap().0.as_bytes();
        bytes.extend_from_slice(&key);
        bytes.extend_from_slice(&7.0f32.to_le_bytes());
        bytes.extend_from_slice(&8.0f32.to_le_bytes());
        bytes[12..20].copy_from_slice(&2u64.to_le_bytes());
        let back = ModelStore::from_bytes(&bytes).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back.lookup("sentence 0").unwrap().as_slice(), &[7.0, 8.0]);
    }

    #[test]
    fn lookup_is_exact_bytes() {
        let s = store_with(2, 3);
        assert!(s.lookup("sentence 1").is_some());
        assert!(s.lookup("sentence 1 ").is_none());
        assert!(s.lookup("Sentence 1").is_none());
        assert!(s.lookup("absent").is_none());
        assert_ne!(SentenceKey::of("a"), SentenceKey::of("a "));
    }

    #[test]
    fn dimension_checked_on_insert() {
        let mut s = ModelStore::new("m", 3).unwrap();
        let v = Embedding::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            s.insert_text("x", v),
            Err(StoreError::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
        assert!(ModelStore::new("m", 1).is_err());
    }

    #[test]
    fn jsonl_round_trip_and_sniffing() {
        let dir = tempfile::tempdir().unwrap();
        let s = store_with(4, 3);
        let (j, b) = (dir.path().join("s.jsonl"), dir.path().join("s.scev"));
        s.export_file(&j).unwrap();
        s.export_file(&b).unwrap();
        assert_eq!(import_file(&j).unwrap(), s);
        assert_eq!(import_file(&b).unwrap(), s);
        let text = fs::read_to_string(&j).unwrap();
        assert!(text.starts_with(r#"{"model":"stub-model@r1","dim":3}"#));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn export_is_byte_stable() {
        let s = store_with(5, 6);
        let bytes = s.to_bytes();
        assert_eq!(ModelStore::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn key_hex_round_trip() {
        let k = SentenceKey::of("hello");
        assert_eq!(
            k.to_hex(),
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        assert_eq!(SentenceKey::from_hex(&k.to_hex()), Some(k));
        assert_eq!(SentenceKey::from_hex("zz"), None);
    }
}
