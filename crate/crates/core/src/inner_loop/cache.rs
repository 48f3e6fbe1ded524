//! Persistent evaluation cache keyed by the canonical tensor hash.
//!
//! # File format (version 1)
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header:  b"QASCACHE" | u32 version | u32 namespace_len | namespace (UTF-8)
//! record:  u32 body_len | body | u64 checksum
//! body:    u64 key | u16 qubits | u16 max_depth | u32 bits_len | bits (one byte per entry)
//!          | u32 num_seeds | num_seeds * seed_block
//!          | f64 aggregate_train_acc | f64 aggregate_test_acc | u32 best_seed
//! seed_block: u64 seed | f64 train_acc | f64 test_acc | f64 final_loss | f64 initial_loss
//!          | u32 num_params | num_params * f64
//! ```
//!
//! `checksum` is 64-bit FNV-1a over `body`. Records are only appended while
//! holding an exclusive lock on the file; readers take a shared lock. A
//! truncated or checksum-failing final record is the remnant of a crashed
//! writer and is cut off by the next writer. The first record written for a
//! key wins; later inserts of the same key return the stored result.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::circuits::{canonical_hash, fnv1a_bytes, CircuitTensor};
use crate::error::{Error, Result};
use crate::inner_loop::{EvalResult, SeedResult};

pub const CACHE_MAGIC: &[u8; 8] = b"QASCACHE";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheEntry {
    pub key: u64,
    pub tensor: CircuitTensor,
    pub result: EvalResult,
}

#[derive(Debug)]
pub struct EvalCache {
    namespace: String,
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    index: HashMap<u64, usize>,
    entries: Vec<CacheEntry>,
    /// End of the last record read from disk.
    offset: u64,
}

impl EvalCache {
    pub fn in_memory(namespace: impl Into<String>) -> Self {
        Self { namespace: namespace.into(), path: None, inner: Mutex::new(Inner::default()) }
    }

    /// Opens (or creates) the cache file at `path`, which must belong to `namespace`.
    pub fn open(path: impl AsRef<Path>, namespace: impl Into<String>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let namespace = namespace.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(&path)?;
        file.lock()?;
        let header = header_bytes(&namespace);
        let len = file.metadata()?.len();
        let result = if len == 0 {
            file.write_all(&header).and_then(|_| file.flush()).map_err(Error::from)
        } else {
            check_header(&mut file, &path, &header)
        };
        file.unlock()?;
        result?;

        let cache = Self {
            namespace,
            path: Some(path),
            inner: Mutex::new(Inner { offset: header.len() as u64, ..Inner::default() }),
        };
        cache.refresh()?;
        Ok(cache)
    }

    /// Opens `<dir>/<namespace hash>.qcache`.
    pub fn open_in_dir(dir: impl AsRef<Path>, namespace: impl Into<String>) -> Result<Self> {
        let namespace = namespace.into();
        let file = format!("{:016x}.qcache", fnv1a_bytes(namespace.as_bytes()));
        Self::open(dir.as_ref().join(file), namespace)
    }

    /// Opens an existing cache file under whatever namespace it records.
    pub fn open_existing(path: impl AsRef<Path>) -> Result<Self> {
        let ns = read_namespace(path.as_ref())?;
        Self::open(path, ns)
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Looks up `key`, picking up records other processes appended since the
    /// last read.
    pub fn get(&self, key: u64) -> Result<Option<EvalResult>> {
        if let Some(r) = self.lookup(key) {
            return Ok(Some(r));
        }
        if self.path.is_some() {
            self.refresh()?;
        }
        Ok(self.lookup(key))
    }

    fn lookup(&self, key: u64) -> Option<EvalResult> {
        let inner = self.inner.lock().expect("cache lock");
        inner.index.get(&key).map(|&i| inner.entries[i].result.clone())
    }

    /// Stores `result` for `tensor` and returns the result now associated
    /// with its key, which is the earlier one if another writer got there
    /// first.
    pub fn insert(&self, tensor: &CircuitTensor, result: EvalResult) -> Result<EvalResult> {
        let key = canonical_hash(tensor);
        let Some(path) = &self.path else {
            let mut inner = self.inner.lock().expect("cache lock");
            return Ok(inner.add(CacheEntry { key, tensor: tensor.clone(), result }));
        };

        let mut inner = self.inner.lock().expect("cache lock");
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        file.lock()?;
        let outcome = (|| {
            read_new_records(&mut file, path, &mut inner, true)?;
            if let Some(&i) = inner.index.get(&key) {
                return Ok(inner.entries[i].result.clone());
            }
            let record = encode_record(key, tensor, &result);
            file.seek(SeekFrom::Start(inner.offset))?;
            file.write_all(&record)?;
            file.flush()?;
            inner.offset += record.len() as u64;
            Ok(inner.add(CacheEntry { key, tensor: tensor.clone(), result }))
        })();
        file.unlock()?;
        outcome
    }

    /// Snapshot of all entries in insertion order.
    pub fn entries(&self) -> Vec<CacheEntry> {
        self.inner.lock().expect("cache lock").entries.clone()
    }

    /// Re-reads records appended to the file since the last read.
    pub fn refresh(&self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut inner = self.inner.lock().expect("cache lock");
        let mut file = File::open(path)?;
        file.lock_shared()?;
        let outcome = read_new_records(&mut file, path, &mut inner, false);
        file.unlock()?;
        outcome
    }
}

impl Inner {
    fn add(&mut self, entry: CacheEntry) -> EvalResult {
        if let Some(&i) = self.index.get(&entry.key) {
            return self.entries[i].result.clone();
        }
        let result = entry.result.clone();
        self.index.insert(entry.key, self.entries.len());
        self.entries.push(entry);
        result
    }
}

fn header_bytes(namespace: &str) -> Vec<u8> {
    let mut h = Vec::with_capacity(16 + namespace.len());
    h.extend_from_slice(CACHE_MAGIC);
    h.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    h.extend_from_slice(&(namespace.len() as u32).to_le_bytes());
    h.extend_from_slice(namespace.as_bytes());
    h
}

/// Namespace stored in a cache file's header.
pub fn read_namespace(path: &Path) -> Result<String> {
    let corrupt = |reason: &str| Error::CacheCorrupt { path: path.to_path_buf(), reason: reason.into() };
    let mut file = File::open(path)?;
    let mut fixed = [0u8; 16];
    file.read_exact(&mut fixed).map_err(|_| corrupt("short header"))?;
    if &fixed[..8] != CACHE_MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let ns_len = u32::from_le_bytes(fixed[12..16].try_into().expect("4 bytes")) as usize;
    let mut ns = vec![0u8; ns_len];
    file.read_exact(&mut ns).map_err(|_| corrupt("short namespace"))?;
    String::from_utf8(ns).map_err(|_| corrupt("namespace is not UTF-8"))
}

fn check_header(file: &mut File, path: &Path, expected: &[u8]) -> Result<()> {
    let corrupt = |reason: String| Error::CacheCorrupt { path: path.to_path_buf(), reason };
    let mut fixed = [0u8; 16];
    file.seek(SeekFrom::Start(0))?;
    file.read_exact(&mut fixed).map_err(|_| corrupt("short header".into()))?;
    if &fixed[..8] != CACHE_MAGIC {
        return Err(corrupt("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(fixed[8..12].try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let ns_len = u32::from_le_bytes(fixed[12..16].try_into().expect("4 bytes")) as usize;
    let mut ns = vec![0u8; ns_len];
    file.read_exact(&mut ns).map_err(|_| corrupt("short namespace".into()))?;
    if ns != expected[16..] {
        return Err(corrupt(format!(
            "namespace `{}` does not match `{}`",
            String::from_utf8_lossy(&ns),
            String::from_utf8_lossy(&expected[16..])
        )));
    }
    Ok(())
}

fn read_new_records(file: &mut File, path: &Path, inner: &mut Inner, may_truncate: bool) -> Result<()> {
    let len = file.metadata()?.len();
    if len <= inner.offset {
        return Ok(());
    }
    let mut buf = Vec::with_capacity((len - inner.offset) as usize);
    file.seek(SeekFrom::Start(inner.offset))?;
    file.read_to_end(&mut buf)?;

    let mut pos = 0usize;
    while pos < buf.len() {
        match parse_record(&buf[pos..]) {
            RecordParse::Complete { entry, consumed } => {
                inner.add(entry);
                pos += consumed;
            }
            RecordParse::Torn => break,
            RecordParse::BadChecksum { consumed } => {
                if pos + consumed < buf.len() {
                    return Err(Error::CacheCorrupt {
                        path: path.to_path_buf(),
                        reason: format!("checksum mismatch at offset {}", inner.offset + pos as u64),
                    });
                }
                break;
            }
            RecordParse::Invalid(reason) => {
                return Err(Error::CacheCorrupt { path: path.to_path_buf(), reason });
            }
        }
    }
    inner.offset += pos as u64;
    if may_truncate && inner.offset < len {
        file.set_len(inner.offset)?;
    }
    Ok(())
}

enum RecordParse {
    Complete { entry: CacheEntry, consumed: usize },
    Torn,
    BadChecksum { consumed: usize },
    Invalid(String),
}

fn parse_record(buf: &[u8]) -> RecordParse {
    if buf.len() < 4 {
        return RecordParse::Torn;
    }
    let body_len = u32::from_le_bytes(buf[..4].try_into().expect("4 bytes")) as usize;
    let total = 4 + body_len + 8;
    if buf.len() < total {
        return RecordParse::Torn;
    }
    let body = &buf[4..4 + body_len];
    let checksum = u64::from_le_bytes(buf[4 + body_len..total].try_into().expect("8 bytes"));
    if fnv1a_bytes(body) != checksum {
        return RecordParse::BadChecksum { consumed: total };
    }
    match decode_body(body) {
        Some(entry) => RecordParse::Complete { entry, consumed: total },
        None => RecordParse::Invalid("record body does not decode".into()),
    }
}

fn encode_record(key: u64, tensor: &CircuitTensor, result: &EvalResult) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&key.to_le_bytes());
    body.extend_from_slice(&(tensor.num_qubits() as u16).to_le_bytes());
    body.extend_from_slice(&(tensor.max_depth() as u16).to_le_bytes());
    body.extend_from_slice(&(tensor.bits().len() as u32).to_le_bytes());
    body.extend_from_slice(tensor.bits());
    body.extend_from_slice(&encode_result(result));

    let mut out = Vec::with_capacity(body.len() + 12);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&fnv1a_bytes(&body).to_le_bytes());
    out
}

/// Canonical little-endian serialization of an [`EvalResult`].
pub fn encode_result(r: &EvalResult) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(r.per_seed.len() as u32).to_le_bytes());
    for s in &r.per_seed {
        out.extend_from_slice(&s.seed.to_le_bytes());
        for v in [s.final_train_acc, s.final_test_acc, s.final_loss, s.initial_loss] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(s.trained_params.len() as u32).to_le_bytes());
        for p in &s.trained_params {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out.extend_from_slice(&r.aggregate_train_acc.to_le_bytes());
    out.extend_from_slice(&r.aggregate_test_acc.to_le_bytes());
    out.extend_from_slice(&(r.best_seed as u32).to_le_bytes());
    out
}

pub fn decode_result(bytes: &[u8]) -> Option<EvalResult> {
    let mut r = Reader(bytes);
    let result = read_result(&mut r)?;
    r.0.is_empty().then_some(result)
}

fn read_result(r: &mut Reader<'_>) -> Option<EvalResult> {
    let n = r.u32()? as usize;
    let mut per_seed = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let seed = r.u64()?;
        let (train, test, loss, init) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let k = r.u32()? as usize;
        let params = (0..k).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
        per_seed.push(SeedResult {
            seed,
            final_train_acc: train,
            final_test_acc: test,
            final_loss: loss,
            initial_loss: init,
            trained_params: params,
        });
    }
    let aggregate_train_acc = r.f64()?;
    let aggregate_test_acc = r.f64()?;
    let best_seed = r.u32()? as usize;
    (best_seed < per_seed.len().max(1)).then_some(EvalResult {
        per_seed,
        aggregate_train_acc,
        aggregate_test_acc,
        best_seed,
    })
}

fn decode_body(body: &[u8]) -> Option<CacheEntry> {
    let mut r = Reader(body);
    let key = r.u64()?;
    let q = r.u16()? as usize;
    let d = r.u16()? as usize;
    let n_bits = r.u32()? as usize;
    let bits = r.take(n_bits)?.to_vec();
    let tensor = CircuitTensor::from_bits(q, d, bits).ok()?;
    let result = read_result(&mut r)?;
    (r.0.is_empty() && canonical_hash(&tensor) == key).then_some(CacheEntry { key, tensor, result })
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Some(head)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }
}
