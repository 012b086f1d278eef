//! On-disk layout. Both files start with a 24-byte header block:
//!
//! ```text
//! magic "EPSG" | version u32 | kind u32 | reserved u32 | xxh3-64 of payload u64
//! ```
//!
//! `targetdb.bin` payload: seq_count u64, total_residues u64, header_blob_len
//! u64, offsets [u64], lengths [u32], residue pool [u8], header blob (each
//! header followed by `\n`).
//!
//! `targetdb.idx` payload: k u32, reserved u32, built_from u64, bucket_count
//! u64, posting_count u64, directory [(offset u64, count u32); 20^k],
//! postings [(seq_id u32, pos u32)].
//!
//! Everything is little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use xxhash_rust::xxh3::xxh3_64;

use super::{bucket_count, check_k, KmerIndex, Posting, TargetDb};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EPSG";
pub const FORMAT_VERSION: u32 = 1;
pub const DB_FILE: &str = "targetdb.bin";
pub const INDEX_FILE: &str = "targetdb.idx";

const KIND_DB: u32 = 1;
const KIND_INDEX: u32 = 2;
const HEADER_LEN: usize = 24;

pub(super) fn db_payload(db: &TargetDb) -> Vec<u8> {
    let blob_len: usize = db.headers.iter().map(|h| h.len() + 1).sum();
    let n = db.seq_count();
    let mut out = Vec::with_capacity(24 + n * 12 + db.residues.len() + blob_len);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&db.total_residues().to_le_bytes());
    out.extend_from_slice(&(blob_len as u64).to_le_bytes());
    for o in &db.offsets {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for l in &db.lengths {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&db.residues);
    for h in &db.headers {
        out.extend_from_slice(h.as_bytes());
        out.push(b'\n');
    }
    out
}

fn index_payload(idx: &KmerIndex) -> Vec<u8> {
    let buckets = bucket_count(idx.k);
    let mut out = Vec::with_capacity(32 + buckets * 12 + idx.postings.len() * 8);
    out.extend_from_slice(&(idx.k as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&idx.built_from.to_le_bytes());
    out.extend_from_slice(&(buckets as u64).to_le_bytes());
    out.extend_from_slice(&(idx.postings.len() as u64).to_le_bytes());
    for c in 0..buckets {
        let start = idx.starts[c];
        let count = (idx.starts[c + 1] - start) as u32;
        out.extend_from_slice(&start.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
    }
    for p in &idx.postings {
        out.extend_from_slice(&p.seq_id.to_le_bytes());
        out.extend_from_slice(&p.pos.to_le_bytes());
    }
    out
}

fn write_file(path: &Path, kind: u32, payload: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&kind.to_le_bytes());
    header[16..24].copy_from_slice(&xxh3_64(payload).to_le_bytes());
    file.write_all(&header)
        .and_then(|_| file.write_all(payload))
        .map_err(|e| Error::file(path, e))
}

pub fn save_index(db: &TargetDb, idx: &KmerIndex, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    write_file(&dir.join(DB_FILE), KIND_DB, &db_payload(db))?;
    write_file(&dir.join(INDEX_FILE), KIND_INDEX, &index_payload(idx))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    file: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Truncated {
            file: self.file.into(),
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn truncated(&self) -> Error {
        Error::Truncated {
            file: self.file.into(),
        }
    }
}

/// Reads a file, checks its header block and returns the payload, after
/// confirming the payload has `expected_len(payload)` bytes and the hash
/// matches.
fn read_checked(
    dir: &Path,
    name: &'static str,
    kind: u32,
    expected_len: impl Fn(&[u8]) -> Option<usize>,
) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingIndexFile(path))
        }
        Err(e) => return Err(Error::file(path, e)),
    };
    let truncated = || Error::Truncated { file: name.into() };
    if bytes.len() < HEADER_LEN {
        return Err(if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            Error::BadMagic { file: name.into() }
        } else {
            truncated()
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { file: name.into() });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            file: name.into(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if u32::from_le_bytes(bytes[8..12].try_into().unwrap()) != kind {
        return Err(Error::BadMagic { file: name.into() });
    }
    let hash = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    if expected_len(payload) != Some(payload.len()) {
        return Err(truncated());
    }
    if xxh3_64(payload) != hash {
        return Err(Error::HashMismatch { file: name.into() });
    }
    let mut bytes = bytes;
    bytes.drain(..HEADER_LEN);
    Ok(bytes)
}

fn le_u64(p: &[u8], at: usize) -> Option<u64> {
    p.get(at..at + 8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
}

fn load_db(dir: &Path) -> Result<TargetDb> {
    let payload = read_checked(dir, DB_FILE, KIND_DB, |p| {
        let n = le_u64(p, 0)? as usize;
        let total = le_u64(p, 8)? as usize;
        let blob = le_u64(p, 16)? as usize;
        24usize
            .checked_add(n.checked_mul(12)?)?
            .checked_add(total)?
            .checked_add(blob)
    })?;
    let mut c = Cursor {
        buf: &payload,
        pos: 0,
        file: DB_FILE,
    };
    let n = c.u64()? as usize;
    let total = c.u64()? as usize;
    let blob_len = c.u64()? as usize;
    let offsets: Vec<u64> = c
        .take(n * 8)?
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let lengths: Vec<u32> = c
        .take(n * 4)?
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let residues = c.take(total)?.to_vec();
    let blob = std::str::from_utf8(c.take(blob_len)?).map_err(|_| c.truncated())?;
    let headers: Vec<String> = blob
        .strip_suffix('\n')
        .map(|b| b.split('\n').map(str::to_string).collect())
        .unwrap_or_default();
    if headers.len() != n {
        return Err(c.truncated());
    }
    let mut expected = 0u64;
    for (o, l) in offsets.iter().zip(&lengths) {
        if *o != expected {
            return Err(c.truncated());
        }
        expected += *l as u64;
    }
    if expected != total as u64 || residues.iter().any(|&r| r > crate::alphabet::X_INDEX) {
        return Err(c.truncated());
    }
    Ok(TargetDb {
        residues,
        offsets,
        lengths,
        headers,
    })
}

fn load_kmer_index(dir: &Path) -> Result<KmerIndex> {
    let payload = read_checked(dir, INDEX_FILE, KIND_INDEX, |p| {
        let buckets = le_u64(p, 16)? as usize;
        let postings = le_u64(p, 24)? as usize;
        32usize
            .checked_add(buckets.checked_mul(12)?)?
            .checked_add(postings.checked_mul(8)?)
    })?;
    let mut c = Cursor {
        buf: &payload,
        pos: 0,
        file: INDEX_FILE,
    };
    let k = c.u32()? as usize;
    check_k(k)?;
    c.u32()?;
    let built_from = c.u64()?;
    let buckets = c.u64()? as usize;
    let total = c.u64()? as usize;
    if buckets != bucket_count(k) {
        return Err(c.truncated());
    }
    let mut starts = Vec::with_capacity(buckets + 1);
    let mut next = 0u64;
    for entry in c.take(buckets * 12)?.chunks_exact(12) {
        let offset = u64::from_le_bytes(entry[..8].try_into().unwrap());
        let count = u32::from_le_bytes(entry[8..].try_into().unwrap());
        if offset != next {
            return Err(c.truncated());
        }
        starts.push(offset);
        next += count as u64;
    }
    if next != total as u64 {
        return Err(c.truncated());
    }
    starts.push(next);
    let postings = c
        .take(total * 8)?
        .chunks_exact(8)
        .map(|b| Posting {
            seq_id: u32::from_le_bytes(b[..4].try_into().unwrap()),
            pos: u32::from_le_bytes(b[4..].try_into().unwrap()),
        })
        .collect();
    Ok(KmerIndex {
        k,
        starts,
        postings,
        built_from,
    })
}

/// Loads and verifies both files, including that the index belongs to the
/// database.
pub fn load_index(dir: &Path) -> Result<(TargetDb, KmerIndex)> {
    let db = load_db(dir)?;
    let idx = load_kmer_index(dir)?;
    if idx.built_from != db.content_hash() {
        return Err(Error::IndexDbMismatch);
    }
    Ok((db, idx))
}

/// Loads only the sequence store.
pub fn load_target_db(dir: &Path) -> Result<TargetDb> {
    load_db(dir)
}
