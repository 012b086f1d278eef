//! The compiled target database and its exact k-mer inverted index.

mod disk;

use std::io::BufRead;

use crate::alphabet::{decode, CANONICAL};
use crate::error::{Error, Result};
use crate::fasta::{header_token, parse_fasta, SequenceRecord};

pub use disk::{load_index, load_target_db, save_index, DB_FILE, FORMAT_VERSION, INDEX_FILE, MAGIC};

pub const MIN_K: usize = 4;
pub const MAX_K: usize = 7;
pub const DEFAULT_K: usize = 5;

/// All target sequences packed into one residue pool.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TargetDb {
    residues: Vec<u8>,
    offsets: Vec<u64>,
    lengths: Vec<u32>,
    headers: Vec<String>,
}

impl TargetDb {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a SequenceRecord>) -> Self {
        let mut db = TargetDb::default();
        for r in records {
            db.push(r);
        }
        db
    }

    fn push(&mut self, record: &SequenceRecord) {
        self.offsets.push(self.residues.len() as u64);
        self.lengths.push(record.residues.len() as u32);
        self.residues.extend_from_slice(&record.residues);
        self.headers.push(record.header.clone());
    }

    pub fn seq_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn total_residues(&self) -> u64 {
        self.residues.len() as u64
    }

    pub fn sequence(&self, id: u32) -> &[u8] {
        let start = self.offsets[id as usize] as usize;
        &self.residues[start..start + self.lengths[id as usize] as usize]
    }

    pub fn get(&self, id: u32) -> Option<&[u8]> {
        ((id as usize) < self.seq_count()).then(|| self.sequence(id))
    }

    pub fn len_of(&self, id: u32) -> usize {
        self.lengths[id as usize] as usize
    }

    pub fn header(&self, id: u32) -> &str {
        &self.headers[id as usize]
    }

    pub fn id_token(&self, id: u32) -> &str {
        header_token(&self.headers[id as usize])
    }

    pub fn record(&self, id: u32) -> SequenceRecord {
        SequenceRecord::new(self.header(id), self.sequence(id).to_vec())
    }

    pub fn sequence_string(&self, id: u32) -> String {
        decode(self.sequence(id))
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn lengths(&self) -> &[u32] {
        &self.lengths
    }

    pub fn residue_pool(&self) -> &[u8] {
        &self.residues
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    /// Hash of the serialized database; ties an index to its database.
    pub fn content_hash(&self) -> u64 {
        xxhash_rust::xxh3::xxh3_64(&disk::db_payload(self))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Posting {
    pub seq_id: u32,
    pub pos: u32,
}

/// Exact k-mer postings in CSR layout: the postings of code `c` are
/// `postings[starts[c]..starts[c + 1]]`, sorted by `(seq_id, pos)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KmerIndex {
    k: usize,
    starts: Vec<u64>,
    postings: Vec<Posting>,
    built_from: u64,
}

pub fn check_k(k: usize) -> Result<()> {
    if (MIN_K..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(Error::KmerSize(k))
    }
}

pub fn bucket_count(k: usize) -> usize {
    CANONICAL.pow(k as u32)
}

/// Base-20 code of an X-free k-mer; `None` if it contains `X`.
#[inline]
pub fn kmer_code(kmer: &[u8]) -> Option<u32> {
    kmer.iter().try_fold(0u32, |code, &r| {
        ((r as usize) < CANONICAL).then(|| code * CANONICAL as u32 + r as u32)
    })
}

pub fn decode_kmer(mut code: u32, k: usize) -> Vec<u8> {
    let mut out = vec![0u8; k];
    for slot in out.iter_mut().rev() {
        *slot = (code % CANONICAL as u32) as u8;
        code /= CANONICAL as u32;
    }
    out
}

/// Calls `f(position, code)` for each X-free k-mer window, left to right.
#[inline]
pub fn for_each_kmer(seq: &[u8], k: usize, mut f: impl FnMut(usize, u32)) {
    if seq.len() < k {
        return;
    }
    let modulus = CANONICAL.pow(k as u32 - 1) as u32;
    let mut code = 0u32;
    let mut valid = 0usize;
    for (i, &r) in seq.iter().enumerate() {
        if (r as usize) >= CANONICAL {
            valid = 0;
            code = 0;
            continue;
        }
        if valid == k {
            code %= modulus;
        } else {
            valid += 1;
        }
        code = code * CANONICAL as u32 + r as u32;
        if valid == k {
            f(i + 1 - k, code);
        }
    }
}

impl KmerIndex {
    /// Counting-sort construction; iteration order makes each bucket sorted
    /// by `(seq_id, pos)` without an explicit sort.
    pub fn build(db: &TargetDb, k: usize) -> Result<Self> {
        check_k(k)?;
        let buckets = bucket_count(k);
        let mut starts = vec![0u64; buckets + 1];
        for id in 0..db.seq_count() as u32 {
            for_each_kmer(db.sequence(id), k, |_, code| starts[code as usize + 1] += 1);
        }
        for i in 0..buckets {
            starts[i + 1] += starts[i];
        }
        let total = starts[buckets] as usize;
        let mut fill: Vec<u64> = starts[..buckets].to_vec();
        let mut postings = vec![Posting { seq_id: 0, pos: 0 }; total];
        for id in 0..db.seq_count() as u32 {
            for_each_kmer(db.sequence(id), k, |pos, code| {
                let slot = &mut fill[code as usize];
                postings[*slot as usize] = Posting {
                    seq_id: id,
                    pos: pos as u32,
                };
                *slot += 1;
            });
        }
        Ok(Self {
            k,
            starts,
            postings,
            built_from: db.content_hash(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn built_from(&self) -> u64 {
        self.built_from
    }

    #[inline]
    pub fn postings_for(&self, code: u32) -> &[Posting] {
        let c = code as usize;
        &self.postings[self.starts[c] as usize..self.starts[c + 1] as usize]
    }

    pub fn posting_count(&self) -> usize {
        self.postings.len()
    }

    pub fn all_postings(&self) -> &[Posting] {
        &self.postings
    }

    pub fn bucket_starts(&self) -> &[u64] {
        &self.starts
    }
}

/// Parses a FASTA database and builds its index.
pub fn build_index<R: BufRead>(db_fasta: R, k: usize) -> Result<(TargetDb, KmerIndex)> {
    check_k(k)?;
    let batch = parse_fasta(db_fasta)?;
    let db = TargetDb::from_records(&batch.records);
    let idx = KmerIndex::build(&db, k)?;
    Ok((db, idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::encode;
    use proptest::prelude::*;

    fn db_of(seqs: &[&str]) -> TargetDb {
        let recs: Vec<_> = seqs
            .iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::from_letters(format!("s{i}"), s))
            .collect();
        TargetDb::from_records(&recs)
    }

    #[test]
    fn poly_a_postings() {
        let db = db_of(&["AAAAA"]);
        let idx = KmerIndex::build(&db, 4).unwrap();
        let code = kmer_code(&encode(b"AAAA").0).unwrap();
        assert_eq!(
            idx.postings_for(code),
            &[Posting { seq_id: 0, pos: 0 }, Posting { seq_id: 0, pos: 1 }]
        );
        assert_eq!(idx.posting_count(), 2);
    }

    #[test]
    fn x_windows_are_skipped() {
        let db = db_of(&["ACXDE"]);
        let idx = KmerIndex::build(&db, 4).unwrap();
        assert_eq!(idx.posting_count(), 0);
    }

    #[test]
    fn k_range_enforced() {
        let db = db_of(&["ACDEFGH"]);
        assert!(matches!(KmerIndex::build(&db, 3), Err(Error::KmerSize(3))));
        assert!(matches!(KmerIndex::build(&db, 8), Err(Error::KmerSize(8))));
        assert!(build_index(">a\nACDEFG\n".as_bytes(), 9).is_err());
        assert!(build_index("junk".as_bytes(), 5).is_err());
    }

    #[test]
    fn db_layout_invariants() {
        let db = db_of(&["ACD", "EFGHIK", "L"]);
        assert_eq!(db.seq_count(), 3);
        assert_eq!(db.total_residues(), 10);
        for i in 0..2 {
            assert_eq!(db.offsets()[i] + db.lengths()[i] as u64, db.offsets()[i + 1]);
        }
        assert_eq!(db.sequence_string(1), "EFGHIK");
    }

    proptest! {
        #[test]
        fn rolling_code_matches_direct(seq in prop::collection::vec(0u8..21, 0..60), k in 4usize..=6) {
            let mut rolled = Vec::new();
            for_each_kmer(&seq, k, |p, c| rolled.push((p, c)));
            let direct: Vec<_> = (0..seq.len().saturating_sub(k - 1))
                .filter_map(|p| kmer_code(&seq[p..p + k]).map(|c| (p, c)))
                .collect();
            prop_assert_eq!(rolled, direct);
        }

        #[test]
        fn posting_total_matches_window_count(
            seqs in prop::collection::vec(prop::collection::vec(0u8..21, 1..40), 1..10)
        ) {
            let recs: Vec<_> = seqs.iter().enumerate()
                .map(|(i, s)| SequenceRecord::new(format!("s{i}"), s.clone())).collect();
            let db = TargetDb::from_records(&recs);
            let idx = KmerIndex::build(&db, 4).unwrap();
            let expected: usize = seqs.iter().map(|s| {
                (0..s.len().saturating_sub(3)).filter(|&p| !s[p..p + 4].contains(&20)).count()
            }).sum();
            prop_assert_eq!(idx.posting_count(), expected);
            for p in idx.all_postings() {
                prop_assert!(p.pos as usize + 4 <= db.len_of(p.seq_id));
            }
        }
    }
}
