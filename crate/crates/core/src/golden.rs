//! Flattening alignments into tuples and splitting tuples into per-query
//! golden sub-databases.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::align::Alignment;
use crate::alphabet;
use crate::error::{Error, Result};
use crate::fasta::{header_token, write_fasta, write_record, SequenceRecord, DEFAULT_WRAP};
use crate::index::TargetDb;
use crate::tuple::TupleRecord;

pub const QUERY_FILE: &str = "query.fasta";
pub const GOLDEN_FILE: &str = "golden.fasta";

/// One query plus its homologs. `members[0]` is always the query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenSet {
    pub token: String,
    pub query: SequenceRecord,
    pub members: Vec<SequenceRecord>,
}

impl GoldenSet {
    pub fn only_query(token: impl Into<String>, query: SequenceRecord) -> Self {
        Self {
            token: token.into(),
            members: vec![query.clone()],
            query,
        }
    }

    /// Residues over all members, query included.
    pub fn total_residues(&self) -> u64 {
        self.members.iter().map(|m| m.len() as u64).sum()
    }

    /// Writes `query.fasta` and `golden.fasta` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let path = dir.join(QUERY_FILE);
        let mut out = BufWriter::new(fs::File::create(&path).map_err(|e| Error::file(&path, e))?);
        write_record(&mut out, &self.query, DEFAULT_WRAP)?;
        out.flush()?;

        let path = dir.join(GOLDEN_FILE);
        let mut out = BufWriter::new(fs::File::create(&path).map_err(|e| Error::file(&path, e))?);
        write_fasta(&mut out, &self.members, DEFAULT_WRAP)?;
        out.flush()?;
        Ok(())
    }
}

fn sanitize(token: &str) -> String {
    let s: String = token
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    if s.is_empty() {
        "query".to_string()
    } else if s.chars().all(|c| c == '.') {
        s.replace('.', "_")
    } else {
        s
    }
}

/// Filesystem-safe, unique directory names, one per query in input order.
/// Collisions after sanitizing get `_2`, `_3`, ... suffixes.
pub fn query_tokens(queries: &[SequenceRecord]) -> Vec<String> {
    let mut used = HashSet::new();
    queries
        .iter()
        .map(|q| {
            let base = sanitize(q.id());
            let mut token = base.clone();
            let mut n = 2;
            while !used.insert(token.clone()) {
                token = format!("{base}_{n}");
                n += 1;
            }
            token
        })
        .collect()
}

/// One tuple per alignment, grouped by query in input order. `alignments[i]`
/// belongs to `queries[i]`.
pub fn convertalis(
    alignments: &[Vec<Alignment>],
    db: &TargetDb,
    queries: &[SequenceRecord],
) -> Result<Vec<TupleRecord>> {
    if alignments.len() > queries.len() {
        return Err(Error::DanglingQuery(alignments.len() - 1));
    }
    let mut out = Vec::new();
    for (qi, group) in alignments.iter().enumerate() {
        for a in group {
            if a.query_id != qi {
                return Err(Error::DanglingQuery(a.query_id));
            }
            if db.get(a.target_id).is_none() {
                return Err(Error::DanglingTarget(a.target_id));
            }
            out.push(TupleRecord {
                query_header: queries[qi].header.clone(),
                target_header: db.header(a.target_id).to_string(),
                target_sequence: db.sequence_string(a.target_id),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsimusOutput {
    pub sets: Vec<GoldenSet>,
    /// Repeated (query, target) pairs plus targets sharing the query's id.
    pub duplicates_dropped: usize,
    /// Members beyond the cap after injecting the query.
    pub truncated: usize,
}

/// Groups tuples into golden sets without touching the filesystem. Each set
/// holds at most `max_members` records, the query included.
pub fn group_tuples(
    tuples: &[TupleRecord],
    queries: &[SequenceRecord],
    max_members: usize,
) -> Result<ParsimusOutput> {
    let tokens = query_tokens(queries);
    let mut by_header: HashMap<&str, usize> = HashMap::new();
    let mut by_token: HashMap<&str, usize> = HashMap::new();
    for (i, q) in queries.iter().enumerate() {
        by_header.entry(q.header.as_str()).or_insert(i);
        by_token.entry(q.id()).or_insert(i);
    }

    let mut sets: Vec<GoldenSet> = queries
        .iter()
        .zip(&tokens)
        .map(|(q, t)| GoldenSet::only_query(t.clone(), q.clone()))
        .collect();
    let mut seen: Vec<HashSet<String>> = queries.iter().map(|q| HashSet::from([q.id().to_string()])).collect();
    let mut duplicates_dropped = 0;
    let mut truncated = 0;

    for t in tuples {
        let qi = *by_header
            .get(t.query_header.as_str())
            .or_else(|| by_token.get(header_token(&t.query_header)))
            .ok_or_else(|| Error::UnknownQuery(t.query_header.clone()))?;
        let target_id = header_token(&t.target_header);
        if !seen[qi].insert(target_id.to_string()) {
            duplicates_dropped += 1;
            continue;
        }
        let set = &mut sets[qi];
        if set.members.len() >= max_members.max(1) {
            truncated += 1;
            continue;
        }
        let residues = alphabet::encode_strict(t.target_sequence.as_bytes())
            .ok_or_else(|| Error::Tuple {
                line: 0,
                msg: "invalid residue in target sequence".into(),
            })?;
        set.members.push(SequenceRecord::new(t.target_header.clone(), residues));
    }
    Ok(ParsimusOutput {
        sets,
        duplicates_dropped,
        truncated,
    })
}

/// [`group_tuples`], then writes `<workdir>/<token>/{query,golden}.fasta`
/// for every query.
pub fn parsimus(
    tuples: &[TupleRecord],
    queries: &[SequenceRecord],
    max_members: usize,
    workdir: &Path,
) -> Result<ParsimusOutput> {
    let out = group_tuples(tuples, queries, max_members)?;
    for set in &out.sets {
        set.write_to(&workdir.join(&set.token))?;
    }
    Ok(out)
}
