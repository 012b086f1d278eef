//! Double-hit diagonal prefilter.
//!
//! Query k-mers are looked up in the index; every posting yields a
//! `(target, diagonal)` key. The second distinct match on a key triggers one
//! ungapped scoring of that whole diagonal. Each target keeps its best
//! diagonal and the top `max_seqs` targets survive.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use crate::alphabet::CANONICAL;
use crate::error::{Error, Result};
use crate::fasta::SequenceRecord;
use crate::index::{decode_kmer, for_each_kmer, KmerIndex, TargetDb};
use crate::matrix::SubstitutionMatrix;

pub const DEFAULT_MAX_SEQS: usize = 1000;
pub const DEFAULT_MIN_UNGAPPED_SCORE: i32 = 15;
/// Upper bound on the number of k-mers one similar-k-mer expansion may yield.
pub const MAX_EXPANSION: usize = 160_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefilterConfig {
    pub max_seqs: usize,
    pub min_ungapped_score: i32,
    pub similar_kmer_threshold: Option<i32>,
}

impl Default for PrefilterConfig {
    fn default() -> Self {
        Self {
            max_seqs: DEFAULT_MAX_SEQS,
            min_ungapped_score: DEFAULT_MIN_UNGAPPED_SCORE,
            similar_kmer_threshold: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrefilterHit {
    pub query_id: usize,
    pub target_id: u32,
    /// Query position minus target position.
    pub diagonal: i64,
    pub ungapped_score: i32,
}

fn check_diagonal(query_len: usize, target_len: usize, diagonal: i64) -> Result<()> {
    if diagonal <= -(target_len as i64) || diagonal >= query_len as i64 {
        return Err(Error::DiagonalOutOfBounds {
            diagonal,
            query_len,
            target_len,
        });
    }
    Ok(())
}

/// Best contiguous ungapped segment score along `diagonal`, or 0.
pub fn diagonal_score(
    query: &[u8],
    target: &[u8],
    diagonal: i64,
    matrix: &SubstitutionMatrix,
) -> Result<i32> {
    check_diagonal(query.len(), target.len(), diagonal)?;
    Ok(diagonal_score_unchecked(query, target, diagonal, matrix))
}

#[inline]
fn diagonal_score_unchecked(query: &[u8], target: &[u8], diagonal: i64, matrix: &SubstitutionMatrix) -> i32 {
    let (q_start, t_start) = if diagonal >= 0 {
        (diagonal as usize, 0)
    } else {
        (0, (-diagonal) as usize)
    };
    let mut best = 0;
    let mut run = 0;
    for (&a, &b) in query[q_start..].iter().zip(&target[t_start..]) {
        run = (run + matrix.score(a, b)).max(0);
        best = best.max(run);
    }
    best
}

/// Every k-mer scoring at least `threshold` against `kmer`, as ascending
/// codes. The k-mer itself is always included.
pub fn expand_similar_kmers(kmer: &[u8], matrix: &SubstitutionMatrix, threshold: i32) -> Result<Vec<u32>> {
    let k = kmer.len();
    // best achievable score from position i to the end
    let mut suffix_max = vec![0i32; k + 1];
    for i in (0..k).rev() {
        let row = matrix.row(kmer[i]);
        suffix_max[i] = suffix_max[i + 1] + row[..CANONICAL].iter().max().copied().unwrap_or(0);
    }
    let mut out = Vec::new();
    let mut stack = vec![(0usize, 0u32, 0i32)];
    while let Some((depth, code, score)) = stack.pop() {
        if depth == k {
            out.push(code);
            if out.len() > MAX_EXPANSION {
                return Err(Error::ExpansionTooLarge(out.len() as u64));
            }
            continue;
        }
        let row = matrix.row(kmer[depth]);
        for (r, &cell) in row[..CANONICAL].iter().enumerate() {
            let s = score + cell;
            if s + suffix_max[depth + 1] >= threshold {
                stack.push((depth + 1, code * CANONICAL as u32 + r as u32, s));
            }
        }
    }
    if let Some(own) = crate::index::kmer_code(kmer) {
        out.push(own);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Runs the prefilter for one query. Hits are ordered by descending score,
/// then ascending target id.
pub fn prefilter_query(
    query_id: usize,
    query: &SequenceRecord,
    db: &TargetDb,
    idx: &KmerIndex,
    matrix: &SubstitutionMatrix,
    cfg: &PrefilterConfig,
) -> Result<Vec<PrefilterHit>> {
    let k = idx.k();
    let q = &query.residues;
    if q.len() < k {
        return Err(Error::QueryTooShort {
            id: query.id().to_string(),
            len: q.len(),
            k,
        });
    }

    // key: target << 32 | diagonal as u32; value: None once scored
    let mut first_match: FxHashMap<u64, Option<u32>> = FxHashMap::default();
    let mut best: FxHashMap<u32, (i32, i64)> = FxHashMap::default();
    let mut expansions: FxHashMap<u32, Vec<u32>> = FxHashMap::default();
    let mut failure = None;

    let mut on_posting = |qpos: usize, target: u32, tpos: u32| {
        let diagonal = qpos as i64 - tpos as i64;
        let key = (target as u64) << 32 | (diagonal as i32 as u32) as u64;
        match first_match.entry(key) {
            Entry::Vacant(v) => {
                v.insert(Some(qpos as u32));
            }
            Entry::Occupied(mut o) => {
                if let Some(prev) = *o.get() {
                    if prev as usize != qpos {
                        o.insert(None);
                        let score = diagonal_score_unchecked(q, db.sequence(target), diagonal, matrix);
                        let slot = best.entry(target).or_insert((score, diagonal));
                        if score > slot.0 || (score == slot.0 && diagonal < slot.1) {
                            *slot = (score, diagonal);
                        }
                    }
                }
            }
        }
    };

    match cfg.similar_kmer_threshold {
        None => for_each_kmer(q, k, |qpos, code| {
            for p in idx.postings_for(code) {
                on_posting(qpos, p.seq_id, p.pos);
            }
        }),
        Some(threshold) => for_each_kmer(q, k, |qpos, code| {
            if failure.is_some() {
                return;
            }
            let codes = match expansions.entry(code) {
                Entry::Occupied(o) => o.into_mut(),
                Entry::Vacant(v) => match expand_similar_kmers(&decode_kmer(code, k), matrix, threshold) {
                    Ok(c) => v.insert(c),
                    Err(e) => {
                        failure = Some(e);
                        return;
                    }
                },
            };
            for &c in codes.iter() {
                for p in idx.postings_for(c) {
                    on_posting(qpos, p.seq_id, p.pos);
                }
            }
        }),
    }
    if let Some(e) = failure {
        return Err(e);
    }

    Ok(select_top(
        best.into_iter()
            .filter(|(_, (score, _))| *score >= cfg.min_ungapped_score)
            .map(|(target_id, (ungapped_score, diagonal))| PrefilterHit {
                query_id,
                target_id,
                diagonal,
                ungapped_score,
            }),
        cfg.max_seqs,
    ))
}

/// Bounded-heap top-N by descending score, ties to the lower target id.
pub fn select_top(hits: impl IntoIterator<Item = PrefilterHit>, n: usize) -> Vec<PrefilterHit> {
    // heap root is the worst retained hit
    let mut heap: BinaryHeap<(Reverse<i32>, u32, i64)> = BinaryHeap::with_capacity(n.min(4096) + 1);
    let mut query_id = 0;
    for h in hits {
        query_id = h.query_id;
        heap.push((Reverse(h.ungapped_score), h.target_id, h.diagonal));
        if heap.len() > n {
            heap.pop();
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|(Reverse(ungapped_score), target_id, diagonal)| PrefilterHit {
            query_id,
            target_id,
            diagonal,
            ungapped_score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::encode;
    use crate::index::kmer_code;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn m() -> SubstitutionMatrix {
        SubstitutionMatrix::blosum62()
    }

    fn setup(targets: &[&str], k: usize) -> (TargetDb, KmerIndex) {
        let recs: Vec<_> = targets
            .iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::from_letters(format!("t{i}"), s))
            .collect();
        let db = TargetDb::from_records(&recs);
        let idx = KmerIndex::build(&db, k).unwrap();
        (db, idx)
    }

    /// Exhaustive enumeration of all contiguous segments on a diagonal.
    fn segment_oracle(q: &[u8], t: &[u8], d: i64, m: &SubstitutionMatrix) -> i32 {
        let cells: Vec<i32> = (0..q.len() as i64)
            .filter_map(|i| {
                let j = i - d;
                (j >= 0 && (j as usize) < t.len()).then(|| m.score(q[i as usize], t[j as usize]))
            })
            .collect();
        let mut best = 0;
        for a in 0..cells.len() {
            for b in a..cells.len() {
                best = best.max(cells[a..=b].iter().sum());
            }
        }
        best
    }

    #[test]
    fn self_hit_on_diagonal_zero() {
        let seq = "MKWVTFISLLLLFSSAYSRGVFRRDTHKSEIAHRFKDLGE";
        let (db, idx) = setup(&[seq, "PPPPPPPPPPPPPPPP"], 5);
        let q = SequenceRecord::from_letters("q", seq);
        let hits = prefilter_query(0, &q, &db, &idx, &m(), &PrefilterConfig::default()).unwrap();
        assert_eq!(hits.len(), 1);
        let self_score: i32 = q.residues.iter().map(|&r| m().score(r, r)).sum();
        assert_eq!(hits[0].target_id, 0);
        assert_eq!(hits[0].diagonal, 0);
        assert_eq!(hits[0].ungapped_score, self_score);
    }

    #[test]
    fn no_shared_kmer_no_hits() {
        let (db, idx) = setup(&["AAAAAAAAAAAA"], 5);
        let q = SequenceRecord::from_letters("q", "WWWWWWWWWW");
        assert!(prefilter_query(0, &q, &db, &idx, &m(), &PrefilterConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn short_query_rejected() {
        let (db, idx) = setup(&["AAAAAAAAAAAA"], 5);
        let q = SequenceRecord::from_letters("q", "AAAA");
        assert!(matches!(
            prefilter_query(0, &q, &db, &idx, &m(), &PrefilterConfig::default()),
            Err(Error::QueryTooShort { len: 4, k: 5, .. })
        ));
    }

    #[test]
    fn single_kmer_match_does_not_trigger() {
        let (db, idx) = setup(&["PPPPPMKWVTPPPPP"], 5);
        let q = SequenceRecord::from_letters("q", "GGGGMKWVTGGGG");
        let cfg = PrefilterConfig {
            min_ungapped_score: 0,
            ..Default::default()
        };
        assert!(prefilter_query(0, &q, &db, &idx, &m(), &cfg).unwrap().is_empty());
    }

    #[test]
    fn diagonal_kernel_cases() {
        let m = m();
        let w = encode(b"WWWWWW").0;
        let p = encode(b"PPPPPP").0;
        assert!(m.score(w[0], p[0]) < 0);
        for d in -5..6 {
            assert_eq!(diagonal_score(&w, &p, d, &m).unwrap(), 0);
        }
        let q = encode(b"GGHGG").0;
        let t = encode(b"PPHPP").0;
        assert_eq!(diagonal_score(&q, &t, 0, &m).unwrap(), m.score(q[2], q[2]));
        assert!(diagonal_score(&q, &t, 5, &m).is_err());
        assert!(diagonal_score(&q, &t, -5, &m).is_err());
        assert!(diagonal_score(&q, &t, -4, &m).is_ok());
    }

    #[test]
    fn random_pairs_match_segment_oracle() {
        let m = m();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let ql = rng.gen_range(1..40);
            let tl = rng.gen_range(1..40);
            let q: Vec<u8> = (0..ql).map(|_| rng.gen_range(0..21)).collect();
            let t: Vec<u8> = (0..tl).map(|_| rng.gen_range(0..21)).collect();
            for d in -(tl as i64) + 1..ql as i64 {
                assert_eq!(diagonal_score(&q, &t, d, &m).unwrap(), segment_oracle(&q, &t, d, &m));
            }
        }
    }

    #[test]
    fn expansion_self_threshold_is_singleton() {
        let m = m();
        let kmer = encode(b"WCHY").0;
        let self_score: i32 = kmer.iter().map(|&r| m.score(r, r)).sum();
        let out = expand_similar_kmers(&kmer, &m, self_score).unwrap();
        assert_eq!(out, vec![kmer_code(&kmer).unwrap()]);
    }

    #[test]
    fn expansion_guard() {
        let m = m();
        let k4 = encode(b"ACDE").0;
        assert_eq!(expand_similar_kmers(&k4, &m, i32::MIN / 2).unwrap().len(), 160_000);
        let k5 = encode(b"ACDEF").0;
        let err = expand_similar_kmers(&k5, &m, i32::MIN / 2).unwrap_err();
        assert!(err.to_string().contains("expansion too large"));
    }

    #[test]
    fn expansion_matches_brute_force() {
        let m = m();
        let kmer = encode(b"MKW").0;
        let self_score: i32 = kmer.iter().map(|&r| m.score(r, r)).sum();
        let threshold = self_score - 4;
        let mut brute = Vec::new();
        for code in 0..8000u32 {
            let w = decode_kmer(code, 3);
            let s: i32 = kmer.iter().zip(&w).map(|(&a, &b)| m.score(a, b)).sum();
            if s >= threshold {
                brute.push(code);
            }
        }
        assert!(brute.len() > 1);
        assert_eq!(expand_similar_kmers(&kmer, &m, threshold).unwrap(), brute);
    }

    #[test]
    fn top_n_tie_break() {
        let hits: Vec<_> = [(5, 10), (3, 20), (7, 30), (2, 10), (1, 30)]
            .iter()
            .map(|&(t, s)| PrefilterHit {
                query_id: 4,
                target_id: t,
                diagonal: 0,
                ungapped_score: s,
            })
            .collect();
        let ids = |n| select_top(hits.clone(), n).iter().map(|h| h.target_id).collect::<Vec<_>>();
        assert_eq!(ids(1), vec![1]);
        assert_eq!(ids(3), vec![1, 7, 3]);
        assert_eq!(ids(1000), vec![1, 7, 3, 2, 5]);
        assert!(select_top(hits.clone(), 2).iter().all(|h| h.query_id == 4));
    }

    proptest! {
        #[test]
        fn monotone_in_threshold_and_cap(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ancestor: Vec<u8> = (0..60).map(|_| rng.gen_range(0..20)).collect();
            let mut recs = Vec::new();
            for i in 0..8 {
                let s: Vec<u8> = ancestor.iter().map(|&r| if rng.gen_bool(0.2) { rng.gen_range(0..20) } else { r }).collect();
                recs.push(SequenceRecord::new(format!("t{i}"), s));
            }
            let db = TargetDb::from_records(&recs);
            let idx = KmerIndex::build(&db, 4).unwrap();
            let q = SequenceRecord::new("q", ancestor);
            let run = |min, n| prefilter_query(0, &q, &db, &idx, &m(), &PrefilterConfig {
                max_seqs: n, min_ungapped_score: min, similar_kmer_threshold: None,
            }).unwrap();
            let loose = run(0, 1000);
            let strict = run(40, 1000);
            prop_assert!(strict.iter().all(|h| loose.contains(h)));
            let small = run(0, 3);
            let large = run(0, 5);
            prop_assert!(small.len() <= 3);
            prop_assert_eq!(&large[..small.len()], &small[..]);
            let mut targets: Vec<_> = loose.iter().map(|h| h.target_id).collect();
            targets.dedup();
            prop_assert_eq!(targets.len(), loose.len());
        }
    }
}
