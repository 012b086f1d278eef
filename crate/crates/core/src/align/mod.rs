//! Affine-gap Smith-Waterman local alignment with traceback, plus the
//! batch driver that aligns prefilter survivors.

mod striped;

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::alphabet::ALPHABET_SIZE;
use crate::error::{Error, Result};
use crate::index::TargetDb;
use crate::karlin::{bit_score, evalue, GappedKarlinParams};
use crate::matrix::SubstitutionMatrix;
use crate::prefilter::PrefilterHit;

pub use striped::{score_only, StripedProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlignOp {
    /// Match or mismatch column.
    Match,
    /// Gap in the query; consumes a target residue only.
    QueryGap,
    /// Gap in the target; consumes a query residue only.
    TargetGap,
}

impl AlignOp {
    pub fn symbol(self) -> char {
        match self {
            AlignOp::Match => 'M',
            AlignOp::QueryGap => 'I',
            AlignOp::TargetGap => 'D',
        }
    }
}

/// Position-specific scores: `rows[i][r]` scores query position `i` against
/// residue `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryProfile {
    rows: Vec<[i32; ALPHABET_SIZE]>,
}

impl QueryProfile {
    pub fn from_matrix(query: &[u8], matrix: &SubstitutionMatrix) -> Self {
        Self {
            rows: query.iter().map(|&r| *matrix.row(r)).collect(),
        }
    }

    pub fn from_rows(rows: Vec<[i32; ALPHABET_SIZE]>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[inline]
    pub fn score(&self, qpos: usize, residue: u8) -> i32 {
        self.rows[qpos][residue as usize]
    }

    pub fn rows(&self) -> &[[i32; ALPHABET_SIZE]] {
        &self.rows
    }
}

/// One optimal local alignment in 0-based inclusive coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalAlignment {
    pub score: i32,
    pub q_start: usize,
    pub q_end: usize,
    pub t_start: usize,
    pub t_end: usize,
    /// Run-length edit script from `(q_start, t_start)`.
    pub ops: Vec<(AlignOp, u32)>,
}

impl LocalAlignment {
    pub fn columns(&self) -> u32 {
        self.ops.iter().map(|(_, n)| n).sum()
    }

    /// Count of match columns whose residues are identical.
    pub fn identical_columns(&self, query: &[u8], target: &[u8]) -> u32 {
        let (mut i, mut j, mut same) = (self.q_start, self.t_start, 0);
        for &(op, n) in &self.ops {
            for _ in 0..n {
                match op {
                    AlignOp::Match => {
                        same += (query[i] == target[j]) as u32;
                        i += 1;
                        j += 1;
                    }
                    AlignOp::QueryGap => j += 1,
                    AlignOp::TargetGap => i += 1,
                }
            }
        }
        same
    }

    pub fn cigar(&self) -> String {
        let mut s = String::new();
        for (op, n) in &self.ops {
            let _ = write!(s, "{n}{}", op.symbol());
        }
        s
    }
}

/// Restricts DP to cells whose diagonal lies within `width` of `center`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Band {
    pub center: i64,
    pub width: usize,
}

const SRC_ZERO: u8 = 0;
const SRC_DIAG: u8 = 1;
const SRC_F: u8 = 2;
const SRC_E: u8 = 3;
const E_EXTEND: u8 = 4;
const F_EXTEND: u8 = 8;
const NEG_INF: i32 = i32::MIN / 4;

/// Gotoh local alignment over a query profile with full traceback.
///
/// Tie-breaks: diagonal over target-gap over query-gap; among equal
/// maxima the smallest `(q_end, t_end)`; a gap is opened rather than
/// extended on equal score. Returns `None` when the best score is 0.
pub fn align_profile(
    profile: &QueryProfile,
    target: &[u8],
    gaps: &GappedKarlinParams,
    band: Option<Band>,
) -> Option<LocalAlignment> {
    let m = profile.len();
    let n = target.len();
    if m == 0 || n == 0 {
        return None;
    }
    let open = gaps.gap_open + gaps.gap_extend;
    let ext = gaps.gap_extend;
    let cols = n + 1;
    let mut tb = vec![0u8; (m + 1) * cols];
    let mut h_prev = vec![0i32; cols];
    let mut h_cur = vec![0i32; cols];
    let mut f_col = vec![NEG_INF; cols];
    let (mut best, mut best_i, mut best_j) = (0, 0, 0);

    for i in 1..=m {
        let row = &profile.rows[i - 1];
        let mut e = NEG_INF;
        h_cur[0] = 0;
        let (j_lo, j_hi) = match band {
            None => (1, n),
            Some(b) => {
                // (i - 1) - (j - 1) within center +/- width
                let lo = (i as i64 - b.center - b.width as i64).max(1);
                let hi = (i as i64 - b.center + b.width as i64).min(n as i64);
                if lo > hi {
                    h_cur.iter_mut().for_each(|h| *h = 0);
                    f_col.iter_mut().for_each(|f| *f = NEG_INF);
                    std::mem::swap(&mut h_prev, &mut h_cur);
                    continue;
                }
                (lo as usize, hi as usize)
            }
        };
        for j in 1..j_lo {
            h_cur[j] = 0;
            f_col[j] = NEG_INF;
        }
        let tb_row = &mut tb[i * cols..(i + 1) * cols];
        for j in j_lo..=j_hi {
            let mut flags = 0u8;
            let e_open = h_cur[j - 1] - open;
            let e_ext = e - ext;
            if e_ext > e_open {
                e = e_ext;
                flags |= E_EXTEND;
            } else {
                e = e_open;
            }
            let f_open = h_prev[j] - open;
            let f_ext = f_col[j] - ext;
            let f = if f_ext > f_open {
                flags |= F_EXTEND;
                f_ext
            } else {
                f_open
            };
            f_col[j] = f;
            let diag = h_prev[j - 1] + row[target[j - 1] as usize];
            let (h, src) = if diag >= f && diag >= e {
                (diag, SRC_DIAG)
            } else if f >= e {
                (f, SRC_F)
            } else {
                (e, SRC_E)
            };
            let (h, src) = if h > 0 { (h, src) } else { (0, SRC_ZERO) };
            h_cur[j] = h;
            tb_row[j] = flags | src;
            if h > best {
                best = h;
                best_i = i;
                best_j = j;
            }
        }
        for j in j_hi + 1..=n {
            h_cur[j] = 0;
            f_col[j] = NEG_INF;
        }
        std::mem::swap(&mut h_prev, &mut h_cur);
    }
    if best == 0 {
        return None;
    }

    #[derive(PartialEq)]
    enum State {
        H,
        E,
        F,
    }
    let (mut i, mut j) = (best_i, best_j);
    let mut state = State::H;
    let mut rev_ops: Vec<AlignOp> = Vec::new();
    loop {
        let cell = tb[i * cols + j];
        match state {
            State::H => match cell & 3 {
                SRC_DIAG => {
                    rev_ops.push(AlignOp::Match);
                    i -= 1;
                    j -= 1;
                    if i == 0 || j == 0 || tb[i * cols + j] & 3 == SRC_ZERO {
                        break;
                    }
                }
                SRC_F => state = State::F,
                SRC_E => state = State::E,
                _ => unreachable!("traceback reached a zero cell"),
            },
            State::F => {
                rev_ops.push(AlignOp::TargetGap);
                if cell & F_EXTEND == 0 {
                    state = State::H;
                }
                i -= 1;
            }
            State::E => {
                rev_ops.push(AlignOp::QueryGap);
                if cell & E_EXTEND == 0 {
                    state = State::H;
                }
                j -= 1;
            }
        }
    }

    let mut ops: Vec<(AlignOp, u32)> = Vec::new();
    for op in rev_ops.into_iter().rev() {
        match ops.last_mut() {
            Some((last, n)) if *last == op => *n += 1,
            _ => ops.push((op, 1)),
        }
    }
    Some(LocalAlignment {
        score: best,
        q_start: i,
        q_end: best_i - 1,
        t_start: j,
        t_end: best_j - 1,
        ops,
    })
}

pub fn smith_waterman(
    query: &[u8],
    target: &[u8],
    matrix: &SubstitutionMatrix,
    gaps: &GappedKarlinParams,
) -> Option<LocalAlignment> {
    align_profile(&QueryProfile::from_matrix(query, matrix), target, gaps, None)
}

/// A scored, annotated alignment of a query against a database target.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub query_id: usize,
    pub target_id: u32,
    pub raw_score: i32,
    pub bit_score: f64,
    pub evalue: f64,
    pub q_start: usize,
    pub q_end: usize,
    pub t_start: usize,
    pub t_end: usize,
    pub ops: Vec<(AlignOp, u32)>,
    pub identity: f64,
    pub q_cov: f64,
    pub t_cov: f64,
}

impl Alignment {
    pub fn from_local(
        local: LocalAlignment,
        query_id: usize,
        target_id: u32,
        query: &[u8],
        target: &[u8],
        gaps: &GappedKarlinParams,
        db_residues: u64,
    ) -> Self {
        let identity = local.identical_columns(query, target) as f64 / local.columns() as f64;
        Self {
            query_id,
            target_id,
            raw_score: local.score,
            bit_score: bit_score(local.score, gaps),
            evalue: evalue(local.score, query.len() as u64, db_residues, gaps),
            q_start: local.q_start,
            q_end: local.q_end,
            t_start: local.t_start,
            t_end: local.t_end,
            identity,
            q_cov: (local.q_end - local.q_start + 1) as f64 / query.len() as f64,
            t_cov: (local.t_end - local.t_start + 1) as f64 / target.len() as f64,
            ops: local.ops,
        }
    }
}

/// Orders alignments by ascending e-value, then ascending target id.
pub fn sort_alignments(alignments: &mut [Alignment]) {
    alignments.sort_by(|a, b| {
        a.evalue
            .total_cmp(&b.evalue)
            .then(a.target_id.cmp(&b.target_id))
    });
}

/// Aligns every hit of one query in parallel on the current rayon pool.
/// E-values use `db_residues` as the search space.
#[allow(clippy::too_many_arguments)]
pub fn align_hits(
    query_id: usize,
    query: &[u8],
    hits: &[PrefilterHit],
    db: &TargetDb,
    matrix: &SubstitutionMatrix,
    gaps: &GappedKarlinParams,
    db_residues: u64,
    band_width: Option<usize>,
) -> Result<Vec<Alignment>> {
    if let Some(h) = hits.iter().find(|h| db.get(h.target_id).is_none()) {
        return Err(Error::DanglingTarget(h.target_id));
    }
    let profile = QueryProfile::from_matrix(query, matrix);
    let mut out: Vec<Alignment> = hits
        .par_iter()
        .filter_map(|hit| {
            let target = db.sequence(hit.target_id);
            let band = band_width.map(|width| Band {
                center: hit.diagonal,
                width,
            });
            align_profile(&profile, target, gaps, band).map(|local| {
                Alignment::from_local(local, query_id, hit.target_id, query, target, gaps, db_residues)
            })
        })
        .collect();
    sort_alignments(&mut out);
    Ok(out)
}

pub const ALIGNMENT_TSV_HEADER: &str =
    "query\ttarget\traw_score\tbit_score\tevalue\tq_start\tq_end\tt_start\tt_end\tidentity\tq_cov\tt_cov";

/// One TSV row per alignment; coordinates are 0-based inclusive.
pub fn write_alignment_row<W: Write>(
    out: &mut W,
    query_name: &str,
    target_name: &str,
    a: &Alignment,
) -> Result<()> {
    writeln!(
        out,
        "{query_name}\t{target_name}\t{}\t{:.1}\t{:.3e}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
        a.raw_score, a.bit_score, a.evalue, a.q_start, a.q_end, a.t_start, a.t_end, a.identity, a.q_cov, a.t_cov
    )?;
    Ok(())
}
