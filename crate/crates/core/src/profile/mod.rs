//! Position-specific scoring matrices built from golden sets.
//!
//! Members are aligned to the query, projected onto query coordinates,
//! weighted per position, mixed with substitution-matrix pseudocounts and
//! converted back to integer log-odds in matrix units.

mod external;
mod format;

use rayon::prelude::*;

pub use external::{ExternalJob, ExternalProfiler};
pub use format::{read_binary_pssm, write_ascii_pssm, write_binary_pssm, PSSM_MAGIC, PSSM_VERSION};

use crate::align::{align_profile, AlignOp, QueryProfile};
use crate::alphabet::{ALPHABET_SIZE, CANONICAL};
use crate::error::{Error, Result};
use crate::golden::GoldenSet;
use crate::karlin::{evalue, GappedKarlinParams};
use crate::matrix::SubstitutionMatrix;

pub const DEFAULT_INCLUSION_EVALUE: f64 = 10.0;
pub const DEFAULT_BETA: f64 = 10.0;

/// Empty cell in a [`ColumnStack`]: uncovered, deleted, or not counted.
pub const GAP: u8 = u8::MAX;

/// Query-anchored alignment stack. Row 0 is the query; every row has one
/// cell per query position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnStack {
    rows: Vec<Vec<u8>>,
}

impl ColumnStack {
    pub fn query_only(query: &[u8]) -> Self {
        Self {
            rows: vec![query.to_vec()],
        }
    }

    /// Builds a stack from pre-projected rows. Panics if the row lengths
    /// disagree with the query.
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Self {
        assert!(!rows.is_empty(), "stack needs the query row");
        assert!(rows.iter().all(|r| r.len() == rows[0].len()), "ragged stack");
        Self { rows }
    }

    pub fn query(&self) -> &[u8] {
        &self.rows[0]
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    /// Residues present in column `pos`, gaps omitted.
    pub fn column(&self, pos: usize) -> Vec<u8> {
        self.rows.iter().map(|r| r[pos]).filter(|&c| c != GAP).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileColumn {
    pub query_residue: u8,
    pub weighted_freqs: [f64; CANONICAL],
    pub pseudo_freqs: [f64; CANONICAL],
    pub mixed_freqs: [f64; CANONICAL],
    pub scores: [i32; CANONICAL],
    pub info_content: f64,
    pub n_eff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pssm {
    pub query_header: String,
    pub matrix_name: String,
    pub columns: Vec<ProfileColumn>,
}

impl Pssm {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Alignment profile from the PSSM scores; `X` scores -1 as in the
    /// substitution matrix.
    pub fn query_profile(&self) -> QueryProfile {
        QueryProfile::from_rows(
            self.columns
                .iter()
                .map(|c| {
                    let mut row = [-1; ALPHABET_SIZE];
                    row[..CANONICAL].copy_from_slice(&c.scores);
                    row
                })
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileConfig {
    pub inclusion_evalue: f64,
    pub beta: f64,
    /// Stacking passes; passes after the first score members with the
    /// previous PSSM.
    pub iterations: u32,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            inclusion_evalue: DEFAULT_INCLUSION_EVALUE,
            beta: DEFAULT_BETA,
            iterations: 1,
        }
    }
}

pub fn stack_alignments(
    golden: &GoldenSet,
    matrix: &SubstitutionMatrix,
    gaps: &GappedKarlinParams,
    inclusion_evalue: f64,
) -> Result<ColumnStack> {
    let query = &golden.members.first().ok_or(Error::EmptyGoldenSet)?.residues;
    stack_with_profile(golden, &QueryProfile::from_matrix(query, matrix), gaps, inclusion_evalue)
}

/// Stacks every non-query member aligned with `profile`. Members whose
/// e-value (search space: query length x golden residues) exceeds
/// `inclusion_evalue` are left out.
pub fn stack_with_profile(
    golden: &GoldenSet,
    profile: &QueryProfile,
    gaps: &GappedKarlinParams,
    inclusion_evalue: f64,
) -> Result<ColumnStack> {
    let query = &golden.members.first().ok_or(Error::EmptyGoldenSet)?.residues;
    let m = query.len();
    let space = golden.total_residues();
    let projected: Vec<Option<Vec<u8>>> = golden.members[1..]
        .par_iter()
        .map(|member| {
            let a = align_profile(profile, &member.residues, gaps, None)?;
            if evalue(a.score, m as u64, space, gaps) > inclusion_evalue {
                return None;
            }
            let mut row = vec![GAP; m];
            let (mut i, mut j) = (a.q_start, a.t_start);
            for &(op, n) in &a.ops {
                let n = n as usize;
                match op {
                    AlignOp::Match => {
                        row[i..i + n].copy_from_slice(&member.residues[j..j + n]);
                        i += n;
                        j += n;
                    }
                    AlignOp::QueryGap => j += n,
                    AlignOp::TargetGap => i += n,
                }
            }
            Some(row)
        })
        .collect();
    let mut rows = Vec::with_capacity(projected.len() + 1);
    rows.push(query.clone());
    rows.extend(projected.into_iter().flatten());
    Ok(ColumnStack { rows })
}

fn counted(c: u8) -> bool {
    (c as usize) < CANONICAL
}

/// Order-independent float sum.
fn stable_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.into_iter().sum()
}

/// Position-based weights, normalized to sum 1. Rows without a counted
/// residue get weight 0.
pub fn position_weights(stack: &ColumnStack) -> Vec<f64> {
    let rows = stack.rows();
    let mut w = vec![0.0; rows.len()];
    for pos in 0..stack.width() {
        let mut counts = [0u32; CANONICAL];
        for r in rows {
            if counted(r[pos]) {
                counts[r[pos] as usize] += 1;
            }
        }
        let distinct = counts.iter().filter(|&&c| c > 0).count() as f64;
        for (s, r) in rows.iter().enumerate() {
            if counted(r[pos]) {
                w[s] += 1.0 / (distinct * counts[r[pos] as usize] as f64);
            }
        }
    }
    let total = stable_sum(w.clone());
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Mean distinct residue types over columns holding a counted residue
/// from at least one non-query row; 1 when there are none.
pub fn effective_diversity(stack: &ColumnStack) -> f64 {
    let rows = stack.rows();
    let (mut sum, mut n) = (0usize, 0usize);
    for pos in 0..stack.width() {
        if !rows[1..].iter().any(|r| counted(r[pos])) {
            continue;
        }
        let mut seen = [false; CANONICAL];
        rows.iter().filter(|r| counted(r[pos])).for_each(|r| seen[r[pos] as usize] = true);
        sum += seen.iter().filter(|&&b| b).count();
        n += 1;
    }
    if n == 0 {
        1.0
    } else {
        sum as f64 / n as f64
    }
}

pub fn build_pssm(
    query_header: &str,
    stack: &ColumnStack,
    matrix: &SubstitutionMatrix,
    beta: f64,
) -> Result<Pssm> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("pseudocount beta must be positive, got {beta}")));
    }
    let p = matrix.background();
    let q = matrix.target_freqs();
    let lambda = matrix.lambda_u();
    let weights = position_weights(stack);
    let n_eff = effective_diversity(stack);
    let alpha = n_eff - 1.0;

    let columns = (0..stack.width())
        .map(|pos| {
            let mut per_residue: Vec<Vec<f64>> = vec![Vec::new(); CANONICAL];
            for (s, r) in stack.rows().iter().enumerate() {
                if counted(r[pos]) {
                    per_residue[r[pos] as usize].push(weights[s]);
                }
            }
            let mut f = [0.0; CANONICAL];
            for (a, ws) in per_residue.into_iter().enumerate() {
                f[a] = stable_sum(ws);
            }
            let total: f64 = f.iter().sum();
            if total > 0.0 {
                f.iter_mut().for_each(|x| *x /= total);
            } else {
                f = *p;
            }

            let mut g = [0.0; CANONICAL];
            for (i, gi) in g.iter_mut().enumerate() {
                *gi = (0..CANONICAL).map(|j| f[j] / p[j] * q[i][j]).sum();
            }
            let gsum: f64 = g.iter().sum();
            g.iter_mut().for_each(|x| *x /= gsum);

            let mut mixed = [0.0; CANONICAL];
            let mut scores = [0; CANONICAL];
            let mut info = 0.0;
            for i in 0..CANONICAL {
                mixed[i] = (alpha * f[i] + beta * g[i]) / (alpha + beta);
                let ratio = mixed[i] / p[i];
                scores[i] = (ratio.ln() / lambda).round() as i32;
                info += mixed[i] * ratio.log2();
            }
            ProfileColumn {
                query_residue: stack.query()[pos],
                weighted_freqs: f,
                pseudo_freqs: g,
                mixed_freqs: mixed,
                scores,
                info_content: info.max(0.0),
                n_eff,
            }
        })
        .collect();
    Ok(Pssm {
        query_header: query_header.to_string(),
        matrix_name: matrix.name().to_string(),
        columns,
    })
}

/// Full internal profiling of one golden set.
pub fn profile_golden_set(
    golden: &GoldenSet,
    matrix: &SubstitutionMatrix,
    gaps: &GappedKarlinParams,
    cfg: &ProfileConfig,
) -> Result<Pssm> {
    let header = &golden.members.first().ok_or(Error::EmptyGoldenSet)?.header;
    let stack = stack_alignments(golden, matrix, gaps, cfg.inclusion_evalue)?;
    let mut pssm = build_pssm(header, &stack, matrix, cfg.beta)?;
    for _ in 1..cfg.iterations.max(1) {
        let stack = stack_with_profile(golden, &pssm.query_profile(), gaps, cfg.inclusion_evalue)?;
        pssm = build_pssm(header, &stack, matrix, cfg.beta)?;
    }
    Ok(pssm)
}

#[cfg(test)]
mod tests;
