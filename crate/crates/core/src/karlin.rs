//! Gapped Karlin-Altschul statistics: `E = K m n exp(-lambda S)`.

use crate::error::{Error, Result};
use crate::matrix::SubstitutionMatrix;

/// Published gapped constants for BLOSUM62 with gap open 11, extend 1.
pub const BLOSUM62_11_1_LAMBDA: f64 = 0.267;
pub const BLOSUM62_11_1_K: f64 = 0.041;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GappedKarlinParams {
    pub lambda_g: f64,
    pub k_const: f64,
    /// Charged once per gap.
    pub gap_open: i32,
    /// Charged per gap residue, including the first.
    pub gap_extend: i32,
}

impl Default for GappedKarlinParams {
    fn default() -> Self {
        Self {
            lambda_g: BLOSUM62_11_1_LAMBDA,
            k_const: BLOSUM62_11_1_K,
            gap_open: 11,
            gap_extend: 1,
        }
    }
}

impl GappedKarlinParams {
    /// Validates the parameters against the matrix they will be used with.
    pub fn new(
        matrix: &SubstitutionMatrix,
        lambda_g: f64,
        k_const: f64,
        gap_open: i32,
        gap_extend: i32,
    ) -> Result<Self> {
        if !(lambda_g > 0.0) || !(k_const > 0.0) {
            return Err(Error::InvalidGaps("lambda and K must be positive".into()));
        }
        if lambda_g > matrix.lambda_u() {
            return Err(Error::InvalidGaps(format!(
                "gapped lambda {lambda_g} exceeds ungapped lambda {:.4}",
                matrix.lambda_u()
            )));
        }
        if gap_open < 0 || gap_extend < 1 {
            return Err(Error::InvalidGaps(
                "gap open must be >= 0 and gap extend >= 1".into(),
            ));
        }
        if gap_open + gap_extend <= matrix.max_diagonal() {
            return Err(Error::InvalidGaps(format!(
                "open + extend = {} must exceed the largest diagonal score {}",
                gap_open + gap_extend,
                matrix.max_diagonal()
            )));
        }
        Ok(Self {
            lambda_g,
            k_const,
            gap_open,
            gap_extend,
        })
    }

    /// Known constants for a (matrix, gap) combination, if tabulated.
    pub fn lookup(matrix: &SubstitutionMatrix, gap_open: i32, gap_extend: i32) -> Option<Self> {
        match (matrix.name(), gap_open, gap_extend) {
            ("BLOSUM62", 11, 1) => Self::new(
                matrix,
                BLOSUM62_11_1_LAMBDA,
                BLOSUM62_11_1_K,
                gap_open,
                gap_extend,
            )
            .ok(),
            _ => None,
        }
    }

    /// Cost of a gap of `len` residues.
    #[inline]
    pub fn gap_cost(&self, len: u32) -> i32 {
        self.gap_open + len as i32 * self.gap_extend
    }
}

/// Expected number of chance local alignments scoring at least `raw_score`
/// for a query of `query_len` residues against `db_residues` residues.
pub fn evalue(raw_score: i32, query_len: u64, db_residues: u64, params: &GappedKarlinParams) -> f64 {
    params.k_const
        * query_len as f64
        * db_residues as f64
        * (-params.lambda_g * raw_score as f64).exp()
}

pub fn bit_score(raw_score: i32, params: &GappedKarlinParams) -> f64 {
    (params.lambda_g * raw_score as f64 - params.k_const.ln()) / std::f64::consts::LN_2
}
