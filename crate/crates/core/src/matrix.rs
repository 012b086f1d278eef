//! Substitution matrices and their ungapped Karlin-Altschul statistics.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{SMatrix, SVector};

use crate::alphabet::{AminoAcid, ALPHABET_SIZE, CANONICAL, RESIDUE_ORDER, X_INDEX};
use crate::error::{Error, Result};

const BLOSUM62_TEXT: &str = include_str!("../data/BLOSUM62");

/// Score of `X` against any canonical residue.
pub const X_SCORE: i32 = -1;
/// Score of `X` against itself.
pub const X_SELF_SCORE: i32 = 0;

const LAMBDA_TOLERANCE: f64 = 1e-10;

/// Robinson & Robinson amino-acid frequencies, in internal residue order.
/// Used only when a matrix has no valid implied background.
pub const STANDARD_BACKGROUND: [f64; 20] = [
    0.07805, 0.05129, 0.04487, 0.05364, 0.01925, 0.04264, 0.06295, 0.07377, 0.02199, 0.05142,
    0.09019, 0.05744, 0.02243, 0.03856, 0.05203, 0.07120, 0.05841, 0.01330, 0.03216, 0.06441,
];

pub fn builtin_names() -> &'static [&'static str] {
    &["BLOSUM62"]
}

fn builtin_text(name: &str) -> Option<&'static str> {
    match name.to_ascii_uppercase().as_str() {
        "BLOSUM62" => Some(BLOSUM62_TEXT),
        _ => None,
    }
}

/// An immutable 21x21 integer scoring matrix (20 canonical residues plus `X`)
/// with its background frequencies, target frequencies and ungapped lambda.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutionMatrix {
    name: String,
    scores: [[i32; ALPHABET_SIZE]; ALPHABET_SIZE],
    lambda_u: f64,
    background: [f64; CANONICAL],
    target_freqs: [[f64; CANONICAL]; CANONICAL],
}

impl SubstitutionMatrix {
    pub fn blosum62() -> Self {
        Self::parse("BLOSUM62", BLOSUM62_TEXT).expect("embedded BLOSUM62 is valid")
    }

    /// Builds a matrix from canonical scores. `X` rows and columns follow the
    /// fixed rule (`-1` against residues, `0` against itself).
    ///
    /// Without an explicit background the matrix's implied background is
    /// derived together with lambda, so that the target frequencies have
    /// the background as their marginals.
    pub fn from_scores(
        name: &str,
        canonical: &[[i32; CANONICAL]; CANONICAL],
        background: Option<[f64; CANONICAL]>,
    ) -> Result<Self> {
        for i in 0..CANONICAL {
            for j in 0..i {
                if canonical[i][j] != canonical[j][i] {
                    return Err(Error::AsymmetricMatrix(
                        RESIDUE_ORDER[i] as char,
                        RESIDUE_ORDER[j] as char,
                    ));
                }
            }
        }
        let flat = canonical.iter().flatten();
        if !flat.clone().any(|&s| s > 0) || !flat.clone().any(|&s| s < 0) {
            return Err(Error::NoLambdaRoot(name.to_string()));
        }

        let (lambda_u, background) = match background {
            Some(bg) => {
                if bg.iter().any(|&p| !(p > 0.0)) {
                    return Err(Error::MalformedMatrix(
                        "background frequencies must be positive".into(),
                    ));
                }
                let total: f64 = bg.iter().sum();
                let bg = bg.map(|p| p / total);
                (solve_lambda(name, canonical, &bg)?, bg)
            }
            None => match solve_implied(canonical) {
                Some(found) => found,
                None => {
                    let total: f64 = STANDARD_BACKGROUND.iter().sum();
                    let bg = STANDARD_BACKGROUND.map(|p| p / total);
                    (solve_lambda(name, canonical, &bg)?, bg)
                }
            },
        };

        let mut scores = [[X_SCORE; ALPHABET_SIZE]; ALPHABET_SIZE];
        for i in 0..CANONICAL {
            scores[i][..CANONICAL].copy_from_slice(&canonical[i]);
        }
        scores[X_INDEX as usize][X_INDEX as usize] = X_SELF_SCORE;

        let mut target_freqs = [[0.0; CANONICAL]; CANONICAL];
        for i in 0..CANONICAL {
            for j in 0..CANONICAL {
                target_freqs[i][j] =
                    background[i] * background[j] * (lambda_u * canonical[i][j] as f64).exp();
            }
        }

        Ok(Self {
            name: name.to_string(),
            scores,
            lambda_u,
            background,
            target_freqs,
        })
    }

    /// Parses the whitespace-separated layout: a header row of residue
    /// letters followed by one labeled row per residue. Lines starting with
    /// `#` are comments, except `#! background` followed by 20 frequencies in
    /// `ARNDCQEGHILKMFPSTWYV` order.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut header: Option<Vec<u8>> = None;
        let mut background = None;
        let mut rows: [Option<Vec<i32>>; CANONICAL] = Default::default();

        for raw in text.lines() {
            let line = raw.trim();
            if let Some(directive) = line.strip_prefix("#!") {
                let mut tokens = directive.split_whitespace();
                if tokens.next() == Some("background") {
                    let values = tokens
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::MalformedMatrix(format!("background: {e}")))?;
                    let values: [f64; CANONICAL] = values.try_into().map_err(|_| {
                        Error::MalformedMatrix("background needs 20 values".into())
                    })?;
                    background = Some(values);
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let Some(cols) = &header else {
                let letters = tokens
                    .map(|t| match t.as_bytes() {
                        [c] => Ok(c.to_ascii_uppercase()),
                        _ => Err(Error::MalformedMatrix(format!("bad header token '{t}'"))),
                    })
                    .collect::<Result<Vec<u8>>>()?;
                header = Some(letters);
                continue;
            };
            let label = tokens.next().unwrap_or_default();
            let [label] = label.as_bytes() else {
                return Err(Error::MalformedMatrix(format!("bad row label '{label}'")));
            };
            let values = tokens
                .map(|t| t.parse::<i32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedMatrix(format!("row {}: {e}", *label as char)))?;
            if values.len() != cols.len() {
                return Err(Error::MalformedMatrix(format!(
                    "row {} has {} values, header has {}",
                    *label as char,
                    values.len(),
                    cols.len()
                )));
            }
            if let Some(aa) = AminoAcid::from_letter(*label).filter(|a| a.is_canonical()) {
                rows[aa.index() as usize] = Some(values);
            }
        }

        let cols = header.ok_or_else(|| Error::MalformedMatrix("missing header row".into()))?;
        let mut col_of = [usize::MAX; CANONICAL];
        for (pos, &c) in cols.iter().enumerate() {
            if let Some(aa) = AminoAcid::from_letter(c).filter(|a| a.is_canonical()) {
                col_of[aa.index() as usize] = pos;
            }
        }
        let mut canonical = [[0i32; CANONICAL]; CANONICAL];
        for i in 0..CANONICAL {
            let row = rows[i].as_ref().ok_or_else(|| {
                Error::MalformedMatrix(format!("missing row {}", RESIDUE_ORDER[i] as char))
            })?;
            for j in 0..CANONICAL {
                if col_of[j] == usize::MAX {
                    return Err(Error::MalformedMatrix(format!(
                        "missing column {}",
                        RESIDUE_ORDER[j] as char
                    )));
                }
                canonical[i][j] = row[col_of[j]];
            }
        }
        Self::from_scores(name, &canonical, background)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn score(&self, a: u8, b: u8) -> i32 {
        self.scores[a as usize][b as usize]
    }

    pub fn row(&self, a: u8) -> &[i32; ALPHABET_SIZE] {
        &self.scores[a as usize]
    }

    pub fn scores(&self) -> &[[i32; ALPHABET_SIZE]; ALPHABET_SIZE] {
        &self.scores
    }

    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    pub fn background(&self) -> &[f64; CANONICAL] {
        &self.background
    }

    pub fn target_freqs(&self) -> &[[f64; CANONICAL]; CANONICAL] {
        &self.target_freqs
    }

    pub fn max_diagonal(&self) -> i32 {
        (0..CANONICAL).map(|i| self.scores[i][i]).max().unwrap_or(0)
    }

    pub fn min_score(&self) -> i32 {
        self.scores.iter().flatten().copied().min().unwrap_or(0)
    }

    /// Renders the matrix in the same text layout accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.name);
        let _ = writeln!(out, "# lambda_u = {:.10}", self.lambda_u);
        out.push(' ');
        for c in RESIDUE_ORDER.iter().chain(b"X") {
            let _ = write!(out, "  {}", *c as char);
        }
        out.push('\n');
        for (i, c) in RESIDUE_ORDER.iter().chain(b"X").enumerate() {
            out.push(*c as char);
            for s in &self.scores[i] {
                let _ = write!(out, " {s:>2}");
            }
            out.push('\n');
        }
        out
    }
}

/// Resolves a built-in matrix name or reads a matrix file.
pub fn load_matrix(name_or_path: &str) -> Result<SubstitutionMatrix> {
    if let Some(text) = builtin_text(name_or_path) {
        return SubstitutionMatrix::parse(&name_or_path.to_ascii_uppercase(), text);
    }
    let path = Path::new(name_or_path);
    if !path.is_file() {
        return Err(Error::UnknownMatrix(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| name_or_path.to_string());
    SubstitutionMatrix::parse(&name, &text)
}

fn karlin_sum(canonical: &[[i32; CANONICAL]; CANONICAL], bg: &[f64; CANONICAL], lambda: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..CANONICAL {
        for j in 0..CANONICAL {
            total += bg[i] * bg[j] * (lambda * canonical[i][j] as f64).exp();
        }
    }
    total
}

/// Bisection on `sum_ij P_i P_j exp(lambda s_ij) = 1` for the positive root.
fn solve_lambda(
    name: &str,
    canonical: &[[i32; CANONICAL]; CANONICAL],
    bg: &[f64; CANONICAL],
) -> Result<f64> {
    let expected: f64 = (0..CANONICAL)
        .flat_map(|i| (0..CANONICAL).map(move |j| (i, j)))
        .map(|(i, j)| bg[i] * bg[j] * canonical[i][j] as f64)
        .sum();
    if expected >= 0.0 {
        return Err(Error::NoLambdaRoot(name.to_string()));
    }
    let mut lo = 0.0;
    let mut hi = 0.5;
    while karlin_sum(canonical, bg, hi) <= 1.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::NoLambdaRoot(name.to_string()));
        }
    }
    while hi - lo > LAMBDA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if karlin_sum(canonical, bg, mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

type Square = SMatrix<f64, CANONICAL, CANONICAL>;

fn implied_background(canonical: &[[i32; CANONICAL]; CANONICAL], lambda: f64) -> Option<[f64; CANONICAL]> {
    let a = Square::from_fn(|i, j| (lambda * canonical[i][j] as f64).exp());
    let p = a.lu().solve(&SVector::<f64, CANONICAL>::repeat(1.0))?;
    let mut out = [0.0; CANONICAL];
    out.copy_from_slice(p.as_slice());
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Jointly finds lambda and the background P with `exp(lambda S) P = 1` and
/// `sum(P) = 1`. `None` if no such pair has all-positive frequencies.
fn solve_implied(canonical: &[[i32; CANONICAL]; CANONICAL]) -> Option<(f64, [f64; CANONICAL])> {
    let excess = |lambda: f64| implied_background(canonical, lambda).map(|p| p.iter().sum::<f64>() - 1.0);

    const STEP: f64 = 0.01;
    let mut lo = STEP;
    if !(excess(lo)? > 0.0) {
        return None;
    }
    let mut hi = lo;
    loop {
        hi += STEP;
        if hi > 10.0 {
            return None;
        }
        match excess(hi) {
            Some(v) if v <= 0.0 => break,
            Some(_) => lo = hi,
            None => return None,
        }
    }
    while hi - lo > LAMBDA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let p = implied_background(canonical, lambda)?;
    if p.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let total: f64 = p.iter().sum();
    Some((lambda, p.map(|v| v / total)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_scores() -> [[i32; CANONICAL]; CANONICAL] {
        let mut s = [[-1; CANONICAL]; CANONICAL];
        for (i, row) in s.iter_mut().enumerate() {
            row[i] = 1;
        }
        s
    }

    /// Plain bisection on the scalar Karlin equation, kept separate from the
    /// implementation's solver.
    fn oracle_lambda(s: &[[i32; CANONICAL]; CANONICAL], bg: &[f64; CANONICAL]) -> f64 {
        let f = |l: f64| {
            let mut t = 0.0;
            for i in 0..CANONICAL {
                for j in 0..CANONICAL {
                    t += bg[i] * bg[j] * (l * s[i][j] as f64).exp();
                }
            }
            t - 1.0
        };
        let (mut a, mut b) = (1e-6, 20.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                b = m
            } else {
                a = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn blosum62_matches_embedded_text() {
        let m = SubstitutionMatrix::blosum62();
        let w = AminoAcid::from_letter(b'W').unwrap().index();
        assert_eq!(m.score(w, w), 11);
        assert_eq!(m.max_diagonal(), 11);
        let line = BLOSUM62_TEXT.lines().find(|l| l.starts_with('C')).unwrap();
        let c = AminoAcid::from_letter(b'C').unwrap().index();
        assert_eq!(line.split_whitespace().nth(5).unwrap(), "9");
        assert_eq!(m.score(c, c), 9);
    }

    #[test]
    fn blosum62_is_symmetric_with_neutral_x() {
        let m = SubstitutionMatrix::blosum62();
        for a in 0..21u8 {
            for b in 0..21u8 {
                assert_eq!(m.score(a, b), m.score(b, a));
            }
            assert!(m.score(a, X_INDEX) <= 0);
        }
        assert_eq!(m.score(X_INDEX, X_INDEX), 0);
        assert_eq!(m.score(0, X_INDEX), -1);
    }

    #[test]
    fn blosum62_frequencies_are_consistent() {
        let m = SubstitutionMatrix::blosum62();
        let bg_sum: f64 = m.background().iter().sum();
        assert!((bg_sum - 1.0).abs() < 1e-12);
        let q_sum: f64 = m.target_freqs().iter().flatten().sum();
        assert!((q_sum - 1.0).abs() < 1e-8);
        for i in 0..CANONICAL {
            let row: f64 = m.target_freqs()[i].iter().sum();
            assert!((row / m.background()[i] - 1.0).abs() < 0.02, "row {i}");
        }
        assert!(m.lambda_u() > 0.3 && m.lambda_u() < 0.35, "{}", m.lambda_u());
        assert!((m.lambda_u() - oracle_lambda(&canonical_of(&m), m.background())).abs() < 1e-8);
    }

    fn canonical_of(m: &SubstitutionMatrix) -> [[i32; CANONICAL]; CANONICAL] {
        let mut c = [[0; CANONICAL]; CANONICAL];
        for (dst, src) in c.iter_mut().zip(m.scores()) {
            dst.copy_from_slice(&src[..CANONICAL]);
        }
        c
    }

    #[test]
    fn scores_rederive_from_target_freqs() {
        let m = SubstitutionMatrix::blosum62();
        for i in 0..CANONICAL {
            for j in 0..CANONICAL {
                let q = m.target_freqs()[i][j];
                let p = m.background()[i] * m.background()[j];
                let s = ((q / p).ln() / m.lambda_u()).round() as i32;
                assert_eq!(s, m.scores()[i][j]);
            }
        }
    }

    #[test]
    fn zero_matrix_has_no_root() {
        let err = SubstitutionMatrix::from_scores("zero", &[[0; 20]; 20], None).unwrap_err();
        assert!(matches!(err, Error::NoLambdaRoot(_)));
        assert!(err.to_string().contains("no positive lambda root"));
    }

    #[test]
    fn identity_lambda_uniform_background() {
        let s = identity_scores();
        let m = SubstitutionMatrix::from_scores("ident", &s, Some([0.05; 20])).unwrap();
        // x/20 + 19/(20x) = 1 with x = e^lambda has the positive root x = 19.
        assert!((m.lambda_u() - 19f64.ln()).abs() < 1e-9);
        assert!((m.lambda_u() - oracle_lambda(&s, &[0.05; 20])).abs() < 1e-9);
        let implied = SubstitutionMatrix::from_scores("ident", &s, None).unwrap();
        assert!((implied.lambda_u() - 19f64.ln()).abs() < 1e-8);
        for p in implied.background() {
            assert!((p - 0.05).abs() < 1e-9);
        }
    }

    #[test]
    fn text_round_trip_and_errors() {
        let m = SubstitutionMatrix::blosum62();
        let again = SubstitutionMatrix::parse("BLOSUM62", &m.to_text()).unwrap();
        assert_eq!(again.scores(), m.scores());

        let mut text = m.to_text();
        text = text.replacen("A  4 -1", "A  4 -2", 1);
        assert!(matches!(
            SubstitutionMatrix::parse("x", &text),
            Err(Error::AsymmetricMatrix(..))
        ));
        assert!(matches!(
            SubstitutionMatrix::parse("x", "   A R\nA 1 -1\n"),
            Err(Error::MalformedMatrix(_))
        ));
        assert!(matches!(load_matrix("NOPE99"), Err(Error::UnknownMatrix(_))));
        assert_eq!(load_matrix("blosum62").unwrap().name(), "BLOSUM62");
    }

    #[test]
    fn background_directive() {
        let mut text = String::from("#! background");
        for _ in 0..20 {
            text.push_str(" 0.05");
        }
        text.push('\n');
        text.push_str("   ");
        for c in RESIDUE_ORDER {
            text.push(*c as char);
            text.push(' ');
        }
        text.push('\n');
        for (i, &letter) in RESIDUE_ORDER.iter().enumerate() {
            text.push(letter as char);
            for j in 0..20 {
                text.push_str(if i == j { " 1" } else { " -1" });
            }
            text.push('\n');
        }
        let m = SubstitutionMatrix::parse("ident", &text).unwrap();
        assert!((m.lambda_u() - 19f64.ln()).abs() < 1e-9);
    }
}
