use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::index::DEFAULT_K;
use crate::karlin::GappedKarlinParams;
use crate::matrix::SubstitutionMatrix;
use crate::prefilter::{DEFAULT_MAX_SEQS, DEFAULT_MIN_UNGAPPED_SCORE};
use crate::profile::{ProfileConfig, DEFAULT_BETA, DEFAULT_INCLUSION_EVALUE};

pub const WORKERS_ENV: &str = "PROFGEN_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutputKind {
    Alignments,
    Pssm,
    AsciiPssm,
}

impl FromStr for OutputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "alignments" => Ok(Self::Alignments),
            "pssm" => Ok(Self::Pssm),
            "ascii-pssm" => Ok(Self::AsciiPssm),
            other => Err(Error::Config(format!(
                "unknown output '{other}' (expected alignments, pssm or ascii-pssm)"
            ))),
        }
    }
}

impl OutputKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Alignments => "alignments",
            Self::Pssm => "pssm",
            Self::AsciiPssm => "ascii-pssm",
        }
    }

    pub fn parse_list(s: &str) -> Result<BTreeSet<Self>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
    }
}

/// `PROFGEN_WORKERS` if set and valid, else the number of logical cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub index_dir: PathBuf,
    pub query_path: PathBuf,
    pub workdir: PathBuf,
    pub max_seqs: usize,
    pub inclusion_evalue: f64,
    pub min_ungapped_score: i32,
    pub k: usize,
    pub workers: usize,
    pub outputs: BTreeSet<OutputKind>,
    pub matrix: String,
    pub gap_open: i32,
    pub gap_extend: i32,
    /// Overrides for matrices without built-in gapped statistics.
    pub gapped_lambda: Option<f64>,
    pub gapped_k: Option<f64>,
    pub beta: f64,
    pub iterations: u32,
    pub similar_kmer_threshold: Option<i32>,
    pub band_width: Option<usize>,
    pub external_profiler: Option<String>,
    /// Search-stage alignments for the whole batch, one TSV.
    pub out_alignments: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            index_dir: PathBuf::new(),
            query_path: PathBuf::new(),
            workdir: PathBuf::new(),
            max_seqs: DEFAULT_MAX_SEQS,
            inclusion_evalue: DEFAULT_INCLUSION_EVALUE,
            min_ungapped_score: DEFAULT_MIN_UNGAPPED_SCORE,
            k: DEFAULT_K,
            workers: default_workers(),
            outputs: BTreeSet::from([OutputKind::AsciiPssm]),
            matrix: "BLOSUM62".into(),
            gap_open: 11,
            gap_extend: 1,
            gapped_lambda: None,
            gapped_k: None,
            beta: DEFAULT_BETA,
            iterations: 1,
            similar_kmer_threshold: None,
            band_width: None,
            external_profiler: None,
            out_alignments: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.outputs.is_empty() {
            return Err(Error::Config("at least one output must be selected".into()));
        }
        if self.max_seqs == 0 {
            return Err(Error::Config("max_seqs must be at least 1".into()));
        }
        if !(self.inclusion_evalue >= 0.0) {
            return Err(Error::Config("evalue must be non-negative".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("pseudocount beta must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn profile_config(&self) -> ProfileConfig {
        ProfileConfig {
            inclusion_evalue: self.inclusion_evalue,
            beta: self.beta,
            iterations: self.iterations,
        }
    }

    pub fn gapped_params(&self, matrix: &SubstitutionMatrix) -> Result<GappedKarlinParams> {
        match (self.gapped_lambda, self.gapped_k) {
            (Some(l), Some(k)) => GappedKarlinParams::new(matrix, l, k, self.gap_open, self.gap_extend),
            (None, None) => GappedKarlinParams::lookup(matrix, self.gap_open, self.gap_extend).ok_or_else(|| {
                Error::Config(format!(
                    "no gapped statistics for {} with gaps {}/{}; set gapped_lambda and gapped_k",
                    matrix.name(),
                    self.gap_open,
                    self.gap_extend
                ))
            }),
            _ => Err(Error::Config("gapped_lambda and gapped_k must be given together".into())),
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let opt = |v: &str| !v.is_empty() && v != "none";
        match key.trim() {
            "max_seqs" => self.max_seqs = parse(key, v)?,
            "evalue" | "inclusion_evalue" => self.inclusion_evalue = parse(key, v)?,
            "min_ungapped_score" => self.min_ungapped_score = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "outputs" | "out" => self.outputs = OutputKind::parse_list(v)?,
            "matrix" => self.matrix = v.to_string(),
            "gap_open" => self.gap_open = parse(key, v)?,
            "gap_extend" => self.gap_extend = parse(key, v)?,
            "gapped_lambda" => self.gapped_lambda = opt(v).then(|| parse(key, v)).transpose()?,
            "gapped_k" => self.gapped_k = opt(v).then(|| parse(key, v)).transpose()?,
            "beta" | "pseudocount_beta" => self.beta = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "similar_kmer_threshold" => self.similar_kmer_threshold = opt(v).then(|| parse(key, v)).transpose()?,
            "band_width" => self.band_width = opt(v).then(|| parse(key, v)).transpose()?,
            other => return Err(Error::Config(format!("unknown setting '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_lines(&mut self, text: &str) -> Result<()> {
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{line}'")))?;
            self.set(k, v)?;
        }
        Ok(())
    }
}
