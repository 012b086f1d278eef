use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::index::{check_k, DEFAULT_K};
use crate::pipeline::default_workers;
use crate::prefilter::DEFAULT_MAX_SEQS;

/// Flat `key=value` scenario; unknown keys are rejected, missing keys keep
/// their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchScenario {
    pub db_size: usize,
    pub mean_len: usize,
    pub len_sd: f64,
    pub batch_sizes: Vec<usize>,
    pub seed: u64,
    pub mutation_rate: f64,
    /// Defaults to the largest batch size.
    pub query_count: usize,
    pub homolog_count: usize,
    /// Query lengths for the length sweep.
    pub lengths: Vec<usize>,
    pub repeats: usize,
    pub k: usize,
    pub workers: usize,
    pub max_seqs: usize,
}

impl Default for BenchScenario {
    fn default() -> Self {
        Self {
            db_size: 50_000,
            mean_len: 100,
            len_sd: 30.0,
            batch_sizes: vec![1, 5, 10, 25, 50],
            seed: 1,
            mutation_rate: 0.1,
            query_count: 50,
            homolog_count: 5,
            lengths: vec![50, 100, 200, 400, 800, 1600],
            repeats: 3,
            k: DEFAULT_K,
            workers: default_workers(),
            max_seqs: DEFAULT_MAX_SEQS,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("scenario: invalid value '{v}' for {key}")))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| num(key, p.trim())).collect()
}

impl BenchScenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        let mut query_count_set = false;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("scenario: expected key=value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "db_size" => s.db_size = num(k, v)?,
                "mean_len" => s.mean_len = num(k, v)?,
                "len_sd" => s.len_sd = num(k, v)?,
                "batch_sizes" => s.batch_sizes = list(k, v)?,
                "seed" => s.seed = num(k, v)?,
                "mutation_rate" => s.mutation_rate = num(k, v)?,
                "query_count" => {
                    s.query_count = num(k, v)?;
                    query_count_set = true;
                }
                "homolog_count" => s.homolog_count = num(k, v)?,
                "lengths" => s.lengths = list(k, v)?,
                "repeats" => s.repeats = num(k, v)?,
                "k" => s.k = num(k, v)?,
                "workers" => s.workers = num(k, v)?,
                "max_seqs" => s.max_seqs = num(k, v)?,
                other => return Err(Error::Config(format!("scenario: unknown key '{other}'"))),
            }
        }
        if !query_count_set {
            s.query_count = s.batch_sizes.iter().copied().max().unwrap_or(1);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if self.db_size == 0 {
            return bad("db_size must be at least 1");
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return bad("batch sizes must be at least 1");
        }
        if self.lengths.contains(&0) {
            return bad("lengths must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1]");
        }
        if !(self.len_sd >= 0.0 && self.len_sd.is_finite()) || self.mean_len == 0 {
            return bad("mean_len must be positive and len_sd non-negative");
        }
        if self.batch_sizes.iter().any(|&b| b > self.query_count) {
            return bad("a batch size exceeds query_count");
        }
        if self.query_count * self.homolog_count > self.db_size {
            return bad("planted homologs exceed db_size");
        }
        if self.repeats == 0 || self.workers == 0 || self.max_seqs == 0 {
            return bad("repeats, workers and max_seqs must be at least 1");
        }
        check_k(self.k)
    }
}
