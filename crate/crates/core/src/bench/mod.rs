//! Synthetic databases with planted homologs, a full-scan baseline, and
//! runtime sweeps over batch size and query length.

mod scenario;

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

pub use scenario::BenchScenario;

use crate::align::{align_profile, score_only, QueryProfile, StripedProfile};
use crate::alphabet::CANONICAL;
use crate::error::{Error, Result};
use crate::fasta::{write_fasta, SequenceRecord, DEFAULT_WRAP};
use crate::golden::GoldenSet;
use crate::index::{build_index, load_target_db, save_index, TargetDb};
use crate::karlin::{evalue, GappedKarlinParams};
use crate::matrix::SubstitutionMatrix;
use crate::pipeline::{run_pipeline, OutputKind, PipelineConfig};
use crate::profile::{profile_golden_set, write_ascii_pssm, ProfileConfig};

pub const MIN_SEQ_LEN: usize = 10;
pub const SCALING_CSV_HEADER: &str = "batch_size,pipeline_ms,baseline_ms,pipeline_ratio,baseline_ratio,shape";
pub const LENGTHS_CSV_HEADER: &str = "query_len,pipeline_ms,baseline_ms,speedup";

/// Tag in planted homolog headers naming the query they were derived from.
pub const PLANT_TAG: &str = "planted_from=";

pub struct ResidueSampler {
    all: WeightedIndex<f64>,
    background: [f64; CANONICAL],
}

impl ResidueSampler {
    pub fn new(matrix: &SubstitutionMatrix) -> Self {
        let background = *matrix.background();
        Self {
            all: WeightedIndex::new(background).expect("background is a distribution"),
            background,
        }
    }

    pub fn residue(&self, rng: &mut impl Rng) -> u8 {
        self.all.sample(rng) as u8
    }

    pub fn sequence(&self, rng: &mut impl Rng, len: usize) -> Vec<u8> {
        (0..len).map(|_| self.residue(rng)).collect()
    }

    /// A residue other than `r`, drawn from the background restricted to
    /// the other 19.
    pub fn substitute(&self, rng: &mut impl Rng, r: u8) -> u8 {
        let total: f64 = 1.0 - self.background.get(r as usize).copied().unwrap_or(0.0);
        let mut x = rng.gen::<f64>() * total;
        for (i, &p) in self.background.iter().enumerate() {
            if i == r as usize {
                continue;
            }
            if x < p {
                return i as u8;
            }
            x -= p;
        }
        (0..CANONICAL as u8).rev().find(|&i| i != r).unwrap()
    }

    /// Independent point mutations: each position changes with probability
    /// `rate`, always to a different residue.
    pub fn mutate(&self, rng: &mut impl Rng, seq: &[u8], rate: f64) -> Vec<u8> {
        seq.iter()
            .map(|&r| if rng.gen_bool(rate) { self.substitute(rng, r) } else { r })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchData {
    pub db: Vec<SequenceRecord>,
    /// Query ancestors; every one has `homolog_count` mutated copies in the
    /// database.
    pub queries: Vec<SequenceRecord>,
}

fn draw_len(rng: &mut impl Rng, dist: &Normal<f64>) -> usize {
    (dist.sample(rng).round().max(MIN_SEQ_LEN as f64)) as usize
}

pub fn generate_db(s: &BenchScenario, matrix: &SubstitutionMatrix) -> Result<BenchData> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let sampler = ResidueSampler::new(matrix);
    let lens = Normal::new(s.mean_len as f64, s.len_sd).map_err(|e| Error::Config(e.to_string()))?;

    let queries: Vec<SequenceRecord> = (0..s.query_count)
        .map(|q| {
            let len = draw_len(&mut rng, &lens);
            SequenceRecord::new(format!("q{q}"), sampler.sequence(&mut rng, len))
        })
        .collect();
    let planted = s.query_count * s.homolog_count;
    let mut db = Vec::with_capacity(s.db_size);
    for (q, query) in queries.iter().enumerate() {
        for h in 0..s.homolog_count {
            let seq = sampler.mutate(&mut rng, &query.residues, s.mutation_rate);
            db.push(SequenceRecord::new(format!("plant{q}_{h} {PLANT_TAG}q{q}"), seq));
        }
    }
    for i in 0..s.db_size - planted {
        let len = draw_len(&mut rng, &lens);
        db.push(SequenceRecord::new(format!("bg{i}"), sampler.sequence(&mut rng, len)));
    }
    db.shuffle(&mut rng);
    Ok(BenchData { db, queries })
}

pub fn fasta_bytes(records: &[SequenceRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_fasta(&mut buf, records, DEFAULT_WRAP).expect("writing to memory");
    buf
}

/// Writes `db.fasta` and `queries.fasta` under `dir` and builds the index
/// in `dir/index`.
pub fn prepare(s: &BenchScenario, matrix: &SubstitutionMatrix, dir: &Path) -> Result<BenchData> {
    let data = generate_db(s, matrix)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let db_fasta = fasta_bytes(&data.db);
    std::fs::write(dir.join("db.fasta"), &db_fasta).map_err(|e| Error::file(dir.join("db.fasta"), e))?;
    std::fs::write(dir.join("queries.fasta"), fasta_bytes(&data.queries))
        .map_err(|e| Error::file(dir.join("queries.fasta"), e))?;
    let (db, idx) = build_index(db_fasta.as_slice(), s.k)?;
    save_index(&db, &idx, &dir.join("index"))?;
    Ok(data)
}

/// Full-scan stand-in for an unfiltered search: every query is scored
/// against every target, hits within `inclusion_evalue` are traced back,
/// capped at `max_seqs`, and profiled. Queries run one after another.
pub struct Baseline<'a> {
    pub db: &'a TargetDb,
    pub matrix: &'a SubstitutionMatrix,
    pub gaps: GappedKarlinParams,
    pub max_seqs: usize,
    pub inclusion_evalue: f64,
}

impl Baseline<'_> {
    /// Golden set and ASCII PSSM for one query.
    pub fn run_query(&self, query: &SequenceRecord) -> Result<(GoldenSet, Vec<u8>)> {
        let profile = QueryProfile::from_matrix(&query.residues, self.matrix);
        let striped = StripedProfile::new(&profile);
        let m = query.len() as u64;
        let n = self.db.total_residues();
        let mut hits: Vec<(f64, u32)> = (0..self.db.seq_count() as u32)
            .filter_map(|t| {
                let s = score_only(&striped, self.db.sequence(t), &self.gaps);
                let e = evalue(s, m, n, &self.gaps);
                (s > 0 && e <= self.inclusion_evalue).then_some((e, t))
            })
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.truncate(self.max_seqs);

        let mut set = GoldenSet::only_query(query.id(), query.clone());
        for &(_, t) in &hits {
            if align_profile(&profile, self.db.sequence(t), &self.gaps, None).is_some()
                && self.db.id_token(t) != query.id()
                && set.members.len() < self.max_seqs
            {
                set.members.push(self.db.record(t));
            }
        }
        let cfg = ProfileConfig {
            inclusion_evalue: self.inclusion_evalue,
            ..Default::default()
        };
        let pssm = profile_golden_set(&set, self.matrix, &self.gaps, &cfg)?;
        let mut ascii = Vec::new();
        write_ascii_pssm(&pssm, &mut ascii)?;
        Ok((set, ascii))
    }

    pub fn run_batch(&self, queries: &[SequenceRecord]) -> Result<Vec<GoldenSet>> {
        queries.iter().map(|q| self.run_query(q).map(|(s, _)| s)).collect()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median wall-clock milliseconds of `repeats` runs.
pub fn time_median(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(median(samples))
}

/// Runs the full pipeline once on `queries` in a scratch directory and
/// returns the golden sets it produced.
pub fn pipeline_once(
    s: &BenchScenario,
    index_dir: &Path,
    queries: &[SequenceRecord],
    scratch: &Path,
) -> Result<Vec<GoldenSet>> {
    let run_dir = tempfile::Builder::new().prefix("run-").tempdir_in(scratch)?;
    let query_path = run_dir.path().join("queries.fasta");
    std::fs::write(&query_path, fasta_bytes(queries)).map_err(|e| Error::file(&query_path, e))?;
    let cfg = PipelineConfig {
        index_dir: index_dir.to_path_buf(),
        query_path,
        workdir: run_dir.path().join("work"),
        k: s.k,
        workers: s.workers,
        max_seqs: s.max_seqs,
        outputs: [OutputKind::AsciiPssm].into(),
        ..Default::default()
    };
    run_pipeline(&cfg)?;
    crate::golden::query_tokens(queries)
        .into_iter()
        .zip(queries.iter().cloned())
        .map(|(token, q)| {
            let path = cfg.workdir.join(&token).join(crate::golden::GOLDEN_FILE);
            let members = crate::fasta::read_fasta_file(&path)?.records;
            Ok(GoldenSet {
                token,
                query: q,
                members,
            })
        })
        .collect()
}

/// Fraction of planted homologs found in the golden sets:
/// `(found, planted)`.
pub fn planted_recall(sets: &[GoldenSet], homolog_count: usize) -> (usize, usize) {
    let mut found = 0;
    for set in sets {
        let tag = format!("{PLANT_TAG}{}", set.query.id());
        found += set.members[1..]
            .iter()
            .filter(|m| m.header.split_whitespace().any(|w| w == tag))
            .count();
    }
    (found, sets.len() * homolog_count)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub batch_size: usize,
    pub pipeline_ms: f64,
    pub baseline_ms: f64,
    pub pipeline_ratio: f64,
    pub baseline_ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    /// Recall of planted homologs in the pipeline's golden sets for the
    /// largest batch.
    pub recall: (usize, usize),
}

impl ScalingResult {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SCALING_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.1},{:.1},{:.3},{:.3},{}",
                r.batch_size,
                r.pipeline_ms,
                r.baseline_ms,
                r.pipeline_ratio,
                r.baseline_ratio,
                if r.pass { "pass" } else { "warn" }
            );
        }
        s
    }
}

/// Largest pipeline growth across the batch sweep still counted as flat.
pub const PIPELINE_RATIO_LIMIT: f64 = 8.0;
/// Baseline growth must reach this fraction of the batch-size growth.
pub const BASELINE_LINEARITY: f64 = 0.5;

fn check_index(index_dir: &Path, data: &BenchData) -> Result<TargetDb> {
    let db = load_target_db(index_dir)?;
    if db.content_hash() != TargetDb::from_records(&data.db).content_hash() {
        return Err(Error::IndexDbMismatch);
    }
    Ok(db)
}

fn baseline_for<'a>(s: &BenchScenario, db: &'a TargetDb, matrix: &'a SubstitutionMatrix) -> Baseline<'a> {
    Baseline {
        db,
        matrix,
        gaps: GappedKarlinParams::default(),
        max_seqs: s.max_seqs,
        inclusion_evalue: crate::profile::DEFAULT_INCLUSION_EVALUE,
    }
}

/// Times pipeline and baseline for every batch size. `progress` receives
/// each row as soon as it is measured.
pub fn run_scaling(
    s: &BenchScenario,
    matrix: &SubstitutionMatrix,
    index_dir: &Path,
    mut progress: impl FnMut(&ScalingRow),
) -> Result<ScalingResult> {
    let data = generate_db(s, matrix)?;
    let db = check_index(index_dir, &data)?;
    let baseline = baseline_for(s, &db, matrix);
    let scratch = tempfile::Builder::new().prefix("profgen-bench-").tempdir()?;
    let mut batches = s.batch_sizes.clone();
    batches.sort_unstable();
    batches.dedup();
    let b0 = batches[0];

    let mut rows: Vec<ScalingRow> = Vec::new();
    let mut recall = (0, 0);
    for &b in &batches {
        let queries = &data.queries[..b];
        let mut last = Vec::new();
        let pipeline_ms = time_median(s.repeats, || {
            last = pipeline_once(s, index_dir, queries, scratch.path())?;
            Ok(())
        })?;
        recall = planted_recall(&last, s.homolog_count);
        let baseline_ms = time_median(s.repeats, || baseline.run_batch(queries).map(|_| ()))?;
        let (p0, q0) = rows.first().map_or((pipeline_ms, baseline_ms), |r| (r.pipeline_ms, r.baseline_ms));
        let pipeline_ratio = pipeline_ms / p0;
        let baseline_ratio = baseline_ms / q0;
        let row = ScalingRow {
            batch_size: b,
            pipeline_ms,
            baseline_ms,
            pipeline_ratio,
            baseline_ratio,
            pass: baseline_ratio >= BASELINE_LINEARITY * (b as f64 / b0 as f64) && pipeline_ratio <= PIPELINE_RATIO_LIMIT,
        };
        progress(&row);
        rows.push(row);
    }
    Ok(ScalingResult { rows, recall })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LengthRow {
    pub query_len: usize,
    pub pipeline_ms: f64,
    pub baseline_ms: f64,
}

pub fn lengths_csv(rows: &[LengthRow]) -> String {
    let mut s = format!("{LENGTHS_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.1},{:.1},{:.2}",
            r.query_len,
            r.pipeline_ms,
            r.baseline_ms,
            r.baseline_ms / r.pipeline_ms
        );
    }
    s
}

/// Times one random query of each length in `s.lengths`.
pub fn run_length_sweep(
    s: &BenchScenario,
    matrix: &SubstitutionMatrix,
    index_dir: &Path,
    mut progress: impl FnMut(&LengthRow),
) -> Result<Vec<LengthRow>> {
    let data = generate_db(s, matrix)?;
    let db = check_index(index_dir, &data)?;
    let baseline = baseline_for(s, &db, matrix);
    let scratch = tempfile::Builder::new().prefix("profgen-bench-").tempdir()?;
    let sampler = ResidueSampler::new(matrix);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x5eed_1e57);
    let mut rows = Vec::new();
    for &len in &s.lengths {
        let query = [SequenceRecord::new(format!("len{len}"), sampler.sequence(&mut rng, len))];
        let pipeline_ms = time_median(s.repeats, || pipeline_once(s, index_dir, &query, scratch.path()).map(|_| ()))?;
        let baseline_ms = time_median(s.repeats, || baseline.run_batch(&query).map(|_| ()))?;
        let row = LengthRow {
            query_len: len,
            pipeline_ms,
            baseline_ms,
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Spearman rank correlation; ties get average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Writes `contents` to `path`, or to stdout for `-`.
pub fn write_output(path: &Path, contents: &str) -> Result<()> {
    if path.as_os_str() == "-" {
        std::io::stdout().write_all(contents.as_bytes())?;
        Ok(())
    } else {
        std::fs::write(path, contents).map_err(|e| Error::file(path, e))
    }
}
