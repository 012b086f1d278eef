//! End-to-end batch execution: prefilter, align, convertalis, parsimus,
//! profile. Each stage fans out over queries on a private rayon pool and
//! joins before the next one starts.

mod config;
mod daemon;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{default_workers, OutputKind, PipelineConfig, WORKERS_ENV};
pub use daemon::{
    daemon_query, daemon_raw, daemon_serve, daemon_shutdown, DaemonOptions, DaemonResponse, DEFAULT_MAX_FRAME, MSG_SEARCH,
    MSG_SHUTDOWN, STATUS_MALFORMED, STATUS_OK, STATUS_OVERSIZED, STATUS_PIPELINE_ERROR,
};

use crate::align::{align_hits, write_alignment_row, Alignment, ALIGNMENT_TSV_HEADER};
use crate::error::{Error, Result};
use crate::fasta::{read_fasta_file, FastaBatch};
use crate::golden::{convertalis, parsimus, query_tokens, GOLDEN_FILE, QUERY_FILE};
use crate::index::{load_index, KmerIndex, TargetDb};
use crate::matrix::load_matrix;
use crate::prefilter::{prefilter_query, PrefilterConfig, PrefilterHit};
use crate::profile::{profile_golden_set, write_ascii_pssm, write_binary_pssm, ExternalJob, ExternalProfiler};
use crate::tuple::{read_tuples, write_tuples, DEFAULT_TUPLE_FILE};

pub const REPORT_FILE: &str = "report.txt";
pub const ALIGNMENTS_FILE: &str = "alignments.tsv";
pub const PSSM_BIN_FILE: &str = "pssm.bin";
pub const PSSM_ASCII_FILE: &str = "pssm.txt";

/// A loaded target database and its k-mer index.
pub struct SearchIndex {
    pub db: TargetDb,
    pub idx: KmerIndex,
}

impl SearchIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let (db, idx) = load_index(dir)?;
        Ok(Self { db, idx })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryReport {
    pub token: String,
    pub length: usize,
    pub hits: usize,
    pub aligned: usize,
    pub golden_size: usize,
    pub profile_emitted: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunReport {
    pub workers: usize,
    pub load_index_ms: u64,
    pub prefilter_ms: u64,
    pub align_ms: u64,
    pub convertalis_ms: u64,
    pub parsimus_ms: u64,
    pub profile_ms: u64,
    pub total_ms: u64,
    pub unknown_residues: usize,
    pub duplicates_dropped: usize,
    pub truncated_members: usize,
    pub queries: Vec<QueryReport>,
    pub warnings: Vec<String>,
}

impl RunReport {
    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "queries={}", self.queries.len());
        for (k, v) in [
            ("workers", self.workers as u64),
            ("load_index_ms", self.load_index_ms),
            ("prefilter_ms", self.prefilter_ms),
            ("align_ms", self.align_ms),
            ("convertalis_ms", self.convertalis_ms),
            ("parsimus_ms", self.parsimus_ms),
            ("profile_ms", self.profile_ms),
            ("total_ms", self.total_ms),
            ("unknown_residues", self.unknown_residues as u64),
            ("duplicates_dropped", self.duplicates_dropped as u64),
            ("truncated_members", self.truncated_members as u64),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        for (i, q) in self.queries.iter().enumerate() {
            let _ = writeln!(s, "query.{i}.token={}", q.token);
            let _ = writeln!(s, "query.{i}.length={}", q.length);
            let _ = writeln!(s, "query.{i}.hits={}", q.hits);
            let _ = writeln!(s, "query.{i}.aligned={}", q.aligned);
            let _ = writeln!(s, "query.{i}.golden_size={}", q.golden_size);
            let _ = writeln!(s, "query.{i}.profile_emitted={}", q.profile_emitted as u8);
        }
        for (i, w) in self.warnings.iter().enumerate() {
            let _ = writeln!(s, "warning.{i}={}", w.replace('\n', " "));
        }
        s
    }
}

fn ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

fn stage<'a>(stage: &'static str, query: &'a str) -> impl FnOnce(Error) -> Error + 'a {
    move |e| Error::Stage {
        stage,
        query: query.to_string(),
        source: Box::new(e),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::file(path, e))?))
}

/// Loads the index and queries named by `cfg`, runs every stage and writes
/// `report.txt`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let index = SearchIndex::load(&cfg.index_dir)?;
    let load_ms = ms(start);
    let batch = read_fasta_file(&cfg.query_path)?;
    run_with_index(&index, batch, cfg, load_ms)
}

/// Runs every stage against an already loaded index. `cfg.index_dir` and
/// `cfg.query_path` are ignored.
pub fn run_with_index(
    index: &SearchIndex,
    batch: FastaBatch,
    cfg: &PipelineConfig,
    load_index_ms: u64,
) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    if batch.records.is_empty() {
        return Err(Error::EmptyQueries);
    }
    if index.idx.k() != cfg.k {
        return Err(Error::KMismatch {
            found: index.idx.k(),
            expected: cfg.k,
        });
    }
    let matrix = load_matrix(&cfg.matrix)?;
    let gaps = cfg.gapped_params(&matrix)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    fs::create_dir_all(&cfg.workdir).map_err(|e| Error::file(&cfg.workdir, e))?;

    let queries = batch.records;
    let tokens = query_tokens(&queries);
    let mut report = RunReport {
        workers: cfg.workers,
        load_index_ms,
        unknown_residues: batch.unknown_residues,
        queries: queries
            .iter()
            .zip(&tokens)
            .map(|(q, t)| QueryReport {
                token: t.clone(),
                length: q.len(),
                ..Default::default()
            })
            .collect(),
        ..Default::default()
    };
    if batch.unknown_residues > 0 {
        report.warnings.push(format!(
            "{} unknown residue letters in the queries were read as X",
            batch.unknown_residues
        ));
    }

    let t = Instant::now();
    let pcfg = PrefilterConfig {
        max_seqs: cfg.max_seqs,
        min_ungapped_score: cfg.min_ungapped_score,
        similar_kmer_threshold: cfg.similar_kmer_threshold,
    };
    let prefiltered: Vec<Result<Vec<PrefilterHit>>> = pool.install(|| {
        queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| prefilter_query(i, q, &index.db, &index.idx, &matrix, &pcfg))
            .collect()
    });
    let mut hits = Vec::with_capacity(queries.len());
    for (i, r) in prefiltered.into_iter().enumerate() {
        match r {
            Ok(h) => hits.push(h),
            Err(e @ Error::QueryTooShort { .. }) => {
                report.warnings.push(format!("{e}; emitting a query-only profile"));
                hits.push(Vec::new());
            }
            Err(e) => return Err(stage("prefilter", queries[i].id())(e)),
        }
        report.queries[i].hits = hits[i].len();
    }
    report.prefilter_ms = ms(t);

    let t = Instant::now();
    let db_residues = index.db.total_residues();
    let aligned: Vec<Result<Vec<Alignment>>> = pool.install(|| {
        queries
            .par_iter()
            .zip(&hits)
            .enumerate()
            .map(|(i, (q, h))| {
                align_hits(i, &q.residues, h, &index.db, &matrix, &gaps, db_residues, cfg.band_width)
                    .map_err(stage("align", q.id()))
            })
            .collect()
    });
    let alignments: Vec<Vec<Alignment>> = aligned.into_iter().collect::<Result<_>>()?;
    for (r, a) in report.queries.iter_mut().zip(&alignments) {
        r.aligned = a.len();
    }
    report.align_ms = ms(t);

    if let Some(path) = &cfg.out_alignments {
        let mut out = create(path)?;
        writeln!(out, "{ALIGNMENT_TSV_HEADER}")?;
        for (q, group) in queries.iter().zip(&alignments) {
            for a in group {
                write_alignment_row(&mut out, q.id(), index.db.id_token(a.target_id), a)?;
            }
        }
        out.flush()?;
    }

    let t = Instant::now();
    let tuples = convertalis(&alignments, &index.db, &queries).map_err(stage("convertalis", "*"))?;
    let tuple_path = cfg.workdir.join(DEFAULT_TUPLE_FILE);
    let mut out = create(&tuple_path)?;
    write_tuples(&mut out, &tuples).map_err(stage("convertalis", "*"))?;
    out.flush()?;
    drop(out);
    report.convertalis_ms = ms(t);

    let t = Instant::now();
    let file = fs::File::open(&tuple_path).map_err(|e| Error::file(&tuple_path, e))?;
    let tuples = read_tuples(BufReader::new(file)).map_err(stage("parsimus", "*"))?;
    let parsed = parsimus(&tuples, &queries, cfg.max_seqs, &cfg.workdir).map_err(stage("parsimus", "*"))?;
    report.duplicates_dropped = parsed.duplicates_dropped;
    report.truncated_members = parsed.truncated;
    if parsed.duplicates_dropped > 0 {
        report
            .warnings
            .push(format!("{} duplicate golden members dropped", parsed.duplicates_dropped));
    }
    for (r, set) in report.queries.iter_mut().zip(&parsed.sets) {
        r.golden_size = set.members.len();
    }
    if cfg.outputs.contains(&OutputKind::Alignments) {
        for ((q, token), group) in queries.iter().zip(&tokens).zip(&alignments) {
            let mut out = create(&cfg.workdir.join(token).join(ALIGNMENTS_FILE))?;
            writeln!(out, "{ALIGNMENT_TSV_HEADER}")?;
            for a in group {
                write_alignment_row(&mut out, q.id(), index.db.id_token(a.target_id), a)?;
            }
            out.flush()?;
        }
    }
    report.parsimus_ms = ms(t);

    let t = Instant::now();
    let want_bin = cfg.outputs.contains(&OutputKind::Pssm);
    let want_ascii = cfg.outputs.contains(&OutputKind::AsciiPssm);
    let external = cfg.external_profiler.as_deref().map(ExternalProfiler::new).transpose()?;
    let profiled: Vec<Result<bool>> = if !want_bin && !want_ascii {
        parsed.sets.iter().map(|_| Ok(false)).collect()
    } else {
        pool.install(|| {
            parsed
                .sets
                .par_iter()
                .map(|set| {
                    let dir = cfg.workdir.join(&set.token);
                    let bin = dir.join(PSSM_BIN_FILE);
                    let ascii = dir.join(PSSM_ASCII_FILE);
                    if let Some(ext) = &external {
                        ext.run(&ExternalJob {
                            query: &dir.join(QUERY_FILE),
                            db: &dir.join(GOLDEN_FILE),
                            out_pssm: &bin,
                            out_ascii: &ascii,
                            evalue: cfg.inclusion_evalue,
                        })?;
                        return Ok(true);
                    }
                    let pssm = profile_golden_set(set, &matrix, &gaps, &cfg.profile_config())?;
                    if want_bin {
                        let mut out = create(&bin)?;
                        write_binary_pssm(&pssm, &mut out)?;
                        out.flush()?;
                    }
                    if want_ascii {
                        let mut out = create(&ascii)?;
                        write_ascii_pssm(&pssm, &mut out)?;
                        out.flush()?;
                    }
                    Ok(true)
                })
                .collect()
        })
    };
    let mut first_error = None;
    for (i, r) in profiled.into_iter().enumerate() {
        match r {
            Ok(emitted) => report.queries[i].profile_emitted = emitted,
            Err(e) => {
                report.warnings.push(format!("profile failed for {}: {e}", queries[i].id()));
                first_error.get_or_insert_with(|| stage("profile", queries[i].id())(e));
            }
        }
    }
    report.profile_ms = ms(t);
    report.total_ms = load_index_ms + ms(start);

    let mut out = create(&cfg.workdir.join(REPORT_FILE))?;
    out.write_all(report.to_text().as_bytes())?;
    out.flush()?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Relative paths (with `/` separators) of every regular file under `root`,
/// sorted.
pub fn collect_tree(root: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<String>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.insert(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out)?;
    Ok(out.into_iter().collect())
}
