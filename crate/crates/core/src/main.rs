use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use profgen::bench::{self, BenchScenario};
use profgen::error::{Error, Result};
use profgen::index::{build_index, save_index, DEFAULT_K};
use profgen::matrix::{builtin_names, load_matrix, SubstitutionMatrix};
use profgen::pipeline::{
    daemon_query, daemon_serve, run_pipeline, DaemonOptions, OutputKind, PipelineConfig, DEFAULT_MAX_FRAME,
    REPORT_FILE, WORKERS_ENV,
};

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "profgen", version, about = "Prefiltered homology search and PSSM generation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Target database indexing.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Search a query batch and write per-query profiles.
    Search(SearchArgs),
    /// Keep an index resident and serve searches on a Unix socket.
    Daemon(DaemonArgs),
    /// Send a query batch to a running daemon.
    Query(QueryArgs),
    /// Synthetic benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Built-in substitution matrices.
    #[command(subcommand)]
    Matrix(MatrixCmd),
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
}

/// Search settings shared by `search` and `daemon`.
#[derive(Args)]
struct Settings {
    #[arg(long)]
    max_seqs: Option<usize>,
    #[arg(long)]
    evalue: Option<f64>,
    #[arg(long)]
    min_ungapped_score: Option<i32>,
    #[arg(long)]
    similar_kmer_threshold: Option<i32>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated: alignments, pssm, ascii-pssm.
    #[arg(long)]
    out: Option<String>,
    /// Defaults to $PROFGEN_WORKERS, then the core count.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    gap_open: Option<i32>,
    #[arg(long)]
    gap_extend: Option<i32>,
    #[arg(long)]
    gapped_lambda: Option<f64>,
    #[arg(long)]
    gapped_k: Option<f64>,
    #[arg(long)]
    pseudocount_beta: Option<f64>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    band_width: Option<usize>,
    /// Command template with {query} {db} {out_pssm} {out_ascii} {evalue}.
    #[arg(long)]
    external_profiler: Option<String>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

impl Settings {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        macro_rules! copy {
            ($($f:ident => $g:ident),*) => {$(
                if let Some(v) = self.$f.clone() { cfg.$g = v; }
            )*};
        }
        copy!(max_seqs => max_seqs, evalue => inclusion_evalue, min_ungapped_score => min_ungapped_score,
              k => k, workers => workers, matrix => matrix, gap_open => gap_open, gap_extend => gap_extend,
              pseudocount_beta => beta, iterations => iterations);
        if let Some(out) = &self.out {
            cfg.outputs = OutputKind::parse_list(out)?;
        }
        cfg.gapped_lambda = self.gapped_lambda.or(cfg.gapped_lambda);
        cfg.gapped_k = self.gapped_k.or(cfg.gapped_k);
        cfg.similar_kmer_threshold = self.similar_kmer_threshold.or(cfg.similar_kmer_threshold);
        cfg.band_width = self.band_width.or(cfg.band_width);
        cfg.external_profiler = self.external_profiler.clone().or(cfg.external_profiler.take());
        cfg.apply_lines(&self.extra.join("\n"))?;
        cfg.validate()
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    workdir: PathBuf,
    /// Batch-wide search alignments as one TSV.
    #[arg(long)]
    out_alignments: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args)]
struct DaemonArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    socket: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_FRAME)]
    max_frame: usize,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    socket: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Where to write the returned files; without it the run report is
    /// printed.
    #[arg(long)]
    workdir: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Write the scenario's database and queries, and index them.
    Generate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Pipeline vs full-scan runtime across batch sizes.
    Scaling(BenchArgs),
    /// Pipeline vs full-scan runtime across single-query lengths.
    Lengths(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// CSV path, or `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    /// Existing index for the scenario; generated in a scratch directory
    /// when omitted.
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MatrixCmd {
    /// Print a matrix in its text format.
    Dump {
        #[arg(default_value = "BLOSUM62")]
        name: String,
    },
    List,
}

fn index_build(db: &Path, out: &Path, k: usize) -> Result<()> {
    let file = fs::File::open(db).map_err(|e| Error::File {
        path: db.to_path_buf(),
        source: e,
    })?;
    let (tdb, idx) = build_index(BufReader::new(file), k)?;
    save_index(&tdb, &idx, out)?;
    eprintln!(
        "indexed {} sequences ({} residues), {} postings, k={k}",
        tdb.seq_count(),
        tdb.total_residues(),
        idx.posting_count()
    );
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let mut cfg = PipelineConfig {
        index_dir: a.index,
        query_path: a.queries,
        workdir: a.workdir,
        out_alignments: a.out_alignments,
        ..Default::default()
    };
    a.settings.apply(&mut cfg)?;
    let report = run_pipeline(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("{} queries in {} ms", report.queries.len(), report.total_ms);
    Ok(())
}

fn daemon(a: DaemonArgs) -> Result<()> {
    let mut base = PipelineConfig::default();
    a.settings.apply(&mut base)?;
    let opts = DaemonOptions {
        base,
        max_frame: a.max_frame,
        ..Default::default()
    };
    daemon_serve(&a.index, &a.socket, &opts, || {
        eprintln!("listening on {}", a.socket.display());
    })
}

fn query(a: QueryArgs) -> Result<()> {
    let fasta = fs::read(&a.queries).map_err(|e| Error::File {
        path: a.queries.clone(),
        source: e,
    })?;
    let overrides = a
        .extra
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{kv}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let resp = daemon_query(&a.socket, &fasta, &overrides)?;
    match a.workdir {
        Some(dir) => {
            for (name, content) in &resp.files {
                let path = dir.join(name);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, content).map_err(|e| Error::File { path, source: e })?;
            }
        }
        None => std::io::stdout().write_all(resp.file(REPORT_FILE).unwrap_or_default())?,
    }
    Ok(())
}

fn bench_cmd(cmd: BenchCmd) -> Result<()> {
    let matrix = SubstitutionMatrix::blosum62();
    let (args, scaling) = match cmd {
        BenchCmd::Generate { scenario, out_dir } => {
            let s = BenchScenario::load(&scenario)?;
            bench::prepare(&s, &matrix, &out_dir)?;
            eprintln!("wrote {} (index in {})", out_dir.display(), out_dir.join("index").display());
            return Ok(());
        }
        BenchCmd::Scaling(a) => (a, true),
        BenchCmd::Lengths(a) => (a, false),
    };
    let s = BenchScenario::load(&args.scenario)?;
    let scratch;
    let index = match args.index {
        Some(dir) => dir,
        None => {
            scratch = tempfile::tempdir()?;
            bench::prepare(&s, &matrix, scratch.path())?;
            scratch.path().join("index")
        }
    };
    eprintln!("workers={} repeats={}", s.workers, s.repeats);
    let csv = if scaling {
        let result = bench::run_scaling(&s, &matrix, &index, |r| {
            eprintln!("batch {}: pipeline {:.1} ms, baseline {:.1} ms", r.batch_size, r.pipeline_ms, r.baseline_ms);
        })?;
        let (found, planted) = result.recall;
        eprintln!("planted homolog recall: {found}/{planted}");
        result.to_csv()
    } else {
        let rows = bench::run_length_sweep(&s, &matrix, &index, |r| {
            eprintln!("length {}: pipeline {:.1} ms, baseline {:.1} ms", r.query_len, r.pipeline_ms, r.baseline_ms);
        })?;
        bench::lengths_csv(&rows)
    };
    bench::write_output(&args.out, &csv)
}

fn matrix_cmd(cmd: MatrixCmd) -> Result<()> {
    match cmd {
        MatrixCmd::Dump { name } => print!("{}", load_matrix(&name)?.to_text()),
        MatrixCmd::List => builtin_names().iter().for_each(|n| println!("{n}")),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Index(IndexCmd::Build { db, out, k }) => index_build(&db, &out, k),
        Command::Search(a) => search(a),
        Command::Daemon(a) => daemon(a),
        Command::Query(a) => query(a),
        Command::Bench(c) => bench_cmd(c),
        Command::Matrix(c) => matrix_cmd(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_INTERNAL })
        }
    }
}
