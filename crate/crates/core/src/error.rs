use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("unknown matrix '{0}' (not built in and not a readable file)")]
    UnknownMatrix(String),

    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),

    #[error("matrix is not symmetric at ({0}, {1})")]
    AsymmetricMatrix(char, char),

    #[error("no positive lambda root for matrix '{0}'")]
    NoLambdaRoot(String),

    #[error("invalid gap parameters: {0}")]
    InvalidGaps(String),

    #[error("FASTA line {line}: {msg}")]
    Fasta { line: usize, msg: String },

    #[error("duplicate sequence identifier '{0}'")]
    DuplicateId(String),

    #[error("tuple line {line}: {msg}")]
    Tuple { line: usize, msg: String },

    #[error("k must be in [4, 7], got {0}")]
    KmerSize(usize),

    #[error("missing index file {}", .0.display())]
    MissingIndexFile(PathBuf),

    #[error("{file}: bad magic bytes")]
    BadMagic { file: String },

    #[error("{file}: format version {found} (expected {expected})")]
    VersionMismatch {
        file: String,
        found: u32,
        expected: u32,
    },

    #[error("{file}: content hash mismatch (file corrupted)")]
    HashMismatch { file: String },

    #[error("{file}: truncated or inconsistent file")]
    Truncated { file: String },

    #[error("index was built for a different target database")]
    IndexDbMismatch,

    #[error("index k={found} does not match configured k={expected}")]
    KMismatch { found: usize, expected: usize },

    #[error("query '{id}' has length {len}, shorter than k={k}")]
    QueryTooShort { id: String, len: usize, k: usize },

    #[error("diagonal {diagonal} out of bounds for lengths ({query_len}, {target_len})")]
    DiagonalOutOfBounds {
        diagonal: i64,
        query_len: usize,
        target_len: usize,
    },

    #[error("similar k-mer expansion too large ({0} k-mers)")]
    ExpansionTooLarge(u64),

    #[error("target id {0} does not exist in the database")]
    DanglingTarget(u32),

    #[error("query id {0} does not exist")]
    DanglingQuery(usize),

    #[error("tuple references unknown query '{0}'")]
    UnknownQuery(String),

    #[error("golden set is empty")]
    EmptyGoldenSet,

    #[error("query file contains no sequences")]
    EmptyQueries,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad PSSM file: {0}")]
    BadPssm(String),

    #[error("stage '{stage}' failed for query '{query}': {source}")]
    Stage {
        stage: &'static str,
        query: String,
        #[source]
        source: Box<Error>,
    },

    #[error("external profiler failed: {0}")]
    External(String),

    #[error("daemon protocol error: {0}")]
    Protocol(String),

    #[error("daemon returned status {status}: {message}")]
    Remote { status: u8, message: String },
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than internal faults.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::External(_))
    }
}
