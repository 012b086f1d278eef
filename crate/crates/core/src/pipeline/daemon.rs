//! Resident-index server over a Unix stream socket.
//!
//! Request frame: u32 length (bytes that follow), u8 type, then for a
//! search a u32 config length, `key=value` config lines and the FASTA
//! payload. Response frame: u32 length, u8 status, then for every file
//! u32 name length, name, u64 content length, content. All integers are
//! little-endian. Requests are served one at a time.

use std::fs;
use std::io::{self, Read, Write};
use std::os::unix::fs::FileTypeExt;
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::Path;
use std::time::Duration;

use super::{collect_tree, run_with_index, PipelineConfig, SearchIndex};
use crate::error::{Error, Result};
use crate::fasta::parse_fasta;

pub const MSG_SEARCH: u8 = 1;
pub const MSG_SHUTDOWN: u8 = 255;

pub const STATUS_OK: u8 = 0;
pub const STATUS_PIPELINE_ERROR: u8 = 1;
pub const STATUS_MALFORMED: u8 = 2;
pub const STATUS_OVERSIZED: u8 = 3;

pub const DEFAULT_MAX_FRAME: usize = 256 << 20;

/// File name carrying the message of a non-zero status.
const ERROR_ENTRY: &str = "error";

#[derive(Clone, Debug)]
pub struct DaemonOptions {
    /// Settings every request starts from before its own overrides.
    pub base: PipelineConfig,
    pub max_frame: usize,
    pub read_timeout: Option<Duration>,
}

impl Default for DaemonOptions {
    fn default() -> Self {
        Self {
            base: PipelineConfig::default(),
            max_frame: DEFAULT_MAX_FRAME,
            read_timeout: Some(Duration::from_secs(60)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DaemonResponse {
    pub status: u8,
    /// `(relative path, content)`, sorted by path.
    pub files: Vec<(String, Vec<u8>)>,
}

impl DaemonResponse {
    fn error(status: u8, message: impl Into<String>) -> Self {
        Self {
            status,
            files: vec![(ERROR_ENTRY.into(), message.into().into_bytes())],
        }
    }

    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    fn encode(&self) -> Vec<u8> {
        let mut body = vec![self.status];
        for (name, content) in &self.files {
            body.extend_from_slice(&(name.len() as u32).to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            body.extend_from_slice(&(content.len() as u64).to_le_bytes());
            body.extend_from_slice(content);
        }
        let mut frame = (body.len() as u32).to_le_bytes().to_vec();
        frame.extend_from_slice(&body);
        frame
    }

    fn decode(body: &[u8]) -> Result<Self> {
        let bad = || Error::Protocol("truncated response".into());
        let (&status, mut rest) = body.split_first().ok_or_else(bad)?;
        let mut files = Vec::new();
        while !rest.is_empty() {
            let (len, r) = rest.split_at_checked(4).ok_or_else(bad)?;
            let n = u32::from_le_bytes(len.try_into().unwrap()) as usize;
            let (name, r) = r.split_at_checked(n).ok_or_else(bad)?;
            let (len, r) = r.split_at_checked(8).ok_or_else(bad)?;
            let n = usize::try_from(u64::from_le_bytes(len.try_into().unwrap())).map_err(|_| bad())?;
            let (content, r) = r.split_at_checked(n).ok_or_else(bad)?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| Error::Protocol("non UTF-8 file name".into()))?;
            files.push((name, content.to_vec()));
            rest = r;
        }
        Ok(Self { status, files })
    }
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn bind(socket: &Path) -> Result<UnixListener> {
    if let Ok(meta) = fs::symlink_metadata(socket) {
        if !meta.file_type().is_socket() {
            return Err(Error::Config(format!("{} exists and is not a socket", socket.display())));
        }
        if UnixStream::connect(socket).is_ok() {
            return Err(Error::Config(format!("a daemon is already listening on {}", socket.display())));
        }
        fs::remove_file(socket).map_err(|e| Error::file(socket, e))?;
    }
    UnixListener::bind(socket).map_err(|e| Error::file(socket, e))
}

enum Outcome {
    Continue,
    Shutdown,
}

fn search(index: &SearchIndex, opts: &DaemonOptions, payload: &[u8]) -> DaemonResponse {
    let Some((len, rest)) = payload.split_at_checked(4) else {
        return DaemonResponse::error(STATUS_MALFORMED, "missing config length");
    };
    let n = u32::from_le_bytes(len.try_into().unwrap()) as usize;
    let Some((config, fasta)) = rest.split_at_checked(n) else {
        return DaemonResponse::error(STATUS_MALFORMED, "config block exceeds frame");
    };
    let Ok(config) = std::str::from_utf8(config) else {
        return DaemonResponse::error(STATUS_MALFORMED, "config block is not UTF-8");
    };

    let run = || -> Result<DaemonResponse> {
        let mut cfg = opts.base.clone();
        cfg.apply_lines(config)?;
        let batch = parse_fasta(fasta)?;
        let workdir = tempfile::Builder::new().prefix("profgen-request-").tempdir()?;
        cfg.workdir = workdir.path().to_path_buf();
        cfg.out_alignments = None;
        run_with_index(index, batch, &cfg, 0)?;
        let mut files = Vec::new();
        for name in collect_tree(workdir.path())? {
            let path = workdir.path().join(&name);
            files.push((name, fs::read(&path).map_err(|e| Error::file(&path, e))?));
        }
        Ok(DaemonResponse {
            status: STATUS_OK,
            files,
        })
    };
    run().unwrap_or_else(|e| DaemonResponse::error(STATUS_PIPELINE_ERROR, e.to_string()))
}

fn serve_one(stream: &mut UnixStream, index: &SearchIndex, opts: &DaemonOptions) -> io::Result<Outcome> {
    stream.set_read_timeout(opts.read_timeout)?;
    let len = read_u32(stream)? as usize;
    if len > opts.max_frame {
        let msg = format!("frame of {len} bytes exceeds the {} byte cap", opts.max_frame);
        stream.write_all(&DaemonResponse::error(STATUS_OVERSIZED, msg).encode())?;
        return Ok(Outcome::Continue);
    }
    let mut frame = vec![0u8; len];
    stream.read_exact(&mut frame)?;
    let (resp, outcome) = match frame.split_first() {
        Some((&MSG_SEARCH, payload)) => (search(index, opts, payload), Outcome::Continue),
        Some((&MSG_SHUTDOWN, _)) => (
            DaemonResponse {
                status: STATUS_OK,
                files: vec![],
            },
            Outcome::Shutdown,
        ),
        Some((&t, _)) => (
            DaemonResponse::error(STATUS_MALFORMED, format!("unknown message type {t}")),
            Outcome::Continue,
        ),
        None => (DaemonResponse::error(STATUS_MALFORMED, "empty frame"), Outcome::Continue),
    };
    stream.write_all(&resp.encode())?;
    stream.flush()?;
    Ok(outcome)
}

/// Loads the index once and answers requests until a shutdown frame
/// arrives; the socket file is removed on exit. `on_ready` runs once the
/// socket is accepting connections.
pub fn daemon_serve(index_dir: &Path, socket: &Path, opts: &DaemonOptions, on_ready: impl FnOnce()) -> Result<()> {
    let index = SearchIndex::load(index_dir)?;
    let listener = bind(socket)?;
    on_ready();
    let result = (|| {
        for stream in listener.incoming() {
            let mut stream = stream?;
            // a broken client only loses its own connection
            if let Ok(Outcome::Shutdown) = serve_one(&mut stream, &index, opts) {
                break;
            }
        }
        Ok(())
    })();
    let _ = fs::remove_file(socket);
    result
}

fn round_trip(socket: &Path, frame: &[u8]) -> Result<DaemonResponse> {
    let mut stream = UnixStream::connect(socket).map_err(|e| Error::file(socket, e))?;
    stream.write_all(frame)?;
    stream.flush()?;
    let len = read_u32(&mut stream).map_err(|e| Error::Protocol(format!("no response: {e}")))? as usize;
    let mut body = vec![0u8; len];
    stream
        .read_exact(&mut body)
        .map_err(|e| Error::Protocol(format!("truncated response: {e}")))?;
    DaemonResponse::decode(&body)
}

/// Sends one search request. Non-zero statuses come back as
/// [`Error::Remote`].
pub fn daemon_query(socket: &Path, fasta: &[u8], overrides: &[(String, String)]) -> Result<DaemonResponse> {
    let config: String = overrides.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let mut body = vec![MSG_SEARCH];
    body.extend_from_slice(&(config.len() as u32).to_le_bytes());
    body.extend_from_slice(config.as_bytes());
    body.extend_from_slice(fasta);
    let len = u32::try_from(body.len()).map_err(|_| Error::Protocol("request too large".into()))?;
    let mut frame = len.to_le_bytes().to_vec();
    frame.extend_from_slice(&body);
    let resp = round_trip(socket, &frame)?;
    if resp.status != STATUS_OK {
        let message = resp.file(ERROR_ENTRY).map(String::from_utf8_lossy).unwrap_or_default().into_owned();
        return Err(Error::Remote {
            status: resp.status,
            message,
        });
    }
    Ok(resp)
}

pub fn daemon_shutdown(socket: &Path) -> Result<()> {
    let mut frame = 1u32.to_le_bytes().to_vec();
    frame.push(MSG_SHUTDOWN);
    round_trip(socket, &frame).map(|_| ())
}

/// Raw frame exchange, for protocol tests.
#[doc(hidden)]
pub fn daemon_raw(socket: &Path, frame: &[u8]) -> Result<DaemonResponse> {
    round_trip(socket, frame)
}
