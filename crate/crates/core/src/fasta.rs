//! Streaming FASTA reading and writing.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::alphabet::{self, index_to_letter};
use crate::error::{Error, Result};

pub const DEFAULT_WRAP: usize = 60;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceRecord {
    /// Everything after `>` on the header line.
    pub header: String,
    /// Residue indices, see [`crate::alphabet`].
    pub residues: Vec<u8>,
}

impl SequenceRecord {
    pub fn new(header: impl Into<String>, residues: Vec<u8>) -> Self {
        Self {
            header: header.into(),
            residues,
        }
    }

    /// Convenience constructor from letters; unknown letters become `X`.
    pub fn from_letters(header: impl Into<String>, letters: &str) -> Self {
        Self::new(header, alphabet::encode(letters.as_bytes()).0)
    }

    /// First whitespace-delimited token of the header.
    pub fn id(&self) -> &str {
        header_token(&self.header)
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn sequence_string(&self) -> String {
        alphabet::decode(&self.residues)
    }
}

pub fn header_token(header: &str) -> &str {
    header.split_whitespace().next().unwrap_or("")
}

/// Record-at-a-time FASTA reader. Memory use is bounded by the largest
/// record. Duplicate identifiers are not checked here; see [`parse_fasta`].
pub struct FastaReader<R> {
    inner: R,
    line: Vec<u8>,
    line_no: usize,
    pending_header: Option<(String, usize)>,
    unknown: usize,
    done: bool,
}

impl<R: BufRead> FastaReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: Vec::new(),
            line_no: 0,
            pending_header: None,
            unknown: 0,
            done: false,
        }
    }

    /// Residue letters replaced by `X` so far.
    pub fn unknown_residues(&self) -> usize {
        self.unknown
    }

    fn read_line(&mut self) -> Result<bool> {
        self.line.clear();
        let n = self.inner.read_until(b'\n', &mut self.line)?;
        if n == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        while matches!(self.line.last(), Some(b'\n' | b'\r')) {
            self.line.pop();
        }
        Ok(true)
    }

    fn parse_header(&self) -> Result<String> {
        let text = std::str::from_utf8(&self.line[1..]).map_err(|_| Error::Fasta {
            line: self.line_no,
            msg: "header is not valid UTF-8".into(),
        })?;
        let text = text.trim_end();
        if header_token(text).is_empty() {
            return Err(Error::Fasta {
                line: self.line_no,
                msg: "empty identifier".into(),
            });
        }
        Ok(text.to_string())
    }

    fn next_record(&mut self) -> Result<Option<SequenceRecord>> {
        if self.done {
            return Ok(None);
        }
        let (header, header_line) = match self.pending_header.take() {
            Some(h) => h,
            None => loop {
                if !self.read_line()? {
                    self.done = true;
                    return Ok(None);
                }
                if self.line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                if self.line[0] != b'>' {
                    return Err(Error::Fasta {
                        line: self.line_no,
                        msg: "expected '>' at start of record".into(),
                    });
                }
                break (self.parse_header()?, self.line_no);
            },
        };

        let mut body = Vec::new();
        loop {
            if !self.read_line()? {
                self.done = true;
                break;
            }
            if self.line.first() == Some(&b'>') {
                self.pending_header = Some((self.parse_header()?, self.line_no));
                break;
            }
            body.extend(self.line.iter().filter(|c| !c.is_ascii_whitespace()));
        }
        if body.is_empty() {
            return Err(Error::Fasta {
                line: header_line,
                msg: format!("record '{}' has an empty sequence", header_token(&header)),
            });
        }
        let (residues, unknown) = alphabet::encode(&body);
        self.unknown += unknown;
        Ok(Some(SequenceRecord { header, residues }))
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<SequenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Parsed records plus the number of residue letters normalized to `X`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FastaBatch {
    pub records: Vec<SequenceRecord>,
    pub unknown_residues: usize,
}

/// Reads every record, rejecting duplicate identifiers.
pub fn parse_fasta<R: BufRead>(reader: R) -> Result<FastaBatch> {
    let mut fasta = FastaReader::new(reader);
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for rec in fasta.by_ref() {
        let rec = rec?;
        if !seen.insert(rec.id().to_string()) {
            return Err(Error::DuplicateId(rec.id().to_string()));
        }
        records.push(rec);
    }
    Ok(FastaBatch {
        records,
        unknown_residues: fasta.unknown_residues(),
    })
}

pub fn read_fasta_file(path: &std::path::Path) -> Result<FastaBatch> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_fasta(std::io::BufReader::new(file))
}

pub fn write_record<W: Write>(out: &mut W, record: &SequenceRecord, wrap: usize) -> Result<()> {
    let wrap = wrap.max(1);
    out.write_all(b">")?;
    out.write_all(record.header.as_bytes())?;
    out.write_all(b"\n")?;
    let mut line = Vec::with_capacity(wrap + 1);
    for chunk in record.residues.chunks(wrap) {
        line.clear();
        line.extend(chunk.iter().map(|&r| index_to_letter(r)));
        line.push(b'\n');
        out.write_all(&line)?;
    }
    Ok(())
}

pub fn write_fasta<W: Write>(out: &mut W, records: &[SequenceRecord], wrap: usize) -> Result<()> {
    for r in records {
        write_record(out, r, wrap)?;
    }
    Ok(())
}
