//! The tab-separated intermediate file: query header, target header, target
//! sequence. UTF-8, LF line endings, no header row, no quoting.

use std::io::{BufRead, Write};

use crate::alphabet;
use crate::error::{Error, Result};

pub const DEFAULT_TUPLE_FILE: &str = "epsapg.tuple";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleRecord {
    pub query_header: String,
    pub target_header: String,
    pub target_sequence: String,
}

impl TupleRecord {
    fn validate(&self, line: usize) -> Result<()> {
        for field in [&self.query_header, &self.target_header, &self.target_sequence] {
            if field.contains(['\t', '\n']) {
                return Err(Error::Tuple {
                    line,
                    msg: "field contains a tab or newline".into(),
                });
            }
        }
        if self.target_sequence.is_empty()
            || alphabet::encode_strict(self.target_sequence.as_bytes()).is_none()
        {
            return Err(Error::Tuple {
                line,
                msg: "invalid residue in target sequence".into(),
            });
        }
        Ok(())
    }

    /// Residue indices of the target sequence.
    pub fn residues(&self) -> Vec<u8> {
        alphabet::encode(self.target_sequence.as_bytes()).0
    }
}

/// Streaming tuple reader; errors carry the 1-based line number.
pub struct TupleReader<R> {
    inner: R,
    buf: String,
    line_no: usize,
}

impl<R: BufRead> TupleReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: String::new(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for TupleReader<R> {
    type Item = Result<TupleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.inner.read_line(&mut self.buf) {
            Ok(0) => return None,
            Ok(_) => {}
            Err(e) => return Some(Err(e.into())),
        }
        self.line_no += 1;
        let line = self.buf.strip_suffix('\n').unwrap_or(&self.buf);
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, t, s] = fields[..] else {
            return Some(Err(Error::Tuple {
                line: self.line_no,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            }));
        };
        let rec = TupleRecord {
            query_header: q.to_string(),
            target_header: t.to_string(),
            target_sequence: s.to_string(),
        };
        Some(rec.validate(self.line_no).map(|_| rec))
    }
}

pub fn read_tuples<R: BufRead>(reader: R) -> Result<Vec<TupleRecord>> {
    TupleReader::new(reader).collect()
}

pub fn write_tuple<W: Write>(out: &mut W, rec: &TupleRecord, line: usize) -> Result<()> {
    rec.validate(line)?;
    writeln!(
        out,
        "{}\t{}\t{}",
        rec.query_header, rec.target_header, rec.target_sequence
    )?;
    Ok(())
}

pub fn write_tuples<W: Write>(out: &mut W, records: &[TupleRecord]) -> Result<()> {
    for (i, rec) in records.iter().enumerate() {
        write_tuple(out, rec, i + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_line() {
        let recs = read_tuples("q1\tUniRef90_X\tMKV\n".as_bytes()).unwrap();
        assert_eq!(
            recs,
            vec![TupleRecord {
                query_header: "q1".into(),
                target_header: "UniRef90_X".into(),
                target_sequence: "MKV".into(),
            }]
        );
    }

    #[test]
    fn wrong_field_count_names_line() {
        let err = read_tuples("q\tt\tAC\nq\tt\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Tuple { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn invalid_residue() {
        let err = read_tuples("q\tt\tAC1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Tuple { line: 1, .. }));
    }

    #[test]
    fn writer_rejects_tabs() {
        let rec = TupleRecord {
            query_header: "a\tb".into(),
            target_header: "t".into(),
            target_sequence: "A".into(),
        };
        assert!(write_tuples(&mut Vec::new(), &[rec]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(recs in prop::collection::vec(
            ("[ -~&&[^\t]]{0,30}", "[ -~&&[^\t]]{0,30}", "[ARNDCQEGHILKMFPSTWYVX]{1,80}"), 0..30)
        ) {
            let recs: Vec<_> = recs.into_iter().map(|(q, t, s)| TupleRecord {
                query_header: q, target_header: t, target_sequence: s,
            }).collect();
            let mut out = Vec::new();
            write_tuples(&mut out, &recs).unwrap();
            prop_assert_eq!(read_tuples(out.as_slice()).unwrap(), recs);
        }
    }
}
