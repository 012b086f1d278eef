//! ASCII and binary PSSM files.
//!
//! ASCII: two header lines, then per position the 1-based index, query
//! residue, 20 scores, 20 rounded percentages of the mixed frequencies and
//! the information content in bits.
//!
//! Binary (little-endian): magic `EPSP`, u32 version, u32 query length,
//! u32-prefixed query header and matrix name, then per column the query
//! residue (u8), f, g, f' (20 x f64 each), 20 x i32 scores, info (f64) and
//! Nc (f64).

use std::io::{Read, Write};

use super::{ProfileColumn, Pssm};
use crate::alphabet::{index_to_letter, CANONICAL, RESIDUE_ORDER};
use crate::error::{Error, Result};

pub const PSSM_MAGIC: &[u8; 4] = b"EPSP";
pub const PSSM_VERSION: u32 = 1;

pub fn write_ascii_pssm<W: Write>(pssm: &Pssm, out: &mut W) -> Result<()> {
    writeln!(
        out,
        "# query={} matrix={} length={}",
        pssm.query_header,
        pssm.matrix_name,
        pssm.len()
    )?;
    let mut labels = String::from("  pos res");
    for _ in 0..2 {
        for &c in RESIDUE_ORDER.iter() {
            labels.push_str(&format!("{:>4}", c as char));
        }
    }
    labels.push_str("   info");
    writeln!(out, "{labels}")?;
    for (i, col) in pssm.columns.iter().enumerate() {
        let mut line = format!("{:>5} {:>3}", i + 1, index_to_letter(col.query_residue) as char);
        for s in col.scores {
            line.push_str(&format!("{s:>4}"));
        }
        for f in col.mixed_freqs {
            line.push_str(&format!("{:>4}", (f * 100.0).round() as i64));
        }
        line.push_str(&format!("{:>7.2}", col.info_content));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn put_str<W: Write>(out: &mut W, s: &str) -> Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_binary_pssm<W: Write>(pssm: &Pssm, out: &mut W) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + pssm.len() * (1 + 62 * 8 + 20 * 4));
    buf.extend_from_slice(PSSM_MAGIC);
    buf.extend_from_slice(&PSSM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(pssm.len() as u32).to_le_bytes());
    put_str(&mut buf, &pssm.query_header)?;
    put_str(&mut buf, &pssm.matrix_name)?;
    for c in &pssm.columns {
        buf.push(c.query_residue);
        for v in c.weighted_freqs.iter().chain(&c.pseudo_freqs).chain(&c.mixed_freqs) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for s in c.scores {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        buf.extend_from_slice(&c.info_content.to_le_bytes());
        buf.extend_from_slice(&c.n_eff.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::BadPssm("unexpected end of file".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::BadPssm("invalid UTF-8 string".into()))
    }

    fn freqs(&mut self) -> Result<[f64; CANONICAL]> {
        let mut out = [0.0; CANONICAL];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }
}

pub fn read_binary_pssm<R: Read>(mut input: R) -> Result<Pssm> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.take(4)? != PSSM_MAGIC {
        return Err(Error::BadPssm("bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != PSSM_VERSION {
        return Err(Error::BadPssm(format!("unsupported version {version}")));
    }
    let len = cur.u32()? as usize;
    let query_header = cur.string()?;
    let matrix_name = cur.string()?;
    let mut columns = Vec::with_capacity(len.min(1 << 20));
    for _ in 0..len {
        let query_residue = cur.take(1)?[0];
        let weighted_freqs = cur.freqs()?;
        let pseudo_freqs = cur.freqs()?;
        let mixed_freqs = cur.freqs()?;
        let mut scores = [0; CANONICAL];
        for s in &mut scores {
            *s = cur.i32()?;
        }
        columns.push(ProfileColumn {
            query_residue,
            weighted_freqs,
            pseudo_freqs,
            mixed_freqs,
            scores,
            info_content: cur.f64()?,
            n_eff: cur.f64()?,
        });
    }
    if cur.pos != data.len() {
        return Err(Error::BadPssm("trailing bytes".into()));
    }
    Ok(Pssm {
        query_header,
        matrix_name,
        columns,
    })
}
