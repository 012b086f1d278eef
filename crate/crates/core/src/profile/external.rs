//! Hand-off to an external PSI-BLAST-compatible executable.
//!
//! The template is split on whitespace before substitution, so substituted
//! paths may contain spaces. Placeholders: `{query}`, `{db}`, `{out_pssm}`,
//! `{out_ascii}`, `{evalue}`.

use std::path::Path;
use std::process::Command;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalProfiler {
    template: String,
}

/// Paths handed to one external run.
#[derive(Clone, Copy, Debug)]
pub struct ExternalJob<'a> {
    pub query: &'a Path,
    pub db: &'a Path,
    pub out_pssm: &'a Path,
    pub out_ascii: &'a Path,
    pub evalue: f64,
}

impl ExternalProfiler {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if template.split_whitespace().next().is_none() {
            return Err(Error::Config("empty external profiler command".into()));
        }
        Ok(Self { template })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn command_line(&self, job: &ExternalJob) -> Vec<String> {
        let evalue = job.evalue.to_string();
        self.template
            .split_whitespace()
            .map(|tok| {
                tok.replace("{query}", &job.query.to_string_lossy())
                    .replace("{db}", &job.db.to_string_lossy())
                    .replace("{out_pssm}", &job.out_pssm.to_string_lossy())
                    .replace("{out_ascii}", &job.out_ascii.to_string_lossy())
                    .replace("{evalue}", &evalue)
            })
            .collect()
    }

    /// Runs the command. A non-zero exit, a signal, or a missing output
    /// that the template promised all become [`Error::External`].
    pub fn run(&self, job: &ExternalJob) -> Result<()> {
        let argv = self.command_line(job);
        let output = Command::new(&argv[0])
            .args(&argv[1..])
            .output()
            .map_err(|e| Error::External(format!("cannot start '{}': {e}", argv[0])))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let tail = stderr.lines().last().unwrap_or("").trim();
            return Err(Error::External(match output.status.code() {
                Some(code) => format!("'{}' exited with status {code}: {tail}", argv[0]),
                None => format!("'{}' terminated by a signal", argv[0]),
            }));
        }
        for (placeholder, path) in [("{out_pssm}", job.out_pssm), ("{out_ascii}", job.out_ascii)] {
            if self.template.contains(placeholder) && !path.exists() {
                return Err(Error::External(format!("'{}' did not write {}", argv[0], path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(names: &[std::path::PathBuf; 4]) -> ExternalJob<'_> {
        ExternalJob {
            query: &names[0],
            db: &names[1],
            out_pssm: &names[2],
            out_ascii: &names[3],
            evalue: 10.0,
        }
    }

    fn paths(dir: &Path) -> [std::path::PathBuf; 4] {
        ["query.fasta", "golden.fasta", "pssm.bin", "my pssm.txt"].map(|n| dir.join(n))
    }

    #[test]
    fn substitution_keeps_spaces_inside_arguments() {
        let dir = Path::new("/w d");
        let names = paths(dir);
        let p = ExternalProfiler::new("psiblast -query {query} -db {db} -evalue {evalue} -out_ascii_pssm {out_ascii}").unwrap();
        assert_eq!(
            p.command_line(&job(&names)),
            ["psiblast", "-query", "/w d/query.fasta", "-db", "/w d/golden.fasta", "-evalue", "10", "-out_ascii_pssm", "/w d/my pssm.txt"]
        );
        assert!(ExternalProfiler::new("  ").is_err());
    }

    #[test]
    fn exit_codes_map_to_errors() {
        let dir = tempfile::tempdir().unwrap();
        let names = paths(dir.path());
        std::fs::write(&names[0], ">q\nMKV\n").unwrap();

        let ok = ExternalProfiler::new("cp {query} {out_ascii}").unwrap();
        ok.run(&job(&names)).unwrap();
        assert_eq!(std::fs::read(&names[3]).unwrap(), b">q\nMKV\n");

        let failing = ExternalProfiler::new("false {query}").unwrap();
        let err = failing.run(&job(&names)).unwrap_err().to_string();
        assert!(err.contains("status 1"), "{err}");

        let silent = ExternalProfiler::new("true {out_pssm}").unwrap();
        assert!(matches!(silent.run(&job(&names)), Err(Error::External(_))));

        let missing = ExternalProfiler::new("/nonexistent/psiblast").unwrap();
        assert!(missing.run(&job(&names)).unwrap_err().to_string().contains("cannot start"));
    }
}
