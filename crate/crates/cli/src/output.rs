//! Output tables and atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// A file computed in memory, written only once the whole run succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Provenance stamped into every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub command: &'static str,
    pub scenario_sha256: String,
    pub master_seed: u64,
}

pub enum Field<'a> {
    Int(i64),
    Num(f64),
    Text(&'a str),
}

impl From<usize> for Field<'_> {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<f64> for Field<'_> {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl<'a> From<&'a str> for Field<'a> {
    fn from(v: &'a str) -> Self {
        Field::Text(v)
    }
}

/// CSV with `#` metadata lines, a column description line and a header row.
/// Floats are written as `{:.15e}` (16 significant digits).
pub struct Csv {
    buf: String,
    width: usize,
}

impl Csv {
    pub fn new(stamp: &Stamp, what: &str, columns: &[(&str, &str)]) -> Self {
        let mut buf = String::new();
        writeln!(buf, "# qportfolio {}: {what}", stamp.command).unwrap();
        writeln!(buf, "# scenario_sha256={}", stamp.scenario_sha256).unwrap();
        writeln!(buf, "# master_seed={}", stamp.master_seed).unwrap();
        let doc: Vec<String> = columns.iter().map(|(c, d)| format!("{c} = {d}")).collect();
        writeln!(buf, "# columns: {}", doc.join("; ")).unwrap();
        let names: Vec<&str> = columns.iter().map(|(c, _)| *c).collect();
        writeln!(buf, "{}", names.join(",")).unwrap();
        Self {
            buf,
            width: columns.len(),
        }
    }

    pub fn row(&mut self, fields: &[Field]) {
        assert_eq!(fields.len(), self.width, "row width differs from the header");
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match f {
                Field::Int(v) => write!(self.buf, "{v}").unwrap(),
                Field::Num(v) => write!(self.buf, "{v:.15e}").unwrap(),
                Field::Text(v) => self.buf.push_str(v),
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self, name: &str) -> OutputFile {
        OutputFile {
            name: name.to_string(),
            bytes: self.buf.into_bytes(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_file(name: &str, value: &impl Serialize) -> OutputFile {
    let mut bytes = serde_json::to_vec_pretty(value).expect("output serializes");
    bytes.push(b'\n');
    OutputFile {
        name: name.to_string(),
        bytes,
    }
}

/// Writes every file through a temporary file in `dir` renamed into place.
pub fn write_atomically(dir: &Path, files: &[OutputFile]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for f in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&f.bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(&f.name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| e.error)?;
        written.push(target);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let stamp = Stamp {
            command: "simulate",
            scenario_sha256: "ab".into(),
            master_seed: 3,
        };
        let mut csv = Csv::new(&stamp, "test", &[("step", "index"), ("x", "state")]);
        csv.row(&[1usize.into(), 0.1.into()]);
        let text = String::from_utf8(csv.finish("t.csv").bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "# scenario_sha256=ab");
        assert_eq!(lines[2], "# master_seed=3");
        assert_eq!(lines[4], "step,x");
        assert_eq!(lines[5], "1,1.000000000000000e-1");
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![OutputFile {
            name: "a.txt".into(),
            bytes: b"hello".to_vec(),
        }];
        let written = write_atomically(dir.path(), &files).unwrap();
        assert_eq!(std::fs::read(&written[0]).unwrap(), b"hello");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
