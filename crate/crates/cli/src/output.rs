//! CSV staging: every file is written to a temporary path in the output
//! directory and renamed into place only after the whole run succeeded.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

/// Round-trip decimal form, 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub struct Staged {
    file: NamedTempFile,
    dest: PathBuf,
}

impl Staged {
    pub fn temp_path(&self) -> &Path {
        self.file.path()
    }
}

/// Files of one run, committed together.
pub struct Stage {
    dir: PathBuf,
    files: Vec<Staged>,
}

impl Stage {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Writes `header` and `rows` to a staged file destined for `name`.
    pub fn write_csv<I, R>(&mut self, name: &str, header: &[String], rows: I) -> Result<&Staged, CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let file = NamedTempFile::new_in(&self.dir)?;
        {
            let mut w = csv::Writer::from_writer(BufWriter::new(file.as_file()));
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        self.files.push(Staged {
            file,
            dest: self.dir.join(name),
        });
        Ok(self.files.last().expect("just pushed"))
    }

    /// Renames every staged file into place and returns the final paths.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut out = Vec::with_capacity(self.files.len());
        for staged in self.files {
            staged
                .file
                .persist(&staged.dest)
                .map_err(|e| CliError::Io(format!("{}: {}", staged.dest.display(), e.error)))?;
            out.push(staged.dest);
        }
        Ok(out)
    }
}

pub fn header(fixed: &[&str], prefix: &str, n: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n).map(|i| format!("{prefix}{i}")))
        .collect()
}
