//! Buffered artifacts that are committed together at the end of a command.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use decay_ledger::io::write_atomic;
use decay_ledger::Result;

#[derive(Default)]
pub struct Artifacts {
    pending: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<PathBuf>, fill: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.pending.push((path.into(), buf));
        Ok(())
    }

    pub fn add_text(&mut self, path: impl Into<PathBuf>, text: &str) {
        self.pending.push((path.into(), text.as_bytes().to_vec()));
    }

    /// Writes every file atomically. If one write fails the files already
    /// written by this call are removed, so a failed command leaves nothing.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (path, bytes) in self.pending {
            if let Err(e) = write_atomic(&path, &bytes) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e);
            }
            done.push(path);
        }
        let mut out = io::stdout().lock();
        for p in &done {
            let _ = writeln!(out, "wrote {}", p.display());
        }
        Ok(done)
    }
}

/// `prefix` with `suffix` appended to its file name.
pub fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
