//! Plain-text sequence manifests.
//!
//! ```text
//! # comment
//! @palette 0,0,0;255,0,255
//! frames/000.ppm  gt/000.ppm
//! frames/001.ppm  gt/001.ppm
//! ```
//!
//! One frame per line, optionally followed by its ground-truth mask. Either
//! every line has a mask or none does. Relative paths are resolved against
//! the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::mask::Palette;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceEntry {
    pub frame: PathBuf,
    pub truth: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequenceManifest {
    pub entries: Vec<SequenceEntry>,
    pub palette: Option<Palette>,
}

impl SequenceManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, path)
    }

    /// `origin` is only used in error messages.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Manifest {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut m = SequenceManifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("@palette") {
                let p: Palette = rest
                    .trim()
                    .parse()
                    .map_err(|e: Error| err(i + 1, e.to_string()))?;
                m.palette = Some(p);
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() > 2 {
                return Err(err(
                    i + 1,
                    format!("expected 1 or 2 columns, got {}", cols.len()),
                ));
            }
            let entry = SequenceEntry {
                frame: base.join(cols[0]),
                truth: cols.get(1).map(|t| base.join(t)),
            };
            if let Some(first) = m.entries.first() {
                if first.truth.is_some() != entry.truth.is_some() {
                    return Err(err(
                        i + 1,
                        "ground truth must be given for every frame or none".into(),
                    ));
                }
            }
            m.entries.push(entry);
        }
        Ok(m)
    }

    pub fn has_truth(&self) -> bool {
        self.entries.first().is_some_and(|e| e.truth.is_some())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Paths are written as given; callers pick relative or absolute.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.palette {
            let _ = writeln!(s, "@palette {p}");
        }
        for e in &self.entries {
            match &e.truth {
                Some(t) => {
                    let _ = writeln!(s, "{} {}", e.frame.display(), t.display());
                }
                None => {
                    let _ = writeln!(s, "{}", e.frame.display());
                }
            }
        }
        s
    }
}
