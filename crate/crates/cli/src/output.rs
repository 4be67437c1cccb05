//! Output files are staged next to their destination and renamed into place
//! only once every output of a command has been written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
    created_dirs: Vec<PathBuf>,
    committed: bool,
}

fn staging_path(dest: &Path) -> PathBuf {
    let name = dest
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    dest.with_file_name(format!(".{name}.partial"))
}

impl Outputs {
    /// Create `dir` (and parents) if missing; it is removed again on failure
    /// if it was created here and is left empty.
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.created_dirs.extend(missing);
        Ok(())
    }

    pub fn write<F>(&mut self, dest: &Path, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        if let Some(parent) = dest.parent() {
            self.dir(parent)?;
        }
        let tmp = staging_path(dest);
        self.staged.push((tmp.clone(), dest.to_path_buf()));
        let file =
            fs::File::create(&tmp).with_context(|| format!("creating {}", dest.display()))?;
        let mut w = std::io::BufWriter::new(file);
        body(&mut w).with_context(|| format!("writing {}", dest.display()))?;
        w.flush()
            .with_context(|| format!("writing {}", dest.display()))?;
        Ok(())
    }

    pub fn commit(mut self) -> Result<()> {
        let staged = std::mem::take(&mut self.staged);
        for (i, (tmp, dest)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, dest) {
                for (_, done) in &staged[..i] {
                    let _ = fs::remove_file(done);
                }
                self.staged = staged[i..].to_vec();
                return Err(e).with_context(|| format!("moving output into {}", dest.display()));
            }
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
        for d in self.created_dirs.iter() {
            let _ = fs::remove_dir(d);
        }
    }
}
