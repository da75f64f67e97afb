use std::fs;
use std::path::{Path, PathBuf};

use anntune::Error;

/// Collects a command's outputs in a scratch directory and moves them into place only once
/// all of them are written.
pub struct Staging {
    out: PathBuf,
    dir: PathBuf,
    committed: bool,
    created_out: bool,
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Staging {
    pub fn new(out: &Path) -> Self {
        Staging {
            out: out.to_path_buf(),
            dir: out.join(format!(".staging-{}", std::process::id())),
            committed: false,
            created_out: !out.exists(),
        }
    }

    /// Path for an output named `name`, creating the scratch directory on first use.
    pub fn file(&self, name: &str) -> Result<PathBuf, Error> {
        fs::create_dir_all(&self.dir).map_err(|e| io(&self.dir, e))?;
        Ok(self.dir.join(name))
    }

    pub fn write(&self, name: &str, body: impl AsRef<[u8]>) -> Result<(), Error> {
        let path = self.file(name)?;
        fs::write(&path, body).map_err(|e| io(&path, e))
    }

    pub fn commit(mut self) -> Result<(), Error> {
        let entries = fs::read_dir(&self.dir).map_err(|e| io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io(&self.dir, e))?;
            let dest = self.out.join(entry.file_name());
            if dest.is_dir() {
                fs::remove_dir_all(&dest).map_err(|e| io(&dest, e))?;
            }
            fs::rename(entry.path(), &dest).map_err(|e| io(&dest, e))?;
            log::info!("wrote {}", dest.display());
        }
        self.committed = true;
        fs::remove_dir(&self.dir).map_err(|e| io(&self.dir, e))
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
            if self.created_out {
                let _ = fs::remove_dir(&self.out);
            }
        }
    }
}
