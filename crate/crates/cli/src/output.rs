//! Output files are written to hidden temporaries beside their targets and
//! renamed only once every output of a command has been written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{output_error, CliError};

#[derive(Default)]
pub struct StagedOutputs {
    staged: Vec<(NamedTempFile, PathBuf)>,
}

impl StagedOutputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `fill` against a temporary for `target`.
    pub fn write<T, F>(&mut self, target: &Path, fill: F) -> Result<T, CliError>
    where
        F: FnOnce(&mut BufWriter<&mut File>) -> wearlog_core::Result<T>,
    {
        let io_err = |source| CliError::Output { path: target.to_path_buf(), source };
        let dir = target.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::Builder::new().prefix(".wearlog-").tempfile_in(dir).map_err(io_err)?;
        let value = {
            let mut w = BufWriter::new(tmp.as_file_mut());
            let value = fill(&mut w).map_err(|e| output_error(target, e))?;
            w.flush().map_err(io_err)?;
            value
        };
        self.staged.push((tmp, target.to_path_buf()));
        Ok(value)
    }

    pub fn write_bytes(&mut self, target: &Path, bytes: &[u8]) -> Result<(), CliError> {
        self.write(target, |w| w.write_all(bytes).map_err(wearlog_core::Error::SinkWrite))
    }

    /// Moves every staged file into place.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::with_capacity(self.staged.len());
        for (tmp, target) in self.staged {
            tmp.as_file()
                .sync_all()
                .map_err(|source| CliError::Output { path: target.clone(), source })?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                let _ = tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644));
            }
            tmp.persist(&target)
                .map_err(|e| CliError::Output { path: target.clone(), source: e.error })?;
            done.push(target);
        }
        Ok(done)
    }
}
