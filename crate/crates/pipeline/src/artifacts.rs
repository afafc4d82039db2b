//! Output file names and crash-safe writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::PipelineError;

pub const VOLUME: &str = "volume.atsf";
pub const MESH: &str = "mesh.ply";
pub const VISIBILITY: &str = "visibility.csv";
pub const TEXTURED_STEM: &str = "textured";
pub const FACE_VIEWS: &str = "face_views.json";
pub const LABELED_MESH: &str = "labeled.ply";
pub const LABELS: &str = "labels.json";
pub const ERROR_REPORT: &str = "error_report.json";
pub const ERROR_HISTOGRAM: &str = "error_hist.csv";
pub const FAILURE: &str = "error.json";
pub const METRICS_DIR: &str = "metrics";
pub const SIM_DIR: &str = "sim";

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through `<path>.partial` and renames on success. When `body`
/// fails the partial file stays behind.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), PipelineError>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let partial = partial_path(path);
    let file = File::create(&partial).map_err(|e| PipelineError::io(&partial, e))?;
    let mut w = BufWriter::new(file);
    let result = body(&mut w);
    let flushed = w.flush().map_err(|e| PipelineError::io(&partial, e));
    result?;
    flushed?;
    drop(w);
    std::fs::rename(&partial, path).map_err(|e| PipelineError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    write_atomic(path, |w| w.write_all(bytes).map_err(|e| PipelineError::io(path, e)))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| PipelineError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| PipelineError::io(path, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_writes_leave_a_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.txt");
        let err = write_atomic(&path, |w| {
            w.write_all(b"half").unwrap();
            Err(PipelineError::Config("boom".into()))
        });
        assert!(err.is_err());
        assert!(!path.exists());
        assert_eq!(std::fs::read(partial_path(&path)).unwrap(), b"half");

        write_bytes(&path, b"whole").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"whole");
        assert!(!partial_path(&path).exists());
    }
}
