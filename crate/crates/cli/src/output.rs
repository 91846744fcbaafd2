use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::io(path, e))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Runs `f` against a buffered file and flushes it.
pub fn with_file<E: Into<CliError>>(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<(), E>) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w).map_err(Into::into)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn image_name(frame_id: u64) -> String {
    format!("images/{frame_id:06}.png")
}
