use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, RunConfig};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Creates the output directory and stores the effective configuration in it.
pub(crate) fn prepare(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.run.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml()?).map_err(|e| io_err(&path, e))?;
    Ok(dir)
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One compact JSON object per line.
pub(crate) fn write_jsonl(path: &Path, values: &[serde_json::Value]) -> Result<(), CliError> {
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for v in values {
        let line = serde_json::to_string(v).map_err(|e| io_err(path, e))?;
        writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub(crate) fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
