//! Command implementations behind the `cider` binary. Every command resolves
//! its settings as explicit flag > `--config` file > default, then echoes the
//! fully-resolved configuration as JSON into the output directory so any run
//! can be reproduced from its artifacts alone.

pub mod bio_prep;
pub mod evaluate;
pub mod explain;
pub mod generate;
pub mod train_task;

use cider_core::{CiderError, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Reads a JSON config file into the command's optional-field form. Absent
/// keys stay `None`, so partial files work as overrides.
pub(crate) fn load_config_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CiderError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CiderError::Parse {
        file: path.display().to_string(),
        line: e.line(),
        detail: e.to_string(),
    })
}

pub(crate) fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CiderError::contract(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CiderError::io(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CiderError::io(dir, e))
}

/// flag > config file > default.
pub(crate) fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Paths have no sane default; they must come from a flag or the config file.
pub(crate) fn require_path(
    flag: Option<PathBuf>,
    file: Option<PathBuf>,
    name: &str,
) -> Result<PathBuf> {
    flag.or(file)
        .ok_or_else(|| CiderError::contract(format!("missing required --{name}")))
}
