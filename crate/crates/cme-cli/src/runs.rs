//! Run directories and atomic file writes. Every command materializes its
//! outputs under `out_dir/run_id/`, where the run id is derived from the
//! command name, the config hash, and the base seed. A directory whose
//! config.json carries a different hash is never overwritten.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ConfigMap;
use crate::{CliError, CliResult};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunConfigRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub values: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct RunDir {
    pub id: String,
    pub path: PathBuf,
    pub config_hash: String,
}

/// Writes through a temp file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let display = path.display();
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| CliError::io(format!("creating temp file for {display}"), e))?;
    std::io::Write::write_all(&mut tmp, bytes)
        .map_err(|e| CliError::io(format!("writing {display}"), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("renaming into {display}"), e.error))?;
    Ok(())
}

pub fn run_id(command: &str, hash: &str, seed: u64) -> String {
    format!("{command}_{}_s{seed}", &hash[..10])
}

/// Creates `out_dir/run_id/` and stamps config.json. An existing stamp with
/// a different hash aborts; a matching stamp allows the rerun to proceed.
pub fn prepare_run_dir(out_dir: &str, config: &ConfigMap, seed: u64) -> CliResult<RunDir> {
    let hash = config.hash_hex();
    let id = run_id(config.command(), &hash, seed);
    let path = Path::new(out_dir).join(&id);
    std::fs::create_dir_all(&path)
        .map_err(|e| CliError::io(format!("creating run dir {}", path.display()), e))?;

    let config_path = path.join("config.json");
    if config_path.exists() {
        let text = std::fs::read_to_string(&config_path)
            .map_err(|e| CliError::io(format!("reading {}", config_path.display()), e))?;
        let existing: RunConfigRecord = serde_json::from_str(&text).map_err(|e| {
            CliError::config(format!("parsing {}: {e}", config_path.display()))
        })?;
        if existing.config_hash != hash {
            return Err(CliError::config(format!(
                "refusing to overwrite {}: existing config hash {} differs from {}",
                path.display(),
                existing.config_hash,
                hash
            )));
        }
    }

    let record = RunConfigRecord {
        command: config.command().to_string(),
        config_hash: hash.clone(),
        seed,
        values: config.canonical(),
    };
    let body = serde_json::to_string_pretty(&record)
        .map_err(|e| CliError::config(format!("encoding config.json: {e}")))?;
    write_atomic(&config_path, body.as_bytes())?;

    Ok(RunDir {
        id,
        path,
        config_hash: hash,
    })
}

/// summary.json is written last so its presence marks a completed run.
pub fn write_summary(dir: &RunDir, summary: &serde_json::Value) -> CliResult<()> {
    let body = serde_json::to_string_pretty(summary)
        .map_err(|e| CliError::config(format!("encoding summary.json: {e}")))?;
    write_atomic(&dir.path.join("summary.json"), body.as_bytes())
}
