use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use epigate_core::data::DATA_DIR_ENV;
use epigate_core::Result;

/// Written beside every command's outputs: enough to rerun it.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: Value,
    pub crate_version: &'static str,
    pub data_dir: Option<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().skip(1).collect(),
            seed,
            config,
            crate_version: env!("CARGO_PKG_VERSION"),
            data_dir: std::env::var(DATA_DIR_ENV).ok(),
            outputs: Vec::new(),
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.outputs = list_files(dir, dir)?;
        self.outputs.sort();
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}

fn list_files(root: &Path, dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.extend(list_files(root, &path)?);
        } else if path.file_name().is_some_and(|n| n != "manifest.json") {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            out.push(rel.to_string_lossy().into_owned());
        }
    }
    Ok(out)
}
