use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "gaitscope";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Meta {
            tool: TOOL,
            version: VERSION,
            config_hash,
            seed,
        }
    }

    /// First line of every CSV output.
    pub fn csv_line(&self) -> String {
        format!(
            "# {} version={} config_hash={} seed={}\n",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

/// Output directory writer. Every file carries the run metadata: CSVs as a
/// leading `#` line, JSON reports as a `meta` field, and fixed-format
/// interchange files through a `<name>.meta.json` sidecar.
pub struct Outputs {
    dir: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn create(dir: &Path, meta: Meta) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            meta,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Output {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(&path, bytes).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> gaitscope::Result<()>,
    {
        let mut bytes = self.meta.csv_line().into_bytes();
        body(&mut bytes)?;
        self.write(name, &bytes)
    }

    pub fn json(&mut self, name: &str, mut value: Value) -> CliResult<()> {
        match value.as_object_mut() {
            Some(obj) => {
                obj.insert("meta".into(), json!(self.meta));
            }
            None => value = json!({ "meta": self.meta, "data": value }),
        }
        let text = serde_json::to_string_pretty(&value).expect("json value serializes");
        self.write(name, text.as_bytes())
    }

    pub fn with_sidecar(&mut self, name: &str, text: &str) -> CliResult<()> {
        self.write(name, text.as_bytes())?;
        let sidecar = serde_json::to_string_pretty(&json!({ "meta": self.meta, "file": name }))
            .expect("json value serializes");
        self.write(&format!("{name}.meta.json"), sidecar.as_bytes())
    }
}
