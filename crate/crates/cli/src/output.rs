use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tool version and config hash stamped on every report.
pub struct Provenance {
    pub command: &'static str,
    pub config: PathBuf,
    pub config_sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: String,
    config_sha256: &'a str,
    outputs: Vec<String>,
}

impl Provenance {
    pub fn new(command: &'static str, config: &Path, config_text: &str) -> Self {
        let digest = Sha256::digest(config_text.as_bytes());
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self { command, config: config.to_path_buf(), config_sha256 }
    }

    pub fn header(&self) -> String {
        format!(
            "# ftqnn {VERSION}\n# command: {}\n# config-sha256: {}\n",
            self.command, self.config_sha256
        )
    }

    /// Write `body` behind the provenance header.
    pub fn write(&self, path: &Path, body: &str) -> Result<(), CliError> {
        write_file(path, &(self.header() + body))
    }

    /// `<primary>.run.toml` listing the outputs of this run.
    pub fn write_manifest(&self, primary: &Path, outputs: &[&Path]) -> Result<(), CliError> {
        let m = RunManifest {
            tool: "ftqnn",
            version: VERSION,
            command: self.command,
            config: self.config.display().to_string(),
            config_sha256: &self.config_sha256,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let text = toml::to_string(&m).expect("manifest is plain data");
        let mut name = primary.as_os_str().to_owned();
        name.push(".run.toml");
        write_file(Path::new(&name), &text)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Serialize rows with a header line.
pub fn csv_body<S: Serialize>(rows: &[S]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
