//! `run_manifest.txt`, written next to every output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Classify, CliError};

pub const FILE_NAME: &str = "run_manifest.txt";

#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>) -> Self {
        Self {
            command: command.to_string(),
            config: config.map(Path::to_path_buf),
            ..Self::default()
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn render(&self, timestamp: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        let config = self
            .config
            .as_ref()
            .map_or_else(|| "builtin:fastener_preset".to_string(), |p| p.display().to_string());
        let _ = writeln!(s, "config={config}");
        for p in &self.inputs {
            let _ = writeln!(s, "input={}", p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output={}", p.display());
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        let _ = writeln!(s, "timestamp={timestamp}");
        let _ = writeln!(s, "version=detpipe {}", env!("CARGO_PKG_VERSION"));
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.render(&stamp)).input(format!("writing {}", path.display()))
    }

    /// Writes into the directory holding `file`.
    pub fn write_beside(&self, file: &Path) -> Result<(), CliError> {
        let dir = match file.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        self.write(dir)
    }
}
