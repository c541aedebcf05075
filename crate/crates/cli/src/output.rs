//! The output directory and its run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use rnnattack::report::CsvTable;
use rnnattack::{Error, Result};

pub const MANIFEST_FORMAT: &str = "rnnattack-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub version: u32,
    pub tool_version: &'static str,
    pub subcommand: String,
    /// Command line after the program name.
    pub argv: Vec<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    pub wall_time: f64,
}

/// Writer confined to one directory. Every artifact is a plain file name
/// inside it.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
    start: Instant,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            start: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn target(&mut self, name: &str) -> PathBuf {
        assert!(
            !name.contains(['/', '\\']) && name != ".." && name != ".",
            "artifact names are bare file names"
        );
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let p = self.target(name);
        table.write(&p)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.target(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    pub fn record(&mut self, name: &str) {
        self.target(name);
    }

    pub fn finish(mut self, subcommand: &str, argv: Vec<String>, config: serde_json::Value, seed: u64, inputs: Vec<PathBuf>) -> Result<()> {
        let manifest = RunManifest {
            format: MANIFEST_FORMAT,
            version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv,
            config,
            seed,
            inputs,
            outputs: self.written.clone(),
            wall_time: self.start.elapsed().as_secs_f64(),
        };
        self.json("manifest.json", &manifest)
    }
}
