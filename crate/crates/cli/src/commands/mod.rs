pub mod coverage;
pub mod mape;
pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod sample;
pub mod sweep;
pub mod train;
pub mod verify;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{self, Loaded, Overrides};
use crate::error::{CliError, CliResult};
use crate::manifest;

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub config: Option<PathBuf>,
    pub overrides: Overrides,
    pub deterministic_svg: bool,
}

impl Ctx {
    pub fn load<T>(&self, default_out: &str) -> CliResult<Loaded<T>>
    where
        T: DeserializeOwned + Serialize + Default,
    {
        let loaded = config::load(self.config.as_deref(), &self.overrides, default_out)?;
        manifest::ensure_dir(&loaded.out)?;
        Ok(loaded)
    }
}

/// Rows of comma-separated values with a fixed header. Floats use the
/// shortest round-trip form.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n", columns: header.len() }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self { text: header.join(",") + "\n", columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns, "csv row width");
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn coords(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("{prefix}{j}")).collect()
}

/// Outputs collected by a command, finished with its manifest.
pub struct Outputs<'a> {
    out: &'a Path,
    names: Vec<String>,
}

impl<'a> Outputs<'a> {
    pub fn new(out: &'a Path) -> Self {
        Self { out, names: Vec::new() }
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<()> {
        self.names.push(manifest::write_output(self.out, name, contents)?);
        Ok(())
    }

    pub fn record(&mut self, name: String) {
        self.names.push(name);
    }

    pub fn finish<T>(self, command: &str, loaded: &Loaded<T>) -> CliResult<()> {
        manifest::write_manifest(self.out, command, loaded.seed, &loaded.resolved, &self.names)?;
        for n in &self.names {
            println!("wrote {}", self.out.join(n).display());
        }
        Ok(())
    }
}

pub fn load_model(path: &Path, key: &str) -> CliResult<distmarch::field::FieldModel> {
    if !path.exists() {
        return Err(CliError::config(key, format!("checkpoint {} does not exist", path.display())));
    }
    distmarch::field::load_checkpoint(path).map_err(|e| CliError::config(key, e))
}
