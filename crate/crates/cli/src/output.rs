//! CSV tables, key-value summaries and the resolved-config echo.
//!
//! Floats are written as `{:.16e}`, which reparses to the same `f64`.
//! Missing values are written as `undefined`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{ResolvedSystem, RunConfig};
use crate::CliError;

pub const UNDEFINED: &str = "undefined";

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), float)
}

/// A file produced by a run, held in memory until the run has finished.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

pub fn csv_file(name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> OutputFile {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    OutputFile { name: name.to_string(), contents: String::from_utf8(bytes).expect("ascii output") }
}

/// Ordered `key = value` lines.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn float(&mut self, key: &str, x: f64) -> &mut Self {
        self.push(key, float(x))
    }

    pub fn opt_float(&mut self, key: &str, x: Option<f64>) -> &mut Self {
        self.push(key, opt_float(x))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn into_file(self, name: &str) -> OutputFile {
        let mut text = String::new();
        for (k, v) in &self.entries {
            writeln!(text, "{k} = {v}").unwrap();
        }
        OutputFile { name: name.to_string(), contents: text }
    }

    /// Parse the text written by [`Summary::into_file`].
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }
}

/// The configuration as run, with the derived dimensionless numbers.
pub fn config_echo(config: &RunConfig, resolved: &ResolvedSystem) -> OutputFile {
    let p = &resolved.params;
    let mut table = toml::Table::try_from(config).expect("config serializes");
    let mut derived = toml::Table::new();
    derived.insert("kappa".into(), p.kappa.into());
    derived.insert("kappa_source".into(), if resolved.kappa_from_q { "quality_factor" } else { "given" }.into());
    derived.insert("flux".into(), p.flux.into());
    derived.insert("flux_label".into(), if resolved.flux_inferred { "inferred" } else { "given" }.into());
    derived.insert("n_per_lifetime".into(), p.n_per_lifetime().into());
    derived.insert("pump_parameter".into(), p.pump_parameter().into());
    derived.insert("g_tau".into(), p.g_tau().into());
    derived.insert("kappa_over_g".into(), (p.kappa / p.g).into());
    derived.insert("gamma_over_g".into(), (p.gamma / p.g).into());
    derived.insert("flux_times_tau".into(), (p.flux * p.tau).into());
    table.insert("derived".into(), derived.into());
    OutputFile { name: "config.resolved.toml".into(), contents: toml::to_string(&table).expect("table serializes") }
}

/// Write every file into `dir`, creating it if needed.
pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>, CliError> {
    let err = |path: &Path, e: std::io::Error| CliError::Write { path: path.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
    files
        .iter()
        .map(|f| {
            let path = dir.join(&f.name);
            std::fs::write(&path, &f.contents).map_err(|e| err(&path, e))?;
            Ok(path)
        })
        .collect()
}
