//! File formats: JSON for graphs, candidates, marginals, posteriors and
//! predictions; CSV with a leading `#` comment line for tables.
//!
//! Every JSON document carries a `meta` object recording the tool version,
//! the command line and the seed. Negative infinity in log tables is written
//! as the string `"-inf"`.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::graph::{build_graph, FactorSpec, GibbsModel, VariableSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(command: &str, args: Vec<String>, seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            seed,
        }
    }

    /// Single-line `#` header for CSV output.
    pub fn csv_comment(&self) -> String {
        let mut line = format!("# {} {} {}", self.tool, self.version, self.command);
        if !self.args.is_empty() {
            line.push_str(" args=");
            line.push_str(&self.args.join(" "));
        }
        if let Some(seed) = self.seed {
            line.push_str(&format!(" seed={seed}"));
        }
        line
    }
}

/// Log-potential entries where `-inf` round-trips as a string.
mod log_values {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = values
            .iter()
            .map(|&v| {
                if v == f64::NEG_INFINITY {
                    Entry::Text("-inf".into())
                } else {
                    Entry::Number(v)
                }
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        entries
            .into_iter()
            .map(|e| match e {
                Entry::Number(v) => Ok(v),
                Entry::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
                Entry::Text(t) => Err(serde::de::Error::custom(format!("unexpected table entry {t:?}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRecord {
    pub scope: Vec<usize>,
    #[serde(with = "log_values")]
    pub log_table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    /// Cardinality of each variable.
    pub variables: Vec<usize>,
    pub factors: Vec<FactorRecord>,
    #[serde(default = "unit_temperature")]
    pub temperature: f64,
}

fn unit_temperature() -> f64 {
    1.0
}

impl GraphFile {
    pub fn from_model(model: &GibbsModel, meta: Option<Meta>) -> Self {
        let (vars, factors) = model.graph().to_specs();
        Self {
            meta,
            variables: vars.iter().map(|v| v.cardinality).collect(),
            factors: factors
                .into_iter()
                .map(|f| FactorRecord {
                    scope: f.scope,
                    log_table: f.table,
                })
                .collect(),
            temperature: model.temperature(),
        }
    }

    pub fn to_model(&self) -> Result<GibbsModel> {
        let vars: Vec<VariableSpec> = self
            .variables
            .iter()
            .enumerate()
            .map(|(id, &cardinality)| VariableSpec { id, cardinality })
            .collect();
        let factors: Vec<FactorSpec> = self
            .factors
            .iter()
            .enumerate()
            .map(|(id, f)| FactorSpec {
                id,
                scope: f.scope.clone(),
                table: f.log_table.clone(),
            })
            .collect();
        GibbsModel::new(build_graph(&vars, &factors)?, self.temperature)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    #[serde(flatten)]
    pub set: CandidateSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub method: String,
    pub log_z: f64,
    pub converged: bool,
    pub iterations: usize,
    pub marginals: Vec<Vec<f64>>,
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::NotFound {
        Error::FileNotFound(path.display().to_string())
    } else {
        Error::Io(format!("{}: {e}", path.display()))
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn read_model(path: &Path) -> Result<GibbsModel> {
    read_json::<GraphFile>(path)?.to_model()
}

pub fn read_candidates(path: &Path) -> Result<CandidateSet> {
    Ok(read_json::<CandidateFile>(path)?.set)
}

/// Rows of a variable × label matrix.
pub fn marginals_csv(meta: &Meta, node: &[Vec<f64>]) -> String {
    let width = node.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = meta.csv_comment();
    out.push('\n');
    out.push_str("variable");
    for k in 0..width {
        out.push_str(&format!(",p{k}"));
    }
    out.push('\n');
    for (i, row) in node.iter().enumerate() {
        out.push_str(&i.to_string());
        for k in 0..width {
            match row.get(k) {
                Some(p) => out.push_str(&format!(",{p:.12}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
