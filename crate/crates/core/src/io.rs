//! File formats: binary CSV datasets, versioned model and run-config JSON,
//! and per-iteration trace CSVs.
//!
//! JSON documents carry a `format_version` string `"<major>.<minor>"`;
//! readers reject any major version other than [`FORMAT_MAJOR`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{MrfError, Result};
use crate::gibbs::RNG_ALGORITHM;
use crate::model::{Assignment, Dataset, ModelParams};
use crate::optimizer::{IterateRecord, SpgConfig};

pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_VERSION: &str = "1.0";

fn check_version(version: &str) -> Result<()> {
    let major = version
        .split('.')
        .next()
        .and_then(|m| m.parse::<u32>().ok())
        .ok_or_else(|| MrfError::Schema {
            path: "format_version".into(),
            msg: format!("malformed version `{version}`"),
        })?;
    if major != FORMAT_MAJOR {
        return Err(MrfError::Schema {
            path: "format_version".into(),
            msg: format!("unsupported major version {major} (reader supports {FORMAT_MAJOR})"),
        });
    }
    Ok(())
}

fn from_json<T: DeserializeOwned>(reader: impl Read) -> Result<T> {
    let mut de = serde_json::Deserializer::from_reader(reader);
    serde_path_to_error::deserialize(&mut de).map_err(|e| MrfError::Schema {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

/// Parses a 0/1 CSV with a header row. Cells outside `{0,1}` (empty, `NA`,
/// `?`, ...) become 0 when `impute_missing_as_zero` is set and are errors
/// otherwise.
pub fn parse_binary_csv(reader: impl Read, impute_missing_as_zero: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let p = rdr.headers()?.len();
    if p == 0 {
        return Err(MrfError::Parse {
            line: 1,
            msg: "empty header".into(),
        });
    }
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 2, |pos| pos.line() as usize);
        if record.len() != p {
            return Err(MrfError::Parse {
                line,
                msg: format!("expected {p} fields, found {}", record.len()),
            });
        }
        let mut bits = Vec::with_capacity(p);
        for (col, cell) in record.iter().enumerate() {
            bits.push(match cell {
                "0" => 0,
                "1" => 1,
                _ if impute_missing_as_zero => 0,
                other => {
                    return Err(MrfError::Parse {
                        line,
                        msg: format!("column {} has non-binary value `{other}`", col + 1),
                    })
                }
            });
        }
        samples.push(Assignment::from_bits(&bits)?);
    }
    if samples.is_empty() {
        return Err(MrfError::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    Dataset::new(samples)
}

pub fn load_binary_csv(path: impl AsRef<Path>, impute_missing_as_zero: bool) -> Result<Dataset> {
    parse_binary_csv(BufReader::new(File::open(path)?), impute_missing_as_zero)
}

/// Writes a dataset with header `x1,...,xp`.
pub fn write_binary_csv(mut w: impl Write, data: &Dataset) -> Result<()> {
    let header: Vec<String> = (1..=data.p()).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for x in data.samples() {
        let row: Vec<&str> = x.to_bits().iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_binary_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_binary_csv(&mut w, data)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: String,
    p: usize,
    theta: Vec<f64>,
}

/// Serializes `{ "format_version", "p", "theta" }`; non-finite or
/// wrongly sized parameters are rejected.
pub fn write_model_json(mut w: impl Write, p: usize, theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(MrfError::Schema {
            path: "theta".into(),
            msg: "empty parameter vector".into(),
        });
    }
    if let Some(k) = theta.iter().position(|t| !t.is_finite()) {
        return Err(MrfError::Schema {
            path: format!("theta[{k}]"),
            msg: "non-finite value".into(),
        });
    }
    if theta.len() != p * (p + 1) / 2 {
        return Err(MrfError::Schema {
            path: "theta".into(),
            msg: format!(
                "expected {} entries for p = {p}, found {}",
                p * (p + 1) / 2,
                theta.len()
            ),
        });
    }
    let file = ModelFile {
        format_version: FORMAT_VERSION.into(),
        p,
        theta: theta.to_vec(),
    };
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_model_json(reader: impl Read) -> Result<ModelParams> {
    let file: ModelFile = from_json(reader)?;
    check_version(&file.format_version)?;
    if file.theta.is_empty() {
        return Err(MrfError::Schema {
            path: "theta".into(),
            msg: "empty parameter vector".into(),
        });
    }
    ModelParams::new(file.p, file.theta).map_err(|e| MrfError::Schema {
        path: "theta".into(),
        msg: e.to_string(),
    })
}

pub fn save_model(path: impl AsRef<Path>, theta: &ModelParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model_json(&mut w, theta.p(), theta.theta())?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_model_json(BufReader::new(File::open(path)?))
}

/// Everything needed to replay a `learn` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: String,
    pub experiment: String,
    pub data: Option<PathBuf>,
    pub impute_missing: bool,
    pub trace: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub rng: String,
    pub spg: SpgConfig,
}

impl RunConfig {
    pub fn new(experiment: impl Into<String>, spg: SpgConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION.into(),
            experiment: experiment.into(),
            data: None,
            impute_missing: false,
            trace: None,
            model_out: None,
            rng: RNG_ALGORITHM.into(),
            spg,
        }
    }
}

pub fn write_run_config(mut w: impl Write, cfg: &RunConfig) -> Result<()> {
    cfg.spg.validate()?;
    serde_json::to_writer_pretty(&mut w, cfg)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_run_config(reader: impl Read) -> Result<RunConfig> {
    let cfg: RunConfig = from_json(reader)?;
    check_version(&cfg.format_version)?;
    cfg.spg.validate().map_err(|e| MrfError::Schema {
        path: "spg".into(),
        msg: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn save_run_config(path: impl AsRef<Path>, cfg: &RunConfig) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_run_config(&mut w, cfg)?;
    w.flush()?;
    Ok(())
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    read_run_config(BufReader::new(File::open(path)?))
}

/// One row of a trace CSV: `iter,tau,gnorm,asym_bound,time_ms[,exact_obj][,auc]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub tau: usize,
    pub gnorm: f64,
    pub asym_bound: f64,
    /// Left empty unless wall-clock timing was requested.
    pub time_ms: Option<f64>,
    pub exact_obj: Option<f64>,
    pub auc: Option<f64>,
}

impl TraceRow {
    pub fn from_record(r: &IterateRecord, wall_clock: bool) -> Self {
        Self {
            iter: r.iter,
            tau: r.tau,
            gnorm: r.g_norm,
            asym_bound: r.asym_bound,
            time_ms: wall_clock.then_some(r.time_ms),
            exact_obj: r.exact.as_ref().map(|e| e.objective),
            auc: None,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Optional columns are emitted when the first row has them.
pub fn write_trace(mut w: impl Write, rows: &[TraceRow]) -> Result<()> {
    let with_obj = rows.first().is_some_and(|r| r.exact_obj.is_some());
    let with_auc = rows.first().is_some_and(|r| r.auc.is_some());
    let mut header = String::from("iter,tau,gnorm,asym_bound,time_ms");
    if with_obj {
        header.push_str(",exact_obj");
    }
    if with_auc {
        header.push_str(",auc");
    }
    writeln!(w, "{header}")?;
    for r in rows {
        let mut line = format!("{},{},{},{},{}", r.iter, r.tau, r.gnorm, r.asym_bound, opt(r.time_ms));
        if with_obj {
            line.push(',');
            line.push_str(&opt(r.exact_obj));
        }
        if with_auc {
            line.push(',');
            line.push_str(&opt(r.auc));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace(reader: impl Read) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = ["iter", "tau", "gnorm", "asym_bound", "time_ms"];
    for (k, name) in required.iter().enumerate() {
        if col(name) != Some(k) {
            return Err(MrfError::Parse {
                line: 1,
                msg: format!("expected column `{name}` at position {}", k + 1),
            });
        }
    }
    let (obj_col, auc_col) = (col("exact_obj"), col("auc"));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize| -> Result<Option<f64>> {
            match rec.get(k).unwrap_or("") {
                "" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|e| MrfError::Parse {
                    line,
                    msg: format!("column {}: {e}", k + 1),
                }),
            }
        };
        let int = |k: usize| -> Result<usize> {
            rec.get(k).unwrap_or("").parse::<usize>().map_err(|e| MrfError::Parse {
                line,
                msg: format!("column {}: {e}", k + 1),
            })
        };
        let need = |k: usize| -> Result<f64> {
            num(k)?.ok_or_else(|| MrfError::Parse {
                line,
                msg: format!("column {} is empty", k + 1),
            })
        };
        rows.push(TraceRow {
            iter: int(0)?,
            tau: int(1)?,
            gnorm: need(2)?,
            asym_bound: need(3)?,
            time_ms: num(4)?,
            exact_obj: obj_col.map(&num).transpose()?.flatten(),
            auc: auc_col.map(&num).transpose()?.flatten(),
        });
    }
    Ok(rows)
}
