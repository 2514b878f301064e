//! Model definition files.
//!
//! Models are TOML documents with `[carriers]`, `[snapshots]`, `[generators.<id>]`,
//! `[converters.<id>]`, `[stores.<id>]`, `[loads.<id>]` and `[co2]` sections. Any
//! time-series field takes a scalar, an inline array, or a `"file.csv#column"` reference
//! resolved relative to the model file. CSV series have one header row and an ISO-8601
//! timestamp in the first column.

use super::{EnergyModel, SnapshotSet, TimeSeries, DEFAULT_PERIOD_HOURS};
use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub(crate) const DEFAULT_START: &str = "2030-01-01T00:00:00";
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("time series reference `{reference}`: {reason}")]
    SeriesRef { reference: String, reason: String },
    #[error("cannot serialise model: {0}")]
    Serialize(String),
}

/// On-disk shape of `[snapshots]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SnapshotsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<TimeSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    period_hours: Option<f64>,
}

impl TryFrom<SnapshotsDoc> for SnapshotSet {
    type Error = String;

    fn try_from(doc: SnapshotsDoc) -> Result<Self, Self::Error> {
        let weights = doc.weights.unwrap_or(TimeSeries::Constant(1.0));
        let n = match (&doc.timestamps, doc.count, &weights) {
            (Some(ts), _, _) => ts.len(),
            (None, Some(n), _) => n,
            (None, None, TimeSeries::Profile(w)) => w.len(),
            (None, None, TimeSeries::Constant(_)) => {
                return Err("snapshots need `timestamps`, `count` or a weight profile".into())
            }
        };
        if !weights.fits(n) {
            return Err(format!(
                "snapshot weights have {} entries, expected {n}",
                weights.raw().len()
            ));
        }
        let timestamps = match doc.timestamps {
            Some(ts) => ts,
            None => {
                let start = doc.start.as_deref().unwrap_or(DEFAULT_START);
                NaiveDateTime::parse_from_str(start, TIMESTAMP_FORMAT)
                    .map_err(|e| format!("invalid snapshot start `{start}`: {e}"))?;
                generate_timestamps(start, doc.step_hours.unwrap_or(1.0), n)
            }
        };
        Ok(SnapshotSet {
            timestamps,
            weights: weights.values(n),
            period_hours: doc.period_hours.unwrap_or(DEFAULT_PERIOD_HOURS),
        })
    }
}

impl From<SnapshotSet> for SnapshotsDoc {
    fn from(s: SnapshotSet) -> Self {
        SnapshotsDoc {
            timestamps: Some(s.timestamps),
            count: None,
            start: None,
            step_hours: None,
            weights: Some(TimeSeries::Profile(s.weights)),
            period_hours: Some(s.period_hours),
        }
    }
}

pub(crate) fn generate_timestamps(start: &str, step_hours: f64, n: usize) -> Vec<String> {
    let origin = NaiveDateTime::parse_from_str(start, TIMESTAMP_FORMAT)
        .expect("timestamp origin is validated by the caller");
    let step = Duration::seconds((step_hours * 3600.0).round() as i64);
    (0..n)
        .map(|i| (origin + step * i as i32).format(TIMESTAMP_FORMAT).to_string())
        .collect()
}

/// Reads and parses a model file, resolving CSV series references next to it.
pub fn load_model(path: impl AsRef<Path>) -> Result<EnergyModel, ModelIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_model(&text, &base, &path.display().to_string())
}

/// Parses a model document; CSV references resolve relative to `base_dir`.
pub fn load_model_str(text: &str, base_dir: impl AsRef<Path>) -> Result<EnergyModel, ModelIoError> {
    parse_model(text, base_dir.as_ref(), "<string>")
}

fn parse_model(text: &str, base: &Path, label: &str) -> Result<EnergyModel, ModelIoError> {
    let mut value: toml::Value = toml::from_str(text).map_err(|e| ModelIoError::Parse {
        path: label.to_string(),
        message: e.to_string(),
    })?;
    resolve_series_refs(&mut value, base)?;
    value.try_into().map_err(|e: toml::de::Error| ModelIoError::Parse {
        path: label.to_string(),
        message: e.to_string(),
    })
}

/// Replaces every `"file.csv#column"` string in `value` by the referenced column.
pub fn resolve_series_refs(value: &mut toml::Value, base: &Path) -> Result<(), ModelIoError> {
    let mut cache: HashMap<PathBuf, csv_table::Table> = HashMap::new();
    resolve_inner(value, base, &mut cache)
}

fn resolve_inner(
    value: &mut toml::Value,
    base: &Path,
    cache: &mut HashMap<PathBuf, csv_table::Table>,
) -> Result<(), ModelIoError> {
    match value {
        toml::Value::String(s) => {
            if let Some((file, column)) = split_series_ref(s) {
                let reference = s.clone();
                let path = base.join(file);
                if !cache.contains_key(&path) {
                    let table = csv_table::read(&path).map_err(|reason| ModelIoError::SeriesRef {
                        reference: reference.clone(),
                        reason,
                    })?;
                    cache.insert(path.clone(), table);
                }
                let column = cache[&path].column(column).map_err(|reason| {
                    ModelIoError::SeriesRef {
                        reference: reference.clone(),
                        reason,
                    }
                })?;
                *value = toml::Value::Array(column.into_iter().map(toml::Value::Float).collect());
            }
        }
        toml::Value::Array(items) => {
            for item in items {
                resolve_inner(item, base, cache)?;
            }
        }
        toml::Value::Table(table) => {
            for (_, item) in table.iter_mut() {
                resolve_inner(item, base, cache)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn split_series_ref(s: &str) -> Option<(&str, &str)> {
    let (file, column) = s.rsplit_once('#')?;
    (file.ends_with(".csv") && !column.is_empty()).then_some((file, column))
}

/// Serialises a model back to its TOML document form, with all series inlined.
pub fn to_toml_string(model: &EnergyModel) -> Result<String, ModelIoError> {
    toml::to_string(model).map_err(|e| ModelIoError::Serialize(e.to_string()))
}

mod csv_table {
    use std::path::Path;

    pub struct Table {
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
    }

    pub fn read(path: &Path) -> Result<Table, String> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
        let headers = reader
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(|c| c.trim().to_string()).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Table { headers, rows })
    }

    impl Table {
        pub fn column(&self, name: &str) -> Result<Vec<f64>, String> {
            let idx = self
                .headers
                .iter()
                .skip(1)
                .position(|h| h == name)
                .map(|i| i + 1)
                .ok_or_else(|| format!("no column named `{name}`"))?;
            self.rows
                .iter()
                .enumerate()
                .map(|(line, row)| {
                    let cell = row.get(idx).ok_or_else(|| format!("row {} is short", line + 2))?;
                    cell.parse::<f64>()
                        .map_err(|_| format!("row {}: `{cell}` is not a number", line + 2))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
[carriers.elec]
unit = "MWh_el"
is_electricity = true

[snapshots]
count = 3
weights = 2.0
period_hours = 6

[generators.solar]
carrier = "elec"
availability = "profiles.csv#solar"
capacity_existing = 100

[loads.demand]
carrier = "elec"
profile = [10, 20, 30]
"#;

    #[test]
    fn csv_references_are_inlined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("profiles.csv"),
            "timestamp,solar\n2030-01-01T00:00:00,0.0\n2030-01-01T01:00:00,0.5\n2030-01-01T02:00:00,1\n",
        )
        .unwrap();
        let m = load_model_str(DOC, dir.path()).unwrap();
        assert_eq!(
            m.generators["solar"].availability,
            TimeSeries::Profile(vec![0.0, 0.5, 1.0])
        );
        assert_eq!(m.snapshots.weights, vec![2.0; 3]);
        assert_eq!(m.snapshots.timestamps[2], "2030-01-01T02:00:00");
    }

    #[test]
    fn missing_column_names_the_reference() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("profiles.csv"), "timestamp,wind\nx,1\n").unwrap();
        let err = load_model_str(DOC, dir.path()).unwrap_err().to_string();
        assert!(err.contains("profiles.csv#solar"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = load_model_str("[carriers\nx = 1", ".").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        assert!(err.contains("column"), "{err}");
    }

    #[test]
    fn round_trip_preserves_model() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("profiles.csv"),
            "timestamp,solar\na,0.1\nb,0.2\nc,0.3\n",
        )
        .unwrap();
        let m = load_model_str(DOC, dir.path()).unwrap();
        let text = to_toml_string(&m).unwrap();
        assert_eq!(load_model_str(&text, ".").unwrap(), m);
    }
}
