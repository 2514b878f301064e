//! Pathway definition files.
//!
//! ```toml
//! base = "sector_coupled.toml"
//! market_carrier = "elec"
//!
//! [lifetimes]
//! coal = 10
//!
//! [years.2030]
//! co2_budget = 706.0
//! [years.2030.generators.gas_supply]
//! marginal_cost = 24.57
//!
//! [years.2035]
//! co2_budget = 550.0
//! phase_out = ["coal"]
//! retrofit = [{ from = "gas_turbine", to = "h2_turbine" }]
//! ```
//!
//! Year sections hold model overrides in the model file's own layout. Overrides accumulate:
//! a value set in one year holds until a later year changes it.

use crate::model::{resolve_series_refs, ModelIoError};
use indexmap::IndexMap;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Model sections a year may override.
const MODEL_SECTIONS: [&str; 7] = [
    "carriers",
    "snapshots",
    "generators",
    "converters",
    "stores",
    "loads",
    "co2",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Retrofit {
    pub from: String,
    pub to: String,
    /// Share of the surviving capacity moved.
    #[serde(default = "one")]
    pub share: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearSpec {
    pub label: String,
    pub year: i32,
    pub co2_budget: Option<f64>,
    pub phase_out: Vec<String>,
    pub retrofits: Vec<Retrofit>,
    pub overrides: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathwayConfig {
    /// Resolved path of the base model.
    pub base: Option<PathBuf>,
    pub market_carrier: Option<String>,
    /// Years in service per component id; missing ids never retire.
    pub lifetimes: IndexMap<String, f64>,
    pub years: Vec<YearSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    base: Option<String>,
    market_carrier: Option<String>,
    #[serde(default)]
    lifetimes: IndexMap<String, f64>,
    years: toml::Table,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Directives {
    co2_budget: Option<f64>,
    #[serde(default)]
    phase_out: Vec<String>,
    #[serde(default)]
    retrofit: Vec<Retrofit>,
}

impl PathwayConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.years.is_empty() {
            return Err("no years".into());
        }
        for pair in self.years.windows(2) {
            if pair[1].year <= pair[0].year {
                return Err(format!(
                    "years must be strictly increasing: {} after {}",
                    pair[1].label, pair[0].label
                ));
            }
        }
        for y in &self.years {
            if let Some(b) = y.co2_budget {
                if !b.is_finite() || b < 0.0 {
                    return Err(format!("year {}: co2_budget must be finite and non-negative", y.label));
                }
            }
            for r in &y.retrofits {
                if !(0.0..=1.0).contains(&r.share) {
                    return Err(format!("year {}: retrofit share must lie in [0, 1]", y.label));
                }
            }
        }
        for (id, life) in &self.lifetimes {
            if !(*life > 0.0) {
                return Err(format!("lifetime of `{id}` must be positive"));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.years.iter().map(|y| y.label.as_str()).collect()
    }
}

pub fn load_pathway(path: impl AsRef<Path>) -> Result<PathwayConfig, ModelIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_pathway(&text, &base_dir).map_err(|e| match e {
        ModelIoError::Parse { message, .. } => ModelIoError::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

/// Parses a pathway document; paths and CSV references resolve relative to `base_dir`.
pub fn parse_pathway(text: &str, base_dir: &Path) -> Result<PathwayConfig, ModelIoError> {
    let parse_err = |message: String| ModelIoError::Parse {
        path: "<pathway>".into(),
        message,
    };
    let doc: Doc = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let mut years = Vec::new();
    for (label, section) in doc.years {
        let year: i32 = label
            .parse()
            .map_err(|_| parse_err(format!("year label `{label}` is not an integer year")))?;
        let toml::Value::Table(mut table) = section else {
            return Err(parse_err(format!("[years.{label}] must be a table")));
        };
        let mut directives = toml::Table::new();
        for key in ["co2_budget", "phase_out", "retrofit"] {
            if let Some(v) = table.remove(key) {
                directives.insert(key.to_string(), v);
            }
        }
        if let Some(key) = table.keys().find(|k| !MODEL_SECTIONS.contains(&k.as_str())) {
            return Err(parse_err(format!("[years.{label}]: unknown key `{key}`")));
        }
        let d: Directives = toml::Value::Table(directives)
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(format!("[years.{label}]: {e}")))?;
        let mut overrides = toml::Value::Table(table);
        resolve_series_refs(&mut overrides, base_dir)?;
        let toml::Value::Table(overrides) = overrides else {
            unreachable!()
        };
        years.push(YearSpec {
            label,
            year,
            co2_budget: d.co2_budget,
            phase_out: d.phase_out,
            retrofits: d.retrofit,
            overrides,
        });
    }
    years.sort_by_key(|y| y.year);
    Ok(PathwayConfig {
        base: doc.base.map(|b| base_dir.join(b)),
        market_carrier: doc.market_carrier,
        lifetimes: doc.lifetimes,
        years,
    })
}
