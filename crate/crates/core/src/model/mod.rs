//! In-memory representation of a single-region, multi-carrier energy system.
//!
//! Carriers are the nodes of the energy hypergraph. Generators inject into one carrier,
//! converters move energy between carriers through a column of the lossy incidence matrix,
//! stores shift a carrier in time and loads withdraw it. Every component is keyed by a
//! unique id; the maps keep file order so that LP columns, rows and every report are
//! emitted deterministically.
//!
//! Converter capacity is always denominated on the input port: a converter with capacity
//! `F` draws at most `availability * F` units of its input carrier per hour and produces
//! `coefficient * flow` on each output port.

mod io;
mod validate;

pub use io::{load_model, load_model_str, resolve_series_refs, to_toml_string, ModelIoError};
pub use validate::{validate, Diagnostic};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Id suffix of the generator created for every sheddable load.
pub const SHED_SUFFIX: &str = "_shed";
/// Id of the store created from a [`Co2Policy`].
pub const ATMOSPHERE_ID: &str = "co2_atmosphere";
/// Default value of lost load, currency/MWh.
pub const DEFAULT_SHED_PRICE: f64 = 2000.0;
/// Default length of a modelled period in hours.
pub const DEFAULT_PERIOD_HOURS: f64 = 8760.0;

/// A per-snapshot quantity that is either constant or given as a full profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSeries {
    Constant(f64),
    Profile(Vec<f64>),
}

impl TimeSeries {
    pub fn at(&self, snapshot: usize) -> f64 {
        match self {
            TimeSeries::Constant(v) => *v,
            TimeSeries::Profile(values) => values[snapshot],
        }
    }

    /// Whether the series can be evaluated on `n` snapshots.
    pub fn fits(&self, n: usize) -> bool {
        match self {
            TimeSeries::Constant(_) => true,
            TimeSeries::Profile(values) => values.len() == n,
        }
    }

    pub fn values(&self, n: usize) -> Vec<f64> {
        (0..n).map(|t| self.at(t)).collect()
    }

    /// Iterates over the explicitly stored values (a single value for constants).
    pub fn raw(&self) -> &[f64] {
        match self {
            TimeSeries::Constant(v) => std::slice::from_ref(v),
            TimeSeries::Profile(values) => values,
        }
    }

    pub fn max(&self) -> f64 {
        self.raw().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Default for TimeSeries {
    fn default() -> Self {
        TimeSeries::Constant(1.0)
    }
}

impl From<f64> for TimeSeries {
    fn from(v: f64) -> Self {
        TimeSeries::Constant(v)
    }
}

impl From<Vec<f64>> for TimeSeries {
    fn from(v: Vec<f64>) -> Self {
        TimeSeries::Profile(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Carrier {
    pub unit: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_electricity: bool,
}

/// Ordered snapshots with their durations `w_t` in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "io::SnapshotsDoc", into = "io::SnapshotsDoc")]
pub struct SnapshotSet {
    pub timestamps: Vec<String>,
    pub weights: Vec<f64>,
    /// Configured period duration the weights must sum to.
    pub period_hours: f64,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn weight(&self, snapshot: usize) -> f64 {
        self.weights[snapshot]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub carrier: String,
    #[serde(default)]
    pub marginal_cost: f64,
    #[serde(default)]
    pub capital_cost: f64,
    #[serde(default)]
    pub capacity_existing: f64,
    #[serde(default)]
    pub capacity_min: f64,
    #[serde(default = "infinity")]
    pub capacity_max: f64,
    #[serde(default)]
    pub availability: TimeSeries,
    /// Annual generation volume cap in MWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_limit: Option<f64>,
    /// tCO2 emitted per unit of output, booked on the policy's CO2 carrier.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub co2_intensity: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub extendable: bool,
}

impl GeneratorSpec {
    pub fn new(carrier: &str, marginal_cost: f64, capacity: f64) -> Self {
        GeneratorSpec {
            carrier: carrier.to_string(),
            marginal_cost,
            capital_cost: 0.0,
            capacity_existing: capacity,
            capacity_min: 0.0,
            capacity_max: f64::INFINITY,
            availability: TimeSeries::Constant(1.0),
            volume_limit: None,
            co2_intensity: 0.0,
            extendable: false,
        }
    }
}

/// One non-zero entry of a converter's incidence column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Port {
    pub carrier: String,
    pub coefficient: TimeSeries,
}

impl Port {
    pub fn new(carrier: &str, coefficient: impl Into<TimeSeries>) -> Self {
        Port {
            carrier: carrier.to_string(),
            coefficient: coefficient.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSpec {
    /// Cost per unit of input drawn.
    #[serde(default)]
    pub marginal_cost: f64,
    /// Annualised cost per MW of input capacity.
    #[serde(default)]
    pub capital_cost: f64,
    #[serde(default)]
    pub capacity_existing: f64,
    #[serde(default)]
    pub capacity_min: f64,
    #[serde(default = "infinity")]
    pub capacity_max: f64,
    #[serde(default)]
    pub availability: TimeSeries,
    pub ports: Vec<Port>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub extendable: bool,
}

impl ConverterSpec {
    /// Single-input converter with the given outputs, fixed capacity and zero costs.
    pub fn new(input: &str, outputs: &[(&str, f64)], capacity: f64) -> Self {
        let mut ports = vec![Port::new(input, -1.0)];
        ports.extend(outputs.iter().map(|(c, eta)| Port::new(c, *eta)));
        ConverterSpec {
            marginal_cost: 0.0,
            capital_cost: 0.0,
            capacity_existing: capacity,
            capacity_min: 0.0,
            capacity_max: f64::INFINITY,
            availability: TimeSeries::Constant(1.0),
            ports,
            extendable: false,
        }
    }

    /// The input port, if exactly one port carries coefficient −1 everywhere.
    pub fn input(&self) -> Option<&Port> {
        let mut inputs = self.ports.iter().filter(|p| is_input_coefficient(&p.coefficient));
        match (inputs.next(), inputs.next()) {
            (Some(p), None) => Some(p),
            _ => None,
        }
    }

    /// Ports other than the input.
    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports
            .iter()
            .filter(|p| !is_input_coefficient(&p.coefficient))
    }

    pub fn port_on(&self, carrier: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.carrier == carrier)
    }
}

fn is_input_coefficient(c: &TimeSeries) -> bool {
    c.raw().iter().all(|&v| v == -1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSpec {
    pub carrier: String,
    #[serde(default)]
    pub capital_cost: f64,
    #[serde(default)]
    pub capacity_existing: f64,
    /// Lower bound on the energy capacity when extendable.
    #[serde(default)]
    pub capacity_min: f64,
    #[serde(default = "infinity")]
    pub capacity_max: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub cyclic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_soc: Option<f64>,
    /// Fraction of the level lost per hour.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub standing_loss: f64,
    #[serde(default = "one")]
    pub charge_efficiency: f64,
    #[serde(default = "one")]
    pub discharge_efficiency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_charger: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_discharger: Option<String>,
    /// Natural inflow in units/h (raw, not normalised). Enables a free spillage variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow: Option<TimeSeries>,
    /// Cumulative-stock store: no lower level bound, capacity enforced on the final level only.
    #[serde(default, skip_serializing_if = "is_false")]
    pub atmosphere: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub extendable: bool,
}

impl StoreSpec {
    pub fn cyclic(carrier: &str, capacity: f64) -> Self {
        StoreSpec {
            carrier: carrier.to_string(),
            capital_cost: 0.0,
            capacity_existing: capacity,
            capacity_min: 0.0,
            capacity_max: f64::INFINITY,
            cyclic: true,
            initial_soc: None,
            standing_loss: 0.0,
            charge_efficiency: 1.0,
            discharge_efficiency: 1.0,
            linked_charger: None,
            linked_discharger: None,
            inflow: None,
            atmosphere: false,
            extendable: false,
        }
    }

    /// Share of the level retained across a snapshot of `hours`.
    pub fn retention(&self, hours: f64) -> f64 {
        (1.0 - self.standing_loss).powf(hours)
    }

    pub fn is_capacity_constrained(&self) -> bool {
        self.linked_charger.is_some() || self.linked_discharger.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub carrier: String,
    pub profile: TimeSeries,
    #[serde(default, skip_serializing_if = "is_false")]
    pub sheddable: bool,
    #[serde(default = "default_shed_price")]
    pub shed_price: f64,
}

impl LoadSpec {
    pub fn new(carrier: &str, profile: impl Into<TimeSeries>) -> Self {
        LoadSpec {
            carrier: carrier.to_string(),
            profile: profile.into(),
            sheddable: false,
            shed_price: DEFAULT_SHED_PRICE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Co2Policy {
    #[serde(default = "default_co2_carrier")]
    pub carrier: String,
    /// Atmosphere capacity in tCO2 per period.
    pub budget: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset_volume: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub carriers: IndexMap<String, Carrier>,
    pub snapshots: SnapshotSet,
    #[serde(default)]
    pub generators: IndexMap<String, GeneratorSpec>,
    #[serde(default)]
    pub converters: IndexMap<String, ConverterSpec>,
    #[serde(default)]
    pub stores: IndexMap<String, StoreSpec>,
    #[serde(default)]
    pub loads: IndexMap<String, LoadSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co2: Option<Co2Policy>,
}

/// Failure to resolve a converter column.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown converter `{0}`")]
    UnknownConverter(String),
    #[error("snapshot {snapshot} out of range ({len} snapshots)")]
    SnapshotOutOfRange { snapshot: usize, len: usize },
}

impl EnergyModel {
    /// Empty model with one electricity carrier `elec` and uniform snapshots.
    pub fn single_carrier(weights: Vec<f64>) -> Self {
        let mut carriers = IndexMap::new();
        carriers.insert(
            "elec".to_string(),
            Carrier {
                unit: "MWh_el".to_string(),
                is_electricity: true,
            },
        );
        let period_hours = weights.iter().sum();
        let timestamps = io::generate_timestamps(
            io::DEFAULT_START,
            1.0,
            weights.len(),
        );
        EnergyModel {
            carriers,
            snapshots: SnapshotSet {
                timestamps,
                weights,
                period_hours,
            },
            generators: IndexMap::new(),
            converters: IndexMap::new(),
            stores: IndexMap::new(),
            loads: IndexMap::new(),
            co2: None,
        }
    }

    /// Adds a non-electricity carrier.
    pub fn with_carrier(mut self, id: &str, unit: &str) -> Self {
        self.carriers.insert(
            id.to_string(),
            Carrier {
                unit: unit.to_string(),
                is_electricity: false,
            },
        );
        self
    }

    /// Whether `generator` is the shedding generator added for a sheddable load.
    pub fn is_shed_generator(&self, generator: &str) -> bool {
        generator
            .strip_suffix(SHED_SUFFIX)
            .is_some_and(|load| self.loads.get(load).is_some_and(|l| l.sheddable))
    }

    pub fn electricity_carrier(&self) -> Option<&str> {
        self.carriers
            .iter()
            .find(|(_, c)| c.is_electricity)
            .map(|(id, _)| id.as_str())
    }

    pub fn co2_carrier(&self) -> Option<&str> {
        self.co2.as_ref().map(|p| p.carrier.as_str())
    }

    /// Resolved incidence column `M_{·,k,t}` of a converter.
    pub fn incidence_column(
        &self,
        converter_id: &str,
        snapshot: usize,
    ) -> Result<Vec<(String, f64)>, ModelError> {
        let conv = self
            .converters
            .get(converter_id)
            .ok_or_else(|| ModelError::UnknownConverter(converter_id.to_string()))?;
        if snapshot >= self.snapshots.len() {
            return Err(ModelError::SnapshotOutOfRange {
                snapshot,
                len: self.snapshots.len(),
            });
        }
        Ok(conv
            .ports
            .iter()
            .map(|p| (p.carrier.clone(), p.coefficient.at(snapshot)))
            .collect())
    }

    /// Whether `id` names any generator, converter, store or load.
    pub fn has_component(&self, id: &str) -> bool {
        self.generators.contains_key(id)
            || self.converters.contains_key(id)
            || self.stores.contains_key(id)
            || self.loads.contains_key(id)
    }

    /// Copy of the model including the components the LP needs beyond the user input:
    /// one shedding generator per sheddable load and the CO2 atmosphere store.
    ///
    /// Idempotent: components that already exist are left untouched.
    pub fn augmented(&self) -> EnergyModel {
        let mut model = self.clone();
        for (load_id, load) in &self.loads {
            if !load.sheddable {
                continue;
            }
            let shed_id = format!("{load_id}{SHED_SUFFIX}");
            if model.generators.contains_key(&shed_id) {
                continue;
            }
            let n = self.snapshots.len();
            let peak = load.profile.values(n).into_iter().fold(0.0, f64::max);
            let availability = if peak > 0.0 {
                TimeSeries::Profile(
                    load.profile.values(n).into_iter().map(|d| d / peak).collect(),
                )
            } else {
                TimeSeries::Constant(0.0)
            };
            model.generators.insert(
                shed_id,
                GeneratorSpec {
                    availability,
                    ..GeneratorSpec::new(&load.carrier, load.shed_price, peak)
                },
            );
        }
        if let Some(policy) = &self.co2 {
            if !model.stores.contains_key(ATMOSPHERE_ID) {
                let extendable = policy.offset_volume > 0.0;
                model.stores.insert(
                    ATMOSPHERE_ID.to_string(),
                    StoreSpec {
                        capital_cost: if extendable { policy.offset_price } else { 0.0 },
                        capacity_existing: policy.budget,
                        capacity_min: policy.budget,
                        capacity_max: policy.budget + policy.offset_volume,
                        cyclic: false,
                        initial_soc: Some(0.0),
                        atmosphere: true,
                        extendable,
                        ..StoreSpec::cyclic(&policy.carrier, policy.budget)
                    },
                );
            }
        }
        model
    }

    /// Total energy withdrawn by loads on `carrier` at `snapshot`, per hour.
    pub fn demand(&self, carrier: &str, snapshot: usize) -> f64 {
        self.loads
            .values()
            .filter(|l| l.carrier == carrier)
            .map(|l| l.profile.at(snapshot))
            .sum()
    }

    /// Ids of stores whose energy is held on `carrier`.
    pub fn stores_on<'a>(&'a self, carrier: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.stores
            .iter()
            .filter(move |(_, s)| s.carrier == carrier)
            .map(|(id, _)| id.as_str())
    }
}

fn infinity() -> f64 {
    f64::INFINITY
}

fn one() -> f64 {
    1.0
}

fn default_shed_price() -> f64 {
    DEFAULT_SHED_PRICE
}

fn default_co2_carrier() -> String {
    "co2".to_string()
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}
