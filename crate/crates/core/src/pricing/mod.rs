//! Bids and asks of every technology on a market carrier, rebuilt from the stationarity
//! conditions of the solved LP.
//!
//! A component's reconstructed price is the value its own dual stationarity condition
//! assigns to the market carrier when none of its bounds binds: dispatching at that price
//! leaves it indifferent. Volumes are the physical ceilings of the snapshot.

mod storage;

pub use storage::{store_level_prices, LevelPrices, MarginalStorageValue, StepRelation};

use crate::lp::SolvedState;
use crate::model::SHED_SUFFIX;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Supply,
    Demand,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Supply => "supply",
            Side::Demand => "demand",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supply" => Ok(Side::Supply),
            "demand" => Ok(Side::Demand),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Generator,
    ConverterOutput,
    ConverterInput,
    StoreLevel,
    Load,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Generator => "generator",
            Origin::ConverterOutput => "converter_output",
            Origin::ConverterInput => "converter_input",
            Origin::StoreLevel => "store_level",
            Origin::Load => "load",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Origin {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "generator" => Origin::Generator,
            "converter_output" => Origin::ConverterOutput,
            "converter_input" => Origin::ConverterInput,
            "store_level" => Origin::StoreLevel,
            "load" => Origin::Load,
            other => return Err(format!("unknown origin `{other}`")),
        })
    }
}

/// One technology's participation on one side of the market in one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidRecord {
    pub technology: String,
    /// Market carrier the price and volumes refer to.
    pub carrier: String,
    pub snapshot: usize,
    pub side: Side,
    pub origin: Origin,
    /// currency/MWh of the market carrier.
    pub price: f64,
    /// Ceiling in market-carrier units per hour.
    pub volume_max: f64,
    pub volume_dispatched: f64,
    /// Marginal storage value of the store behind this record, if any.
    pub msv: Option<f64>,
}

impl BidRecord {
    /// `volume_dispatched / volume_max`, 0 for zero-volume records.
    pub fn utilisation(&self) -> f64 {
        if self.volume_max > 0.0 {
            self.volume_dispatched / self.volume_max
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PricingError {
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unknown carrier `{0}`")]
    UnknownCarrier(String),
    #[error("converter `{converter}` has no output port on `{carrier}`")]
    NoOutputPort { converter: String, carrier: String },
    #[error("converter `{converter}` has zero efficiency on `{carrier}` at snapshot {snapshot}")]
    ZeroEfficiency {
        converter: String,
        carrier: String,
        snapshot: usize,
    },
}

/// Keeps the ceiling consistent with dispatch when the solution charges and discharges a
/// store within one snapshot, which the start-of-snapshot level rule does not foresee.
fn ceiling(rule: f64, dispatched: f64) -> f64 {
    rule.max(0.0).max(dispatched)
}

fn co2_price_at(state: &SolvedState, t: usize) -> f64 {
    state
        .model
        .co2_carrier()
        .and_then(|c| state.prices.get(c))
        .map_or(0.0, |l| l[t])
}

/// Ask of a generator: marginal cost, plus its emissions at the CO2 price, plus the rent
/// of a binding annual volume limit.
pub fn generator_ask(state: &SolvedState, generator: &str, t: usize) -> Result<BidRecord, PricingError> {
    let spec = state
        .model
        .generators
        .get(generator)
        .ok_or_else(|| PricingError::UnknownComponent(generator.to_string()))?;
    let sol = &state.generators[generator];
    let price =
        spec.marginal_cost - spec.co2_intensity * co2_price_at(state, t) + sol.volume_rent;
    Ok(BidRecord {
        technology: generator.to_string(),
        carrier: spec.carrier.clone(),
        snapshot: t,
        side: Side::Supply,
        origin: Origin::Generator,
        price,
        volume_max: spec.availability.at(t) * sol.capacity,
        volume_dispatched: sol.dispatch[t],
        msv: None,
    })
}

/// Ask of a converter on one of its outputs, with every other output credited at its
/// carrier's price:
/// `(λ_in + o − Σ_{m≠j} η_m λ_m) / η_j`.
pub fn converter_ask(
    state: &SolvedState,
    converter: &str,
    output_carrier: &str,
    t: usize,
) -> Result<BidRecord, PricingError> {
    let m = &state.model;
    let spec = m
        .converters
        .get(converter)
        .ok_or_else(|| PricingError::UnknownComponent(converter.to_string()))?;
    let input = spec.input().expect("validated converter");
    let eta_j = spec
        .outputs()
        .find(|p| p.carrier == output_carrier)
        .map(|p| p.coefficient.at(t))
        .ok_or_else(|| PricingError::NoOutputPort {
            converter: converter.to_string(),
            carrier: output_carrier.to_string(),
        })?;
    if eta_j <= 0.0 {
        return Err(PricingError::ZeroEfficiency {
            converter: converter.to_string(),
            carrier: output_carrier.to_string(),
            snapshot: t,
        });
    }
    let credit: f64 = spec
        .outputs()
        .filter(|p| p.carrier != output_carrier)
        .map(|p| p.coefficient.at(t) * state.price(&p.carrier, t))
        .sum();
    let lambda_in = state.price(&input.carrier, t);
    let price = (lambda_in + spec.marginal_cost - credit) / eta_j;

    let sol = &state.converters[converter];
    let dispatched = sol.dispatch[t] * eta_j;
    let mut volume = spec.availability.at(t) * sol.capacity * eta_j;
    let mut msv = None;
    if let Some((store_id, store)) = m
        .stores
        .iter()
        .find(|(_, s)| s.linked_discharger.as_deref() == Some(converter))
    {
        let level = state.stores[store_id.as_str()].level_at(t);
        let soc_term =
            level * eta_j * store.discharge_efficiency / m.snapshots.weight(t);
        volume = ceiling(volume.min(soc_term), dispatched);
    }
    if m.stores_on(&input.carrier).next().is_some() {
        msv = Some(lambda_in);
    }
    Ok(BidRecord {
        technology: converter.to_string(),
        carrier: output_carrier.to_string(),
        snapshot: t,
        side: Side::Supply,
        origin: Origin::ConverterOutput,
        price,
        volume_max: volume,
        volume_dispatched: dispatched,
        msv,
    })
}

/// Willingness to pay of a converter for its input: `Σ η_m λ_m − o` per unit drawn.
pub fn converter_bid(state: &SolvedState, converter: &str, t: usize) -> Result<BidRecord, PricingError> {
    let m = &state.model;
    let spec = m
        .converters
        .get(converter)
        .ok_or_else(|| PricingError::UnknownComponent(converter.to_string()))?;
    let input = spec.input().expect("validated converter");
    let revenue: f64 = spec
        .outputs()
        .map(|p| p.coefficient.at(t) * state.price(&p.carrier, t))
        .sum();
    let price = revenue - spec.marginal_cost;
    let sol = &state.converters[converter];
    let dispatched = sol.dispatch[t];
    let mut volume = spec.availability.at(t) * sol.capacity;
    if let Some((store_id, store)) = m
        .stores
        .iter()
        .find(|(_, s)| s.linked_charger.as_deref() == Some(converter))
    {
        let eta_c = spec
            .port_on(&store.carrier)
            .map_or(1.0, |p| p.coefficient.at(t));
        let s = &state.stores[store_id.as_str()];
        let headroom = (s.capacity - s.level_at(t)).max(0.0);
        let soc_term =
            headroom / (eta_c * store.charge_efficiency) / m.snapshots.weight(t);
        volume = ceiling(volume.min(soc_term), dispatched);
    }
    let co2 = m.co2_carrier();
    let msv = spec
        .outputs()
        .find(|p| Some(p.carrier.as_str()) != co2 && m.stores_on(&p.carrier).next().is_some())
        .map(|p| state.price(&p.carrier, t));
    Ok(BidRecord {
        technology: converter.to_string(),
        carrier: input.carrier.clone(),
        snapshot: t,
        side: Side::Demand,
        origin: Origin::ConverterInput,
        price,
        volume_max: volume,
        volume_dispatched: dispatched,
        msv,
    })
}

/// Supply and demand records of a store held directly on the market carrier. Its price on
/// both sides is the value of carrying a unit into the next snapshot.
fn store_level_records(state: &SolvedState, store_id: &str, t: usize) -> [BidRecord; 2] {
    let m = &state.model;
    let spec = &m.stores[store_id];
    let sol = &state.stores[store_id];
    let n = m.snapshots.len();
    let w = m.snapshots.weight(t);
    let continuation = if t + 1 < n {
        spec.retention(m.snapshots.weight(t + 1)) * state.price(&spec.carrier, t + 1)
    } else if spec.cyclic {
        sol.lambda_cyclic.unwrap_or(0.0)
    } else {
        0.0
    };
    let before = sol.level_at(t);
    let kept = spec.retention(w) * before;
    let after = sol.level_at(t + 1);
    let inflow = spec.inflow.as_ref().map_or(0.0, |f| f.at(t));
    let spill = sol.spill.get(t).copied().unwrap_or(0.0);
    let net = (kept - after) / w + inflow - spill;
    let discharged = net.max(0.0);
    let charged = (-net).max(0.0);
    let supply = BidRecord {
        technology: store_id.to_string(),
        carrier: spec.carrier.clone(),
        snapshot: t,
        side: Side::Supply,
        origin: Origin::StoreLevel,
        price: continuation / spec.discharge_efficiency,
        volume_max: ceiling(before * spec.discharge_efficiency / w + inflow, discharged),
        volume_dispatched: discharged,
        msv: Some(continuation),
    };
    let demand = BidRecord {
        technology: store_id.to_string(),
        carrier: spec.carrier.clone(),
        snapshot: t,
        side: Side::Demand,
        origin: Origin::StoreLevel,
        price: continuation * spec.charge_efficiency,
        volume_max: ceiling(
            (sol.capacity - before).max(0.0) / spec.charge_efficiency / w,
            charged,
        ),
        volume_dispatched: charged,
        msv: Some(continuation),
    };
    [supply, demand]
}

/// All supply and demand records on `market_carrier` at snapshot `t`.
pub fn volume_bids(
    state: &SolvedState,
    t: usize,
    market_carrier: &str,
) -> Result<Vec<BidRecord>, PricingError> {
    let m = &state.model;
    if !m.carriers.contains_key(market_carrier) {
        return Err(PricingError::UnknownCarrier(market_carrier.to_string()));
    }
    let mut out = Vec::new();
    for (id, g) in &m.generators {
        // Shedding is represented by the load's own demand record.
        if g.carrier == market_carrier && !m.is_shed_generator(id) {
            out.push(generator_ask(state, id, t)?);
        }
    }
    for (id, c) in &m.converters {
        let input = c.input().expect("validated converter");
        if input.carrier == market_carrier {
            out.push(converter_bid(state, id, t)?);
        } else if c
            .outputs()
            .any(|p| p.carrier == market_carrier && p.coefficient.at(t) > 0.0)
        {
            out.push(converter_ask(state, id, market_carrier, t)?);
        }
    }
    for (id, s) in &m.stores {
        if s.carrier == market_carrier && !s.atmosphere && !s.is_capacity_constrained() {
            out.extend(store_level_records(state, id, t));
        }
    }
    for (id, load) in &m.loads {
        if load.carrier != market_carrier {
            continue;
        }
        let d = load.profile.at(t);
        let shed = state
            .generators
            .get(&format!("{id}{SHED_SUFFIX}"))
            .map_or(0.0, |g| g.dispatch[t]);
        out.push(BidRecord {
            technology: id.clone(),
            carrier: load.carrier.clone(),
            snapshot: t,
            side: Side::Demand,
            origin: Origin::Load,
            price: load.shed_price,
            volume_max: d,
            volume_dispatched: (d - shed).max(0.0),
            msv: None,
        });
    }
    Ok(out)
}

/// Stationarity residual of the column behind `record`, per snapshot-hour, rebuilt from
/// the record's price and the unit's bound multipliers. `None` for records without a
/// single dispatch column (stores and loads).
pub fn record_residual(state: &SolvedState, record: &BidRecord) -> Option<f64> {
    let t = record.snapshot;
    let unit = |sol: &crate::lp::UnitSolution| sol.mu_lower[t] - sol.mu_upper[t];
    match record.origin {
        Origin::Generator => {
            let spec = &state.model.generators[record.technology.as_str()];
            let lambda = state.price(&spec.carrier, t);
            Some(record.price - lambda + unit(&state.generators[record.technology.as_str()]))
        }
        Origin::ConverterOutput | Origin::ConverterInput => {
            let spec = &state.model.converters[record.technology.as_str()];
            let sol = &state.converters[record.technology.as_str()];
            let input = spec.input()?;
            if record.origin == Origin::ConverterInput {
                Some(state.price(&input.carrier, t) - record.price + unit(sol))
            } else {
                // The ask is quoted per unit of output on the market carrier.
                let eta = spec.port_on(&record.carrier)?.coefficient.at(t);
                Some(eta * (record.price - state.price(&record.carrier, t)) + unit(sol))
            }
        }
        Origin::StoreLevel | Origin::Load => None,
    }
}

/// Records for every snapshot, in snapshot order then model order.
pub fn reconstruct_all(state: &SolvedState, market_carrier: &str) -> Result<Vec<BidRecord>, PricingError> {
    let per_snapshot: Result<Vec<Vec<BidRecord>>, PricingError> = (0..state.snapshot_count())
        .into_par_iter()
        .map(|t| volume_bids(state, t, market_carrier))
        .collect();
    Ok(per_snapshot?.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests;
