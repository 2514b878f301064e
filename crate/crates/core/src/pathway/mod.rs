//! Myopic transition runs: one expansion solve per planning year, each seeing only its own
//! year, with built capacity carried into later years until it retires.

mod config;

pub use config::{load_pathway, parse_pathway, PathwayConfig, Retrofit, YearSpec};

use crate::analysis::{analyze, pearson, setter_agreement, Analysis, AnalysisOptions};
use crate::lp::{build_lp, solve, CapacityMap, LpBackend, LpError, Mode, SolvedState};
use crate::model::{load_model, EnergyModel, ModelIoError, ATMOSPHERE_ID};
use crate::pricing::PricingError;
use indexmap::IndexMap;

#[derive(Debug, thiserror::Error)]
pub enum PathwayError {
    #[error("pathway config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] ModelIoError),
    #[error("year {year}: {source}")]
    Solve {
        year: String,
        #[source]
        source: LpError,
    },
    #[error("year {year}: {source}")]
    Analysis {
        year: String,
        #[source]
        source: PricingError,
    },
}

impl PathwayError {
    pub fn lp_error(&self) -> Option<&LpError> {
        match self {
            PathwayError::Solve { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Capacity built in one year, retiring when its lifetime runs out.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Vintage {
    built: i32,
    capacity: f64,
}

#[derive(Debug, Clone)]
pub struct YearResult {
    pub label: String,
    pub year: i32,
    /// The model solved this year, with overrides and carryover applied.
    pub model: EnergyModel,
    pub state: SolvedState,
    pub analysis: Analysis,
    /// Lower bounds carried over from earlier years, per component.
    pub carryover: CapacityMap,
    pub budget: Option<f64>,
    pub emissions: Option<f64>,
    pub co2_price: f64,
}

impl YearResult {
    /// Emissions within the atmosphere capacity, budget plus any bought offsets.
    pub fn within_budget(&self, tol: f64) -> bool {
        match (self.emissions, self.state.stores.get(ATMOSPHERE_ID)) {
            (Some(e), Some(atm)) => e <= atm.capacity + tol,
            _ => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathwayResult {
    pub years: Vec<YearResult>,
}

fn lifetime_of(config: &PathwayConfig, id: &str) -> f64 {
    config.lifetimes.get(id).copied().unwrap_or(f64::INFINITY)
}

fn merge(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Base model with the overrides of every year up to and including `upto` applied in order.
fn year_model(
    base: &toml::Value,
    config: &PathwayConfig,
    upto: usize,
) -> Result<EnergyModel, PathwayError> {
    let mut value = base.clone();
    for spec in &config.years[..=upto] {
        merge(&mut value, &toml::Value::Table(spec.overrides.clone()));
    }
    let mut model: EnergyModel = value
        .try_into()
        .map_err(|e: toml::de::Error| PathwayError::Config(format!("year {}: {e}", config.years[upto].label)))?;
    if let Some(budget) = config.years[..=upto].iter().rev().find_map(|y| y.co2_budget) {
        match model.co2.as_mut() {
            Some(policy) => policy.budget = budget,
            None => {
                return Err(PathwayError::Config(format!(
                    "year {}: co2_budget given but the model has no [co2] policy",
                    config.years[upto].label
                )))
            }
        }
    }
    // Fixed fleets move on retrofit and stay moved; optimised capacity moves with its vintages.
    for r in config.years[..=upto].iter().flat_map(|y| &y.retrofits) {
        move_fixed(&mut model, r).map_err(PathwayError::Config)?;
    }
    // Phase-outs persist once announced.
    for id in config.years[..=upto].iter().flat_map(|y| &y.phase_out) {
        force_zero(&mut model, id).map_err(PathwayError::Config)?;
    }
    Ok(model)
}

/// `(existing, min, max, extendable)` capacity fields of a component.
fn capacity_fields<'a>(
    model: &'a mut EnergyModel,
    id: &str,
) -> Option<(&'a mut f64, &'a mut f64, &'a mut f64, bool)> {
    if let Some(g) = model.generators.get_mut(id) {
        Some((&mut g.capacity_existing, &mut g.capacity_min, &mut g.capacity_max, g.extendable))
    } else if let Some(c) = model.converters.get_mut(id) {
        Some((&mut c.capacity_existing, &mut c.capacity_min, &mut c.capacity_max, c.extendable))
    } else {
        model
            .stores
            .get_mut(id)
            .map(|s| (&mut s.capacity_existing, &mut s.capacity_min, &mut s.capacity_max, s.extendable))
    }
}

fn move_fixed(model: &mut EnergyModel, r: &Retrofit) -> Result<(), String> {
    if !model.has_component(&r.to) {
        return Err(format!("retrofit into unknown component `{}`", r.to));
    }
    let moved = match capacity_fields(model, &r.from) {
        None => return Err(format!("retrofit of unknown component `{}`", r.from)),
        Some((_, _, _, true)) => return Ok(()),
        Some((existing, _, _, false)) => {
            let m = *existing * r.share;
            *existing -= m;
            m
        }
    };
    if let Some((existing, min, max, extendable)) = capacity_fields(model, &r.to) {
        if extendable {
            *min += moved;
            *max = max.max(*min);
        } else {
            *existing += moved;
        }
    }
    Ok(())
}

fn force_zero(model: &mut EnergyModel, id: &str) -> Result<(), String> {
    let (existing, min, max, _) =
        capacity_fields(model, id).ok_or_else(|| format!("phase-out of unknown component `{id}`"))?;
    *existing = 0.0;
    *min = 0.0;
    *max = 0.0;
    Ok(())
}

/// Sets the lower capacity bound of an extendable component, keeping it feasible.
fn apply_lower_bound(model: &mut EnergyModel, id: &str, lower: f64) {
    let bounds = if let Some(g) = model.generators.get_mut(id).filter(|g| g.extendable) {
        (&mut g.capacity_min, g.capacity_max)
    } else if let Some(c) = model.converters.get_mut(id).filter(|c| c.extendable) {
        (&mut c.capacity_min, c.capacity_max)
    } else if let Some(s) = model.stores.get_mut(id).filter(|s| s.extendable) {
        (&mut s.capacity_min, s.capacity_max)
    } else {
        return;
    };
    *bounds.0 = bounds.0.max(lower).min(bounds.1);
}

fn is_extendable(model: &EnergyModel, id: &str) -> bool {
    model.generators.get(id).map(|g| g.extendable)
        .or_else(|| model.converters.get(id).map(|c| c.extendable))
        .or_else(|| model.stores.get(id).map(|s| s.extendable && !s.atmosphere))
        .unwrap_or(false)
}

/// Solves every planning year in order.
pub fn run_myopic(
    base: &EnergyModel,
    config: &PathwayConfig,
    backend: &dyn LpBackend,
    options: &AnalysisOptions,
) -> Result<PathwayResult, PathwayError> {
    config.check().map_err(PathwayError::Config)?;
    let base_value = toml::Value::try_from(base)
        .map_err(|e| PathwayError::Io(ModelIoError::Serialize(e.to_string())))?;
    let market = match &config.market_carrier {
        Some(c) => c.clone(),
        None => base
            .electricity_carrier()
            .ok_or_else(|| PathwayError::Config("no market carrier".into()))?
            .to_string(),
    };
    let mut vintages: IndexMap<String, Vec<Vintage>> = IndexMap::new();
    let mut years = Vec::with_capacity(config.years.len());
    for (k, spec) in config.years.iter().enumerate() {
        let mut model = year_model(&base_value, config, k)?;

        // Retirements, then retrofits, at the boundary into this year.
        for (id, vs) in vintages.iter_mut() {
            let life = lifetime_of(config, id);
            vs.retain(|v| f64::from(spec.year - v.built) < life);
        }
        vintages.retain(|_, vs| !vs.is_empty());
        for id in &spec.phase_out {
            vintages.shift_remove(id);
        }
        for r in &spec.retrofits {
            let moved: f64 = vintages
                .get_mut(&r.from)
                .map(|vs| {
                    vs.iter_mut()
                        .map(|v| {
                            let m = v.capacity * r.share;
                            v.capacity -= m;
                            m
                        })
                        .sum()
                })
                .unwrap_or(0.0);
            if moved > 0.0 {
                vintages.entry(r.to.clone()).or_default().push(Vintage {
                    built: spec.year,
                    capacity: moved,
                });
            }
        }

        let mut carryover = CapacityMap::new();
        for (id, vs) in &vintages {
            if !is_extendable(&model, id) {
                continue;
            }
            let surviving: f64 = vs.iter().map(|v| v.capacity).sum();
            apply_lower_bound(&mut model, id, surviving);
            carryover.insert(id.clone(), surviving);
        }

        let problem = build_lp(&model, Mode::Expansion, None).map_err(|e| PathwayError::Solve {
            year: spec.label.clone(),
            source: e.into(),
        })?;
        let state = solve(&problem, backend).map_err(|source| PathwayError::Solve {
            year: spec.label.clone(),
            source,
        })?;
        let mut opts = options.clone();
        opts.label = spec.label.clone();
        let analysis = analyze(&state, &market, &opts).map_err(|source| PathwayError::Analysis {
            year: spec.label.clone(),
            source,
        })?;

        // Record what this year added on top of the surviving fleet.
        for (id, cap) in state.capacities() {
            if !is_extendable(&model, &id) {
                continue;
            }
            let vs = vintages.entry(id).or_default();
            let surviving: f64 = vs.iter().map(|v| v.capacity).sum();
            let added = cap - surviving;
            if added > 1e-9 * cap.abs().max(1.0) {
                vs.push(Vintage {
                    built: spec.year,
                    capacity: added,
                });
            }
        }

        years.push(YearResult {
            label: spec.label.clone(),
            year: spec.year,
            budget: model.co2.as_ref().map(|p| p.budget),
            emissions: state.emissions(),
            co2_price: state.co2_price,
            model,
            state,
            analysis,
            carryover,
        });
    }
    Ok(PathwayResult { years })
}

/// Long-term against short-term outcome of one year.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub lt_operational_cost: f64,
    pub st_operational_cost: f64,
    pub cost_relative_diff: f64,
    pub pdc_correlation: f64,
    pub setter_agreement: f64,
}

/// Dispatch-only re-solve of a year with its optimal capacities fixed.
pub fn run_short_term(
    year: &YearResult,
    backend: &dyn LpBackend,
    options: &AnalysisOptions,
) -> Result<(SolvedState, Analysis, Comparison), PathwayError> {
    let caps = year.state.capacities();
    let err = |source: LpError| PathwayError::Solve {
        year: year.label.clone(),
        source,
    };
    let problem = build_lp(&year.model, Mode::DispatchOnly, Some(&caps)).map_err(|e| err(e.into()))?;
    let state = solve(&problem, backend).map_err(err)?;
    let mut opts = options.clone();
    opts.label = year.label.clone();
    let analysis =
        analyze(&state, &year.analysis.market_carrier, &opts).map_err(|source| PathwayError::Analysis {
            year: year.label.clone(),
            source,
        })?;
    let comparison = compare(year, &state, &analysis);
    Ok((state, analysis, comparison))
}

pub fn compare(year: &YearResult, st: &SolvedState, st_analysis: &Analysis) -> Comparison {
    let lt = year.state.operational_cost();
    let stc = st.operational_cost();
    Comparison {
        label: year.label.clone(),
        lt_operational_cost: lt,
        st_operational_cost: stc,
        cost_relative_diff: (stc - lt).abs() / lt.abs().max(1.0),
        pdc_correlation: pearson(&year.analysis.pdc.prices(), &st_analysis.pdc.prices()),
        setter_agreement: setter_agreement(
            &year.analysis.verdicts,
            &st_analysis.verdicts,
            &year.model.snapshots.weights,
        ),
    }
}

/// Emissions recomputed from dispatch and CO2 port coefficients, tCO2 over the period.
pub fn emissions_from_flows(state: &SolvedState) -> Option<f64> {
    let m = &state.model;
    let co2 = m.co2_carrier()?;
    let w = &m.snapshots.weights;
    let gens: f64 = m
        .generators
        .iter()
        .map(|(id, g)| {
            let d = &state.generators[id.as_str()].dispatch;
            (0..w.len()).map(|t| w[t] * g.co2_intensity * d[t]).sum::<f64>()
        })
        .sum();
    let convs: f64 = m
        .converters
        .iter()
        .filter_map(|(id, c)| {
            let port = c.port_on(co2)?;
            let f = &state.converters[id.as_str()].dispatch;
            Some((0..w.len()).map(|t| w[t] * port.coefficient.at(t) * f[t]).sum::<f64>())
        })
        .sum();
    Some(gens + convs)
}

/// Loads the base model named by the config, relative to the config file.
pub fn load_base(config: &PathwayConfig) -> Result<EnergyModel, PathwayError> {
    let path = config
        .base
        .as_ref()
        .ok_or_else(|| PathwayError::Config("missing `base` model path".into()))?;
    Ok(load_model(path)?)
}
