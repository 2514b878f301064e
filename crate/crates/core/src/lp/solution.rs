use super::{
    BackendError, Capacity, CapacityMap, ComponentRef, LpBackend, LpProblem, Mode, RawSolution,
    RowTag, SolveStatus, VarKey,
};
use crate::model::EnergyModel;
use indexmap::IndexMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error(transparent)]
    Build(#[from] super::BuildError),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("backend `{0}` does not return duals")]
    MissingDuals(String),
    #[error("solve finished with status {0}")]
    NotOptimal(SolveStatus),
}

impl LpError {
    /// Status of an infeasible or unbounded solve, as opposed to a solver crash.
    pub fn status(&self) -> Option<SolveStatus> {
        match self {
            LpError::NotOptimal(s) => Some(*s),
            _ => None,
        }
    }
}

/// Solution of a generator or converter. Multipliers follow the `μ ≤ 0` convention of
/// the Lagrangian `o − λ + μ̲ − μ̄ = 0` and are per snapshot-hour (already divided by `w`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSolution {
    pub capacity: f64,
    /// Whether the capacity was a decision variable of this solve.
    pub optimised: bool,
    /// Output for generators, input draw for converters, per hour.
    pub dispatch: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    /// Scarcity rent of a binding annual volume limit, currency/MWh, `≥ 0`.
    pub volume_rent: f64,
    pub cap_lower_dual: f64,
    pub cap_upper_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreSolution {
    pub capacity: f64,
    pub optimised: bool,
    /// Level before the first snapshot.
    pub initial_level: f64,
    /// Level at the end of each snapshot.
    pub levels: Vec<f64>,
    pub spill: Vec<f64>,
    /// Multipliers of the bounds on `levels[t]`; not weighted.
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    pub lambda_cyclic: Option<f64>,
    pub lambda_initial: Option<f64>,
    pub cap_lower_dual: f64,
    pub cap_upper_dual: f64,
}

impl StoreSolution {
    /// Level at `step` snapshots into the period (step 0 is the initial level).
    pub fn level_at(&self, step: usize) -> f64 {
        if step == 0 {
            self.initial_level
        } else {
            self.levels[step - 1]
        }
    }
}

/// Primal and dual values of one optimal solve, keyed by component id.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedState {
    /// The augmented model the LP was built from.
    pub model: Arc<EnergyModel>,
    pub mode: Mode,
    pub status: SolveStatus,
    pub objective: f64,
    /// Nodal prices `λ` per carrier and snapshot, currency per carrier unit.
    pub prices: IndexMap<String, Vec<f64>>,
    pub generators: IndexMap<String, UnitSolution>,
    pub converters: IndexMap<String, UnitSolution>,
    pub stores: IndexMap<String, StoreSolution>,
    /// `−λ` of the CO2 carrier at the final snapshot; 0 without a policy.
    pub co2_price: f64,
}

/// Builds the problem's LP in the backend and unpacks the optimal solution.
pub fn solve(problem: &LpProblem, backend: &dyn LpBackend) -> Result<SolvedState, LpError> {
    if !backend.capabilities().returns_duals {
        return Err(LpError::MissingDuals(backend.name().to_string()));
    }
    let raw = backend.solve(problem)?;
    if raw.status != SolveStatus::Optimal {
        return Err(LpError::NotOptimal(raw.status));
    }
    if raw.primal.len() != problem.columns.len() || raw.row_duals.len() != problem.rows.len() {
        return Err(LpError::Backend(BackendError {
            backend: backend.name().to_string(),
            message: "solution dimensions do not match the problem".into(),
        }));
    }
    Ok(SolvedState::from_raw(problem, &raw))
}

impl SolvedState {
    pub fn from_raw(problem: &LpProblem, raw: &RawSolution) -> SolvedState {
        let model = &problem.model;
        let n = model.snapshots.len();
        let w = &model.snapshots.weights;
        let dual = |tag: RowTag| problem.row(tag).map_or(0.0, |r| raw.row_duals[r]);
        let value = |key: VarKey| problem.column(key).map_or(0.0, |c| raw.primal[c]);
        let capacity = |comp: ComponentRef| match problem.capacity(comp) {
            Capacity::Variable(c) => (raw.primal[c], true),
            Capacity::Fixed(v) => (v, false),
        };

        let prices = model
            .carriers
            .keys()
            .enumerate()
            .map(|(c, id)| {
                let lambda = (0..n)
                    .map(|t| {
                        clean(
                            dual(RowTag::NodalBalance {
                                carrier: c,
                                snapshot: t,
                            }) / w[t],
                        )
                    })
                    .collect();
                (id.clone(), lambda)
            })
            .collect::<IndexMap<_, _>>();

        let generators = model
            .generators
            .keys()
            .enumerate()
            .map(|(i, id)| {
                let comp = ComponentRef::Generator(i);
                let (cap, optimised) = capacity(comp);
                let sol = UnitSolution {
                    capacity: cap,
                    optimised,
                    dispatch: (0..n)
                        .map(|t| value(VarKey::Dispatch { generator: i, snapshot: t }))
                        .collect(),
                    mu_lower: (0..n)
                        .map(|t| clean(-dual(RowTag::GenLower { generator: i, snapshot: t }) / w[t]))
                        .collect(),
                    mu_upper: (0..n)
                        .map(|t| clean(dual(RowTag::GenUpper { generator: i, snapshot: t }) / w[t]))
                        .collect(),
                    volume_rent: clean(-dual(RowTag::Volume { generator: i })),
                    cap_lower_dual: clean(-dual(RowTag::CapLower(comp))),
                    cap_upper_dual: clean(dual(RowTag::CapUpper(comp))),
                };
                (id.clone(), sol)
            })
            .collect();

        let converters = model
            .converters
            .keys()
            .enumerate()
            .map(|(k, id)| {
                let comp = ComponentRef::Converter(k);
                let (cap, optimised) = capacity(comp);
                let sol = UnitSolution {
                    capacity: cap,
                    optimised,
                    dispatch: (0..n)
                        .map(|t| value(VarKey::Flow { converter: k, snapshot: t }))
                        .collect(),
                    mu_lower: (0..n)
                        .map(|t| clean(-dual(RowTag::ConvLower { converter: k, snapshot: t }) / w[t]))
                        .collect(),
                    mu_upper: (0..n)
                        .map(|t| clean(dual(RowTag::ConvUpper { converter: k, snapshot: t }) / w[t]))
                        .collect(),
                    volume_rent: 0.0,
                    cap_lower_dual: clean(-dual(RowTag::CapLower(comp))),
                    cap_upper_dual: clean(dual(RowTag::CapUpper(comp))),
                };
                (id.clone(), sol)
            })
            .collect();

        let stores = model
            .stores
            .keys()
            .enumerate()
            .map(|(s, id)| {
                let comp = ComponentRef::Store(s);
                let (cap, optimised) = capacity(comp);
                let sol = StoreSolution {
                    capacity: cap,
                    optimised,
                    initial_level: value(VarKey::Level { store: s, step: 0 }),
                    levels: (1..=n).map(|step| value(VarKey::Level { store: s, step })).collect(),
                    spill: (0..n)
                        .map(|t| value(VarKey::Spill { store: s, snapshot: t }))
                        .collect(),
                    mu_lower: (0..n)
                        .map(|t| clean(-dual(RowTag::SocLower { store: s, snapshot: t })))
                        .collect(),
                    mu_upper: (0..n)
                        .map(|t| clean(dual(RowTag::SocUpper { store: s, snapshot: t })))
                        .collect(),
                    lambda_cyclic: problem
                        .row(RowTag::Cyclic { store: s })
                        .map(|r| clean(raw.row_duals[r])),
                    lambda_initial: problem
                        .row(RowTag::Initial { store: s })
                        .map(|r| clean(raw.row_duals[r])),
                    cap_lower_dual: clean(-dual(RowTag::CapLower(comp))),
                    cap_upper_dual: clean(dual(RowTag::CapUpper(comp))),
                };
                (id.clone(), sol)
            })
            .collect();

        let co2_price = model
            .co2_carrier()
            .and_then(|c| prices.get(c))
            .and_then(|l: &Vec<f64>| l.last())
            .map_or(0.0, |l| clean(-l));

        SolvedState {
            model: problem.model.clone(),
            mode: problem.mode,
            status: raw.status,
            objective: raw.objective,
            prices,
            generators,
            converters,
            stores,
            co2_price,
        }
    }

    pub fn snapshot_count(&self) -> usize {
        self.model.snapshots.len()
    }

    pub fn price(&self, carrier: &str, snapshot: usize) -> f64 {
        self.prices[carrier][snapshot]
    }

    /// Raw (weighted, solver-convention) dual of a tagged row, rebuilt from the
    /// descaled multipliers.
    pub fn row_dual(&self, tag: RowTag) -> f64 {
        let w = |t: usize| self.model.snapshots.weight(t);
        match tag {
            RowTag::NodalBalance { carrier, snapshot } => {
                w(snapshot) * self.prices[carrier][snapshot]
            }
            RowTag::GenLower { generator, snapshot } => {
                -w(snapshot) * self.generators[generator].mu_lower[snapshot]
            }
            RowTag::GenUpper { generator, snapshot } => {
                w(snapshot) * self.generators[generator].mu_upper[snapshot]
            }
            RowTag::ConvLower { converter, snapshot } => {
                -w(snapshot) * self.converters[converter].mu_lower[snapshot]
            }
            RowTag::ConvUpper { converter, snapshot } => {
                w(snapshot) * self.converters[converter].mu_upper[snapshot]
            }
            RowTag::SocLower { store, snapshot } => -self.stores[store].mu_lower[snapshot],
            RowTag::SocUpper { store, snapshot } => self.stores[store].mu_upper[snapshot],
            RowTag::Cyclic { store } => self.stores[store].lambda_cyclic.unwrap_or(0.0),
            RowTag::Initial { store } => self.stores[store].lambda_initial.unwrap_or(0.0),
            RowTag::Volume { generator } => -self.generators[generator].volume_rent,
            RowTag::CapLower(c) => -self.cap_duals(c).0,
            RowTag::CapUpper(c) => self.cap_duals(c).1,
        }
    }

    fn cap_duals(&self, c: ComponentRef) -> (f64, f64) {
        match c {
            ComponentRef::Generator(i) => {
                let g = &self.generators[i];
                (g.cap_lower_dual, g.cap_upper_dual)
            }
            ComponentRef::Converter(i) => {
                let k = &self.converters[i];
                (k.cap_lower_dual, k.cap_upper_dual)
            }
            ComponentRef::Store(i) => {
                let s = &self.stores[i];
                (s.cap_lower_dual, s.cap_upper_dual)
            }
        }
    }

    pub fn column_value(&self, key: VarKey) -> f64 {
        match key {
            VarKey::Dispatch { generator, snapshot } => self.generators[generator].dispatch[snapshot],
            VarKey::Flow { converter, snapshot } => self.converters[converter].dispatch[snapshot],
            VarKey::Level { store, step } => self.stores[store].level_at(step),
            VarKey::Spill { store, snapshot } => self.stores[store].spill[snapshot],
            VarKey::Capacity(ComponentRef::Generator(i)) => self.generators[i].capacity,
            VarKey::Capacity(ComponentRef::Converter(i)) => self.converters[i].capacity,
            VarKey::Capacity(ComponentRef::Store(i)) => self.stores[i].capacity,
        }
    }

    /// `Σ_t w_t (Σ o g + Σ o f)`: the objective without capital terms.
    pub fn operational_cost(&self) -> f64 {
        let m = &self.model;
        let w = &m.snapshots.weights;
        let gens: f64 = m
            .generators
            .values()
            .zip(self.generators.values())
            .map(|(spec, sol)| {
                sol.dispatch.iter().zip(w).map(|(g, w)| w * g).sum::<f64>() * spec.marginal_cost
            })
            .sum();
        let convs: f64 = m
            .converters
            .values()
            .zip(self.converters.values())
            .map(|(spec, sol)| {
                sol.dispatch.iter().zip(w).map(|(f, w)| w * f).sum::<f64>() * spec.marginal_cost
            })
            .sum();
        gens + convs
    }

    /// Installed capacity of every generator, converter and store.
    pub fn capacities(&self) -> CapacityMap {
        self.generators
            .iter()
            .map(|(id, g)| (id.clone(), g.capacity))
            .chain(self.converters.iter().map(|(id, k)| (id.clone(), k.capacity)))
            .chain(self.stores.iter().map(|(id, s)| (id.clone(), s.capacity)))
            .collect()
    }

    /// Net change of the CO2 atmosphere stock over the period, tCO2.
    pub fn emissions(&self) -> Option<f64> {
        self.stores
            .get(crate::model::ATMOSPHERE_ID)
            .map(|s| s.levels.last().copied().unwrap_or(0.0) - s.initial_level)
    }
}

/// Drops solver noise below 1e-12 and normalises `-0.0`.
fn clean(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{build_lp, HighsBackend};
    use crate::model::{GeneratorSpec, LoadSpec};
    use approx::assert_abs_diff_eq;

    fn two_generators(w: f64) -> EnergyModel {
        let mut m = EnergyModel::single_carrier(vec![w]);
        m.generators.insert("a".into(), GeneratorSpec::new("elec", 10.0, 50.0));
        m.generators.insert("b".into(), GeneratorSpec::new("elec", 30.0, 50.0));
        m.loads.insert("demand".into(), LoadSpec::new("elec", 70.0));
        m
    }

    fn solve_model(m: &EnergyModel) -> SolvedState {
        let p = build_lp(m, Mode::Expansion, None).unwrap();
        solve(&p, &HighsBackend::default()).unwrap()
    }

    #[test]
    fn merit_order_price_and_dispatch() {
        let s = solve_model(&two_generators(1.0));
        assert_abs_diff_eq!(s.price("elec", 0), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.generators["a"].dispatch[0], 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.generators["b"].dispatch[0], 20.0, epsilon = 1e-9);
        // Inframarginal rent of the cheap unit sits on its upper bound.
        assert_abs_diff_eq!(s.generators["a"].mu_upper[0], -20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, 50.0 * 10.0 + 20.0 * 30.0, epsilon = 1e-6);
    }

    #[test]
    fn weighting_cancels_in_prices() {
        let s = solve_model(&two_generators(3.0));
        assert_abs_diff_eq!(s.price("elec", 0), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.generators["a"].mu_upper[0], -20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, 3.0 * 1100.0, epsilon = 1e-6);
    }

    #[test]
    fn row_dual_round_trips_raw_duals() {
        let m = two_generators(2.0);
        let p = build_lp(&m, Mode::Expansion, None).unwrap();
        let raw = HighsBackend::default().solve(&p).unwrap();
        let s = SolvedState::from_raw(&p, &raw);
        for (r, row) in p.rows.iter().enumerate() {
            assert_abs_diff_eq!(s.row_dual(row.tag), raw.row_duals[r], epsilon = 1e-9);
        }
    }

    #[test]
    fn infeasible_returns_status_without_duals() {
        let mut m = two_generators(1.0);
        m.loads["demand"].profile = 500.0.into();
        let p = build_lp(&m, Mode::Expansion, None).unwrap();
        let err = solve(&p, &HighsBackend::default()).unwrap_err();
        assert_eq!(err.status(), Some(SolveStatus::Infeasible));
    }
}
