use super::{Capacity, CapacityMap, Column, ComponentRef, LpProblem, Mode, Row, RowTag, VarKey};
use crate::model::{validate, Diagnostic, EnergyModel};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("model is invalid:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("model has no snapshots")]
    EmptySnapshots,
    #[error("dispatch_only mode needs a fixed capacity for extendable component `{0}`")]
    MissingCapacity(String),
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

struct Builder {
    columns: Vec<Column>,
    rows: Vec<Row>,
    col_index: HashMap<VarKey, usize>,
    row_index: HashMap<RowTag, usize>,
}

impl Builder {
    fn col(&mut self, key: VarKey, cost: f64, lower: f64, upper: f64) -> usize {
        let idx = self.columns.len();
        self.columns.push(Column {
            key,
            cost,
            lower,
            upper,
        });
        self.col_index.insert(key, idx);
        idx
    }

    fn row(&mut self, tag: RowTag, lower: f64, upper: f64, coefficients: Vec<(usize, f64)>) {
        self.row_index.insert(tag, self.rows.len());
        self.rows.push(Row {
            tag,
            lower,
            upper,
            coefficients,
        });
    }

    /// Upper bound row `x − a·C ≤ 0` (variable capacity) or `x ≤ a·C`.
    fn upper(&mut self, tag: RowTag, x: usize, a: f64, cap: Capacity) {
        match cap {
            Capacity::Variable(c) => self.row(tag, f64::NEG_INFINITY, 0.0, vec![(x, 1.0), (c, -a)]),
            Capacity::Fixed(v) => self.row(tag, f64::NEG_INFINITY, a * v, vec![(x, 1.0)]),
        }
    }
}

/// Assembles the LP. The model is augmented first (load shedding, CO2 atmosphere).
pub fn build_lp(
    model: &EnergyModel,
    mode: Mode,
    fixed_capacities: Option<&CapacityMap>,
) -> Result<LpProblem, BuildError> {
    let model = model.augmented();
    let diagnostics = validate(&model);
    if !diagnostics.is_empty() {
        return Err(BuildError::Invalid(diagnostics));
    }
    let n = model.snapshots.len();
    if n == 0 {
        return Err(BuildError::EmptySnapshots);
    }
    let w = &model.snapshots.weights;

    let mut b = Builder {
        columns: Vec::new(),
        rows: Vec::new(),
        col_index: HashMap::new(),
        row_index: HashMap::new(),
    };
    let mut capacities = HashMap::new();

    // Capacity columns come first so the bound rows below can reference them.
    let mut resolve = |b: &mut Builder,
                       comp: ComponentRef,
                       id: &str,
                       extendable: bool,
                       existing: f64,
                       capital_cost: f64,
                       bounds: (f64, f64)|
     -> Result<(), BuildError> {
        let cap = match (mode, extendable) {
            (Mode::Expansion, true) => {
                let c = b.col(
                    VarKey::Capacity(comp),
                    capital_cost,
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                );
                b.row(RowTag::CapLower(comp), bounds.0, f64::INFINITY, vec![(c, 1.0)]);
                if bounds.1.is_finite() {
                    b.row(RowTag::CapUpper(comp), f64::NEG_INFINITY, bounds.1, vec![(c, 1.0)]);
                }
                Capacity::Variable(c)
            }
            (Mode::DispatchOnly, true) => Capacity::Fixed(
                fixed_capacities
                    .and_then(|m| m.get(id))
                    .copied()
                    .ok_or_else(|| BuildError::MissingCapacity(id.to_string()))?,
            ),
            (_, false) => Capacity::Fixed(
                fixed_capacities
                    .and_then(|m| m.get(id))
                    .copied()
                    .unwrap_or(existing),
            ),
        };
        capacities.insert(comp, cap);
        Ok(())
    };
    for (i, (id, g)) in model.generators.iter().enumerate() {
        resolve(
            &mut b,
            ComponentRef::Generator(i),
            id,
            g.extendable,
            g.capacity_existing,
            g.capital_cost,
            (g.capacity_min, g.capacity_max),
        )?;
    }
    for (i, (id, c)) in model.converters.iter().enumerate() {
        resolve(
            &mut b,
            ComponentRef::Converter(i),
            id,
            c.extendable,
            c.capacity_existing,
            c.capital_cost,
            (c.capacity_min, c.capacity_max),
        )?;
    }
    for (i, (id, s)) in model.stores.iter().enumerate() {
        resolve(
            &mut b,
            ComponentRef::Store(i),
            id,
            s.extendable,
            s.capacity_existing,
            s.capital_cost,
            (s.capacity_min, s.capacity_max),
        )?;
    }

    let carrier_of = |c: &str| model.carriers.get_index_of(c).expect("validated carrier");
    let co2 = model.co2_carrier().map(carrier_of);
    // Balance-row entries collected per (carrier, snapshot).
    let mut balance: HashMap<(usize, usize), Vec<(usize, f64)>> = HashMap::new();
    let mut rhs: HashMap<(usize, usize), f64> = HashMap::new();

    for (i, g) in model.generators.values().enumerate() {
        let cap = capacities[&ComponentRef::Generator(i)];
        let carrier = carrier_of(&g.carrier);
        let mut volume = Vec::new();
        for t in 0..n {
            let x = b.col(
                VarKey::Dispatch {
                    generator: i,
                    snapshot: t,
                },
                w[t] * g.marginal_cost,
                f64::NEG_INFINITY,
                f64::INFINITY,
            );
            balance.entry((carrier, t)).or_default().push((x, 1.0));
            if g.co2_intensity != 0.0 {
                let c = co2.expect("validated co2 policy");
                balance.entry((c, t)).or_default().push((x, g.co2_intensity));
            }
            b.row(
                RowTag::GenLower {
                    generator: i,
                    snapshot: t,
                },
                0.0,
                f64::INFINITY,
                vec![(x, 1.0)],
            );
            b.upper(
                RowTag::GenUpper {
                    generator: i,
                    snapshot: t,
                },
                x,
                g.availability.at(t),
                cap,
            );
            volume.push((x, w[t]));
        }
        if let Some(limit) = g.volume_limit {
            b.row(RowTag::Volume { generator: i }, f64::NEG_INFINITY, limit, volume);
        }
    }

    for (k, c) in model.converters.values().enumerate() {
        let cap = capacities[&ComponentRef::Converter(k)];
        for t in 0..n {
            let x = b.col(
                VarKey::Flow {
                    converter: k,
                    snapshot: t,
                },
                w[t] * c.marginal_cost,
                f64::NEG_INFINITY,
                f64::INFINITY,
            );
            for p in &c.ports {
                balance
                    .entry((carrier_of(&p.carrier), t))
                    .or_default()
                    .push((x, p.coefficient.at(t)));
            }
            b.row(
                RowTag::ConvLower {
                    converter: k,
                    snapshot: t,
                },
                0.0,
                f64::INFINITY,
                vec![(x, 1.0)],
            );
            b.upper(
                RowTag::ConvUpper {
                    converter: k,
                    snapshot: t,
                },
                x,
                c.availability.at(t),
                cap,
            );
        }
    }

    for (s, store) in model.stores.iter().map(|(_, s)| s).enumerate() {
        let cap = capacities[&ComponentRef::Store(s)];
        let carrier = carrier_of(&store.carrier);
        let levels: Vec<usize> = (0..=n)
            .map(|step| {
                b.col(
                    VarKey::Level { store: s, step },
                    0.0,
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                )
            })
            .collect();
        for t in 0..n {
            let entry = balance.entry((carrier, t)).or_default();
            entry.push((levels[t + 1], -1.0 / w[t]));
            entry.push((levels[t], store.retention(w[t]) / w[t]));
            if let Some(inflow) = &store.inflow {
                *rhs.entry((carrier, t)).or_default() -= inflow.at(t);
                let spill = b.col(
                    VarKey::Spill {
                        store: s,
                        snapshot: t,
                    },
                    0.0,
                    0.0,
                    f64::INFINITY,
                );
                balance.entry((carrier, t)).or_default().push((spill, -1.0));
            }
            let tag_lower = RowTag::SocLower {
                store: s,
                snapshot: t,
            };
            let tag_upper = RowTag::SocUpper {
                store: s,
                snapshot: t,
            };
            if store.atmosphere {
                // Cumulative stock: only the end-of-period level is capped.
                if t == n - 1 {
                    b.upper(tag_upper, levels[t + 1], 1.0, cap);
                }
            } else {
                b.row(tag_lower, 0.0, f64::INFINITY, vec![(levels[t + 1], 1.0)]);
                b.upper(tag_upper, levels[t + 1], 1.0, cap);
            }
        }
        match store.initial_soc {
            Some(e0) if !store.cyclic => {
                b.row(RowTag::Initial { store: s }, e0, e0, vec![(levels[0], 1.0)])
            }
            _ => b.row(
                RowTag::Cyclic { store: s },
                0.0,
                0.0,
                vec![(levels[n], 1.0), (levels[0], -1.0)],
            ),
        }
    }

    for (c, carrier_id) in model.carriers.keys().enumerate() {
        for t in 0..n {
            let d = model.demand(carrier_id, t) + rhs.get(&(c, t)).copied().unwrap_or(0.0);
            let mut coefficients = balance.remove(&(c, t)).unwrap_or_default();
            merge_duplicates(&mut coefficients);
            b.row(
                RowTag::NodalBalance {
                    carrier: c,
                    snapshot: t,
                },
                d,
                d,
                coefficients,
            );
        }
    }

    Ok(LpProblem {
        model: Arc::new(model),
        mode,
        columns: b.columns,
        rows: b.rows,
        capacities,
        col_index: b.col_index,
        row_index: b.row_index,
    })
}

/// A column may touch the same row twice (e.g. a store whose level step is on one carrier).
fn merge_duplicates(coefficients: &mut Vec<(usize, f64)>) {
    coefficients.sort_by_key(|(c, _)| *c);
    coefficients.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 += later.1;
            true
        } else {
            false
        }
    });
}
