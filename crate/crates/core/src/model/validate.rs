use super::{EnergyModel, TimeSeries};
use std::collections::HashSet;
use std::fmt;

/// A violated model rule, attributed to a component (or section) id.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub component: String,
    pub rule: String,
}

impl Diagnostic {
    fn new(component: impl Into<String>, rule: impl Into<String>) -> Self {
        Diagnostic {
            component: component.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.component, self.rule)
    }
}

const WEIGHT_SUM_RTOL: f64 = 1e-9;

/// Checks every model invariant. An empty result means the model can be turned into an LP.
pub fn validate(model: &EnergyModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = model.snapshots.len();

    match model.carriers.values().filter(|c| c.is_electricity).count() {
        0 => out.push(Diagnostic::new("carriers", "no electricity carrier")),
        1 => {}
        _ => out.push(Diagnostic::new("carriers", "multiple electricity carriers")),
    }

    let snaps = &model.snapshots;
    if snaps.weights.len() != n {
        out.push(Diagnostic::new(
            "snapshots",
            format!("{} weights for {n} timestamps", snaps.weights.len()),
        ));
    }
    for (ts, w) in snaps.timestamps.iter().zip(&snaps.weights) {
        if !(*w > 0.0 && w.is_finite()) {
            out.push(Diagnostic::new(
                format!("snapshot {ts}"),
                format!("weight must be positive, got {w}"),
            ));
        }
    }
    let total = snaps.total_weight();
    if (total - snaps.period_hours).abs() > WEIGHT_SUM_RTOL * snaps.period_hours.abs().max(1.0) {
        out.push(Diagnostic::new(
            "snapshots",
            format!(
                "weights sum to {total} h, expected period of {} h",
                snaps.period_hours
            ),
        ));
    }

    let mut seen = HashSet::new();
    let ids = model
        .generators
        .keys()
        .chain(model.converters.keys())
        .chain(model.stores.keys())
        .chain(model.loads.keys());
    for id in ids {
        if !seen.insert(id) {
            out.push(Diagnostic::new(id, "duplicate component id"));
        }
    }

    let carrier_exists = |c: &str| model.carriers.contains_key(c);
    let co2_carrier = model.co2_carrier();

    for (id, g) in &model.generators {
        if !carrier_exists(&g.carrier) {
            out.push(unknown_carrier(id, &g.carrier));
        }
        check_series(&mut out, id, "availability", &g.availability, n);
        check_unit_interval(&mut out, id, "availability", &g.availability);
        check_capacity(&mut out, id, g.capacity_min, g.capacity_max, g.capacity_existing);
        check_finite(&mut out, id, "marginal_cost", g.marginal_cost);
        check_finite(&mut out, id, "capital_cost", g.capital_cost);
        if let Some(v) = g.volume_limit {
            if !(v >= 0.0) {
                out.push(Diagnostic::new(id, "volume_limit must be non-negative"));
            }
        }
        if g.co2_intensity != 0.0 {
            match co2_carrier {
                None => out.push(Diagnostic::new(
                    id,
                    "co2_intensity set but the model has no [co2] policy",
                )),
                Some(c) if !carrier_exists(c) => {}
                Some(_) => {}
            }
            check_finite(&mut out, id, "co2_intensity", g.co2_intensity);
        }
    }

    for (id, c) in &model.converters {
        let inputs = c
            .ports
            .iter()
            .filter(|p| p.coefficient.raw().iter().all(|&v| v == -1.0))
            .count();
        match inputs {
            0 => out.push(Diagnostic::new(id, "missing input port")),
            1 => {}
            _ => out.push(Diagnostic::new(id, "multiple input ports")),
        }
        let mut positive = 0;
        for p in &c.ports {
            if !carrier_exists(&p.carrier) {
                out.push(unknown_carrier(id, &p.carrier));
            }
            check_series(&mut out, id, &format!("port {}", p.carrier), &p.coefficient, n);
            let raw = p.coefficient.raw();
            if raw.iter().all(|&v| v == -1.0) {
                continue;
            }
            if raw.iter().all(|&v| v > 0.0) {
                positive += 1;
            } else if Some(p.carrier.as_str()) != co2_carrier {
                out.push(Diagnostic::new(
                    id,
                    format!("efficiency on port {} must be positive", p.carrier),
                ));
            }
        }
        if positive == 0 {
            out.push(Diagnostic::new(id, "no output port with positive efficiency"));
        }
        let mut carriers = HashSet::new();
        for p in &c.ports {
            if !carriers.insert(&p.carrier) {
                out.push(Diagnostic::new(id, format!("two ports on carrier {}", p.carrier)));
            }
        }
        check_series(&mut out, id, "availability", &c.availability, n);
        check_unit_interval(&mut out, id, "availability", &c.availability);
        check_capacity(&mut out, id, c.capacity_min, c.capacity_max, c.capacity_existing);
        check_finite(&mut out, id, "marginal_cost", c.marginal_cost);
    }

    for (id, s) in &model.stores {
        if !carrier_exists(&s.carrier) {
            out.push(unknown_carrier(id, &s.carrier));
        }
        if s.capacity_min > s.capacity_max {
            out.push(Diagnostic::new(id, "capacity_min exceeds capacity_max"));
        }
        if !s.atmosphere && (s.capacity_min < 0.0 || s.capacity_existing < 0.0) {
            out.push(Diagnostic::new(id, "negative energy capacity"));
        }
        for (name, eta) in [
            ("charge_efficiency", s.charge_efficiency),
            ("discharge_efficiency", s.discharge_efficiency),
        ] {
            if !(eta > 0.0 && eta <= 1.0) {
                out.push(Diagnostic::new(id, format!("{name} must lie in (0, 1]")));
            }
        }
        if s.cyclic == s.initial_soc.is_some() {
            out.push(Diagnostic::new(
                id,
                "store must be either cyclic or have an initial_soc",
            ));
        }
        if !(0.0..1.0).contains(&s.standing_loss) {
            out.push(Diagnostic::new(id, "standing_loss must lie in [0, 1)"));
        }
        for (role, link) in [("charger", &s.linked_charger), ("discharger", &s.linked_discharger)] {
            if let Some(conv_id) = link {
                match model.converters.get(conv_id) {
                    None => out.push(Diagnostic::new(
                        id,
                        format!("linked {role} `{conv_id}` does not exist"),
                    )),
                    Some(conv) if conv.port_on(&s.carrier).is_none() => out.push(Diagnostic::new(
                        id,
                        format!("linked {role} `{conv_id}` has no port on {}", s.carrier),
                    )),
                    Some(_) => {}
                }
            }
        }
        if let Some(inflow) = &s.inflow {
            check_series(&mut out, id, "inflow", inflow, n);
            if inflow.raw().iter().any(|&v| v < 0.0) {
                out.push(Diagnostic::new(id, "inflow must be non-negative"));
            }
        }
    }

    for (id, l) in &model.loads {
        if !carrier_exists(&l.carrier) {
            out.push(unknown_carrier(id, &l.carrier));
        }
        check_series(&mut out, id, "profile", &l.profile, n);
        if l.profile.raw().iter().any(|&v| !(v >= 0.0)) {
            out.push(Diagnostic::new(id, "load profile must be non-negative"));
        }
        if !(l.shed_price > 0.0 && l.shed_price.is_finite()) {
            out.push(Diagnostic::new(id, "shed_price must be positive and finite"));
        }
    }

    if let Some(policy) = &model.co2 {
        if !carrier_exists(&policy.carrier) {
            out.push(unknown_carrier("co2", &policy.carrier));
        }
        if !policy.budget.is_finite() {
            out.push(Diagnostic::new("co2", "budget must be finite"));
        }
        if !(policy.offset_volume >= 0.0) {
            out.push(Diagnostic::new("co2", "offset_volume must be non-negative"));
        }
    }

    // Connectivity: a carrier with demand needs something that can supply it.
    for (load_id, l) in &model.loads {
        let c = l.carrier.as_str();
        let supplied = l.sheddable
            || model.generators.values().any(|g| g.carrier == c)
            || model.stores.values().any(|s| s.carrier == c)
            || model
                .converters
                .values()
                .any(|k| k.outputs().any(|p| p.carrier == c && p.coefficient.raw().iter().any(|&v| v > 0.0)));
        if !supplied {
            out.push(Diagnostic::new(
                load_id,
                format!("carrier {c} has demand but no supply path"),
            ));
        }
    }

    out
}

fn unknown_carrier(id: &str, carrier: &str) -> Diagnostic {
    Diagnostic::new(id, format!("unknown carrier `{carrier}`"))
}

fn check_series(out: &mut Vec<Diagnostic>, id: &str, field: &str, s: &TimeSeries, n: usize) {
    if !s.fits(n) {
        out.push(Diagnostic::new(
            id,
            format!("{field} has {} values, expected {n}", s.raw().len()),
        ));
    }
    if s.raw().iter().any(|v| !v.is_finite()) {
        out.push(Diagnostic::new(id, format!("{field} contains non-finite values")));
    }
}

fn check_unit_interval(out: &mut Vec<Diagnostic>, id: &str, field: &str, s: &TimeSeries) {
    if s.raw().iter().any(|v| !(0.0..=1.0).contains(v)) {
        out.push(Diagnostic::new(id, format!("{field} must lie in [0, 1]")));
    }
}

fn check_capacity(out: &mut Vec<Diagnostic>, id: &str, min: f64, max: f64, existing: f64) {
    if min > max {
        out.push(Diagnostic::new(id, "capacity_min exceeds capacity_max"));
    }
    if min < 0.0 || existing < 0.0 {
        out.push(Diagnostic::new(id, "negative capacity"));
    }
}

fn check_finite(out: &mut Vec<Diagnostic>, id: &str, field: &str, v: f64) {
    if !v.is_finite() {
        out.push(Diagnostic::new(id, format!("{field} must be finite")));
    }
}
