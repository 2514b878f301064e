//! Finite-difference checks of dual prices, by re-solving perturbed problems.

use super::{build_lp, solve, CapacityMap, LpBackend, LpError, LpProblem, Mode, RowTag};
use crate::model::{EnergyModel, ATMOSPHERE_ID};

/// One-sided difference quotients of the objective. They agree unless the perturbation
/// crosses a basis change, in which case the dual lies between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDifference {
    pub forward: f64,
    pub backward: f64,
}

impl FiniteDifference {
    pub fn central(&self) -> f64 {
        0.5 * (self.forward + self.backward)
    }

    pub fn is_smooth(&self, tol: f64) -> bool {
        (self.forward - self.backward).abs() <= tol
    }

    /// Whether `value` lies in the interval spanned by the two quotients, widened by `tol`.
    pub fn brackets(&self, value: f64, tol: f64) -> bool {
        let lo = self.forward.min(self.backward) - tol;
        let hi = self.forward.max(self.backward) + tol;
        (lo..=hi).contains(&value)
    }
}

/// Marginal cost of serving one more unit of `carrier` at `snapshot`, per hour.
///
/// `epsilon` is in units/h and defaults to 1e-3 of the carrier's peak load.
pub fn lmp_finite_difference(
    problem: &LpProblem,
    carrier: &str,
    snapshot: usize,
    epsilon: Option<f64>,
    backend: &dyn LpBackend,
) -> Result<FiniteDifference, LpError> {
    let model = &problem.model;
    let c = model
        .carriers
        .get_index_of(carrier)
        .unwrap_or_else(|| panic!("unknown carrier `{carrier}`"));
    let eps = epsilon.unwrap_or_else(|| {
        let peak = (0..model.snapshots.len())
            .map(|t| model.demand(carrier, t))
            .fold(0.0, f64::max);
        if peak > 0.0 {
            1e-3 * peak
        } else {
            1e-3
        }
    });
    let tag = RowTag::NodalBalance {
        carrier: c,
        snapshot,
    };
    let shifted = |delta: f64| -> Result<f64, LpError> {
        let mut p = problem.clone();
        p.shift_row(tag, delta);
        Ok(solve(&p, backend)?.objective)
    };
    let (base, (up, down)) = rayon::join(
        || shifted(0.0),
        || rayon::join(|| shifted(eps), || shifted(-eps)),
    );
    let (base, up, down) = (base?, up?, down?);
    let w = model.snapshots.weight(snapshot);
    Ok(FiniteDifference {
        forward: (up - base) / (w * eps),
        backward: (base - down) / (w * eps),
    })
}

/// Objective sensitivity to the CO2 budget, currency per tCO2. With a binding budget this
/// is `−co2_price`.
pub fn co2_budget_finite_difference(
    model: &EnergyModel,
    mode: Mode,
    fixed_capacities: Option<&CapacityMap>,
    epsilon: f64,
    backend: &dyn LpBackend,
) -> Result<FiniteDifference, LpError> {
    let policy = model
        .co2
        .as_ref()
        .expect("co2_budget_finite_difference needs a CO2 policy");
    let with_budget = |budget: f64| -> Result<f64, LpError> {
        let mut m = model.clone();
        // Rebuild the atmosphere store from the edited policy.
        m.stores.shift_remove(ATMOSPHERE_ID);
        m.co2.as_mut().unwrap().budget = budget;
        let p = build_lp(&m, mode, fixed_capacities)?;
        Ok(solve(&p, backend)?.objective)
    };
    let b = policy.budget;
    let (base, (up, down)) = rayon::join(
        || with_budget(b),
        || rayon::join(|| with_budget(b + epsilon), || with_budget(b - epsilon)),
    );
    let (base, up, down) = (base?, up?, down?);
    Ok(FiniteDifference {
        forward: (up - base) / epsilon,
        backward: (base - down) / epsilon,
    })
}
