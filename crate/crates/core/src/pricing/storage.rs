//! Marginal storage values along a store's level trajectory.

use crate::lp::SolvedState;
use serde::Serialize;

/// Where the level at the end of a snapshot sits relative to its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRelation {
    Interior,
    Empty,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalStorageValue {
    pub snapshot: usize,
    /// Price of the stored carrier at this snapshot.
    pub value: f64,
    /// Value of a unit carried to the next snapshot, after standing losses.
    pub continuation: f64,
    pub level: f64,
    pub relation: StepRelation,
}

impl MarginalStorageValue {
    /// Gap between the value now and the value carried forward. Zero when the level is
    /// interior; its sign shows which bound holds it otherwise.
    pub fn gap(&self) -> f64 {
        self.value - self.continuation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPrices {
    pub store: String,
    pub carrier: String,
    pub steps: Vec<MarginalStorageValue>,
    /// Dual of the cyclic or initial-level condition.
    pub boundary_value: Option<f64>,
}

impl LevelPrices {
    /// Largest `|gap|` over interior steps.
    pub fn max_interior_gap(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.relation == StepRelation::Interior)
            .map(|s| s.gap().abs())
            .fold(0.0, f64::max)
    }
}

/// Value trajectory of a store; `None` for unknown ids.
pub fn store_level_prices(state: &SolvedState, store: &str, tol: f64) -> Option<LevelPrices> {
    let m = &state.model;
    let spec = m.stores.get(store)?;
    let sol = &state.stores[store];
    let n = m.snapshots.len();
    let lambda = &state.prices[spec.carrier.as_str()];
    let steps = (0..n)
        .map(|t| {
            let continuation = if t + 1 < n {
                spec.retention(m.snapshots.weight(t + 1)) * lambda[t + 1]
            } else if spec.cyclic {
                sol.lambda_cyclic.unwrap_or(0.0)
            } else {
                0.0
            };
            let level = sol.levels[t];
            let scale = sol.capacity.abs().max(1.0);
            let relation = if !spec.atmosphere && level <= tol * scale {
                StepRelation::Empty
            } else if level >= sol.capacity - tol * scale
                && (!spec.atmosphere || t + 1 == n)
            {
                StepRelation::Full
            } else {
                StepRelation::Interior
            };
            MarginalStorageValue {
                snapshot: t,
                value: lambda[t],
                continuation,
                level,
                relation,
            }
        })
        .collect();
    Some(LevelPrices {
        store: store.to_string(),
        carrier: spec.carrier.clone(),
        steps,
        boundary_value: sol.lambda_cyclic.or(sol.lambda_initial),
    })
}
