//! Weighted linear program of an [`EnergyModel`], its solution and the dual bookkeeping.
//!
//! Every dispatch, flow and level column is free; all bounds are explicit rows so each
//! multiplier is available by tag. The nodal balance is written in supply form
//!
//! ```text
//! Σ g + Σ M f − (e[t+1] − κ e[t]) / w + inflow − spill = d      (dual w·λ)
//! ```
//!
//! which makes `λ > 0` a willingness to pay. Operational terms of the objective carry the
//! snapshot weight `w`, so balance and dispatch-bound duals are divided by `w` when the
//! solution is unpacked. Level bounds, cyclic/initial conditions and annual volume limits
//! are not weighted.

mod backend;
mod build;
mod kkt;
mod oracle;
mod solution;

pub use backend::{
    backend_by_name, BackendCapabilities, BackendError, HighsBackend, LpBackend, RawSolution,
    DEFAULT_BACKEND,
};
pub use build::{build_lp, BuildError};
pub use kkt::{kkt_residuals, KktReport, Residual, Tolerances};
pub use oracle::{co2_budget_finite_difference, lmp_finite_difference, FiniteDifference};
pub use solution::{solve, LpError, SolvedState, StoreSolution, UnitSolution};

use crate::model::EnergyModel;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Capacity per component id, as used to pin extendable components in dispatch-only runs.
pub type CapacityMap = IndexMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Co-optimise capacities of extendable components with dispatch.
    Expansion,
    /// Capacities are constants; capital terms drop out.
    DispatchOnly,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Expansion => "expansion",
            Mode::DispatchOnly => "dispatch_only",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expansion" => Ok(Mode::Expansion),
            "dispatch_only" => Ok(Mode::DispatchOnly),
            other => Err(format!("unknown mode `{other}` (expected expansion or dispatch_only)")),
        }
    }
}

/// Position of a component in the (augmented) model's maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentRef {
    Generator(usize),
    Converter(usize),
    Store(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    Dispatch { generator: usize, snapshot: usize },
    Flow { converter: usize, snapshot: usize },
    /// Level after `step` snapshots; step 0 is the initial level.
    Level { store: usize, step: usize },
    Spill { store: usize, snapshot: usize },
    Capacity(ComponentRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowTag {
    NodalBalance { carrier: usize, snapshot: usize },
    GenLower { generator: usize, snapshot: usize },
    GenUpper { generator: usize, snapshot: usize },
    ConvLower { converter: usize, snapshot: usize },
    ConvUpper { converter: usize, snapshot: usize },
    /// Bound on the level reached at the end of `snapshot`.
    SocLower { store: usize, snapshot: usize },
    SocUpper { store: usize, snapshot: usize },
    Cyclic { store: usize },
    Initial { store: usize },
    Volume { generator: usize },
    CapLower(ComponentRef),
    CapUpper(ComponentRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub key: VarKey,
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub tag: RowTag,
    pub lower: f64,
    pub upper: f64,
    /// `(column index, coefficient)` pairs.
    pub coefficients: Vec<(usize, f64)>,
}

/// Installed capacity of a component inside one LP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Capacity {
    Variable(usize),
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Augmented model the LP was built from.
    pub model: Arc<EnergyModel>,
    pub mode: Mode,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    capacities: HashMap<ComponentRef, Capacity>,
    col_index: HashMap<VarKey, usize>,
    row_index: HashMap<RowTag, usize>,
}

impl LpProblem {
    pub fn column(&self, key: VarKey) -> Option<usize> {
        self.col_index.get(&key).copied()
    }

    pub fn row(&self, tag: RowTag) -> Option<usize> {
        self.row_index.get(&tag).copied()
    }

    pub fn capacity(&self, component: ComponentRef) -> Capacity {
        self.capacities[&component]
    }

    pub fn rows_of<'a>(&'a self, pred: impl Fn(&RowTag) -> bool + 'a) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| pred(&r.tag))
    }

    /// Shifts both sides of a row, e.g. to perturb a nodal demand.
    pub fn shift_row(&mut self, tag: RowTag, delta: f64) {
        let r = &mut self.rows[self.row_index[&tag]];
        r.lower += delta;
        r.upper += delta;
    }

    pub fn snapshot_weight(&self, snapshot: usize) -> f64 {
        self.model.snapshots.weight(snapshot)
    }

    /// Human-readable name of a column, for reports.
    pub fn describe(&self, key: VarKey) -> String {
        let m = &self.model;
        let ts = |t: usize| m.snapshots.timestamps[t].as_str();
        match key {
            VarKey::Dispatch { generator, snapshot } => {
                format!("dispatch[{}, {}]", m.generators.get_index(generator).unwrap().0, ts(snapshot))
            }
            VarKey::Flow { converter, snapshot } => {
                format!("flow[{}, {}]", m.converters.get_index(converter).unwrap().0, ts(snapshot))
            }
            VarKey::Level { store, step } => {
                format!("level[{}, step {step}]", m.stores.get_index(store).unwrap().0)
            }
            VarKey::Spill { store, snapshot } => {
                format!("spill[{}, {}]", m.stores.get_index(store).unwrap().0, ts(snapshot))
            }
            VarKey::Capacity(c) => format!("capacity[{}]", component_id(m, c)),
        }
    }
}

pub fn component_id(model: &EnergyModel, c: ComponentRef) -> &str {
    match c {
        ComponentRef::Generator(i) => model.generators.get_index(i).unwrap().0,
        ComponentRef::Converter(i) => model.converters.get_index(i).unwrap().0,
        ComponentRef::Store(i) => model.stores.get_index(i).unwrap().0,
    }
}

/// Whether a solver outcome carries a usable primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical_failure",
        })
    }
}
