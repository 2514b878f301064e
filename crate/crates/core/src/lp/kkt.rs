use super::{LpProblem, RowTag, SolvedState, VarKey};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub stationarity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-6,
            stationarity: 1e-5,
        }
    }
}

/// Signed residual of one column's optimality condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub var: VarKey,
    pub value: f64,
}

/// Optimality certificate of a solved state, recomputed from its keyed multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Dispatch and flow columns, per snapshot-hour: `o − Σ M λ + μ̲ − μ̄ (+ rent)`.
    pub stationarity: Vec<Residual>,
    /// Level columns: the storage price chain, e.g. `λ_t − κ λ_{t+1} + μ̲ − μ̄`.
    pub soc_chain: Vec<Residual>,
    /// Capacity and spill columns.
    pub other: Vec<Residual>,
    /// Largest bound or row violation, relative to `max(1, |bound|)`.
    pub primal_infeasibility: f64,
    /// Largest `|μ| · slack` over inequality rows.
    pub complementarity: f64,
    /// Largest multiplier of the wrong sign.
    pub dual_sign_violation: f64,
    /// Magnitude used to scale complementarity.
    pub capacity_scale: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

fn max_abs(r: &[Residual]) -> f64 {
    r.iter().map(|r| r.value.abs()).fold(0.0, f64::max)
}

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        max_abs(&self.stationarity)
    }

    pub fn max_soc_chain(&self) -> f64 {
        max_abs(&self.soc_chain)
    }

    pub fn max_other(&self) -> f64 {
        max_abs(&self.other)
    }

    pub fn duality_gap(&self) -> f64 {
        self.primal_objective - self.dual_objective
    }

    pub fn relative_gap(&self) -> f64 {
        self.duality_gap().abs() / self.primal_objective.abs().max(1.0)
    }

    /// Columns whose residual exceeds `tol`, in column order.
    pub fn flagged(&self, tol: f64) -> Vec<VarKey> {
        let mut out: Vec<VarKey> = self
            .stationarity
            .iter()
            .chain(&self.soc_chain)
            .chain(&self.other)
            .filter(|r| r.value.abs() > tol)
            .map(|r| r.var)
            .collect();
        out.sort();
        out
    }

    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.max_stationarity() <= tol.stationarity
            && self.max_soc_chain() <= tol.stationarity
            && self.max_other() <= tol.stationarity
            && self.primal_infeasibility <= tol.feasibility
            && self.complementarity <= tol.feasibility * self.capacity_scale
            && self.dual_sign_violation <= tol.stationarity
            && self.relative_gap() <= tol.feasibility
    }

    pub fn to_text(&self, problem: &LpProblem, tol: &Tolerances) -> String {
        let mut s = String::new();
        let verdict = if self.passes(tol) { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "kkt check: {verdict}");
        let _ = writeln!(
            s,
            "tolerances: feasibility {:e}, stationarity {:e}",
            tol.feasibility, tol.stationarity
        );
        let _ = writeln!(s, "max stationarity residual (g, f): {:.3e}", self.max_stationarity());
        let _ = writeln!(s, "max storage chain residual: {:.3e}", self.max_soc_chain());
        let _ = writeln!(s, "max capacity/spill residual: {:.3e}", self.max_other());
        let _ = writeln!(s, "primal infeasibility: {:.3e}", self.primal_infeasibility);
        let _ = writeln!(
            s,
            "complementarity: {:.3e} (scale {:.3e})",
            self.complementarity, self.capacity_scale
        );
        let _ = writeln!(s, "dual sign violation: {:.3e}", self.dual_sign_violation);
        let _ = writeln!(s, "primal objective: {:.9e}", self.primal_objective);
        let _ = writeln!(s, "dual objective: {:.9e}", self.dual_objective);
        let _ = writeln!(
            s,
            "duality gap: {:.3e} (relative {:.3e})",
            self.duality_gap(),
            self.relative_gap()
        );
        let flagged = self.flagged(tol.stationarity);
        let _ = writeln!(s, "flagged columns: {}", flagged.len());
        for var in flagged.iter().take(50) {
            let _ = writeln!(s, "  {}", problem.describe(*var));
        }
        s
    }
}

/// Recomputes every optimality condition of `problem` at `state`.
pub fn kkt_residuals(state: &SolvedState, problem: &LpProblem) -> KktReport {
    let x: Vec<f64> = problem
        .columns
        .iter()
        .map(|c| state.column_value(c.key))
        .collect();
    let y: Vec<f64> = problem.rows.iter().map(|r| state.row_dual(r.tag)).collect();

    let mut reduced: Vec<f64> = problem.columns.iter().map(|c| c.cost).collect();
    for (row, &yr) in problem.rows.iter().zip(&y) {
        for &(j, a) in &row.coefficients {
            reduced[j] -= a * yr;
        }
    }

    let mut report = KktReport {
        stationarity: Vec::new(),
        soc_chain: Vec::new(),
        other: Vec::new(),
        primal_infeasibility: 0.0,
        complementarity: 0.0,
        dual_sign_violation: 0.0,
        capacity_scale: 1.0,
        primal_objective: 0.0,
        dual_objective: 0.0,
    };

    for (j, col) in problem.columns.iter().enumerate() {
        let d = reduced[j];
        report.primal_objective += col.cost * x[j];
        match col.key {
            VarKey::Dispatch { snapshot, .. } | VarKey::Flow { snapshot, .. } => {
                report.stationarity.push(Residual {
                    var: col.key,
                    value: d / problem.snapshot_weight(snapshot),
                });
            }
            VarKey::Level { .. } => report.soc_chain.push(Residual { var: col.key, value: d }),
            VarKey::Spill { .. } | VarKey::Capacity(_) => {
                // Bounded columns may carry a reduced cost at an active bound.
                let at_lower = col.lower.is_finite() && (x[j] - col.lower).abs() <= 1e-9;
                let at_upper = col.upper.is_finite() && (col.upper - x[j]).abs() <= 1e-9;
                let value = if at_lower && d >= 0.0 || at_upper && d <= 0.0 {
                    0.0
                } else {
                    d
                };
                report.other.push(Residual { var: col.key, value });
                if d > 0.0 && col.lower.is_finite() {
                    report.dual_objective += d * col.lower;
                } else if d < 0.0 && col.upper.is_finite() {
                    report.dual_objective += d * col.upper;
                }
            }
        }
        let bound_violation = (col.lower - x[j]).max(x[j] - col.upper).max(0.0);
        report.primal_infeasibility = report.primal_infeasibility.max(bound_violation);
        report.capacity_scale = report.capacity_scale.max(x[j].abs());
    }

    for (row, &yr) in problem.rows.iter().zip(&y) {
        let activity: f64 = row.coefficients.iter().map(|&(j, a)| a * x[j]).sum();
        let scale = |b: f64| b.abs().max(1.0);
        if row.lower.is_finite() {
            report.primal_infeasibility =
                report.primal_infeasibility.max((row.lower - activity) / scale(row.lower));
            report.capacity_scale = report.capacity_scale.max(row.lower.abs());
        }
        if row.upper.is_finite() {
            report.primal_infeasibility =
                report.primal_infeasibility.max((activity - row.upper) / scale(row.upper));
            report.capacity_scale = report.capacity_scale.max(row.upper.abs());
        }

        // Multipliers of dispatch bounds are compared per snapshot-hour.
        let per_hour = match row.tag {
            RowTag::GenLower { snapshot, .. }
            | RowTag::GenUpper { snapshot, .. }
            | RowTag::ConvLower { snapshot, .. }
            | RowTag::ConvUpper { snapshot, .. } => yr / problem.snapshot_weight(snapshot),
            _ => yr,
        };
        let equality = row.lower == row.upper;
        if !equality {
            if !row.upper.is_finite() {
                report.dual_sign_violation = report.dual_sign_violation.max(-per_hour);
            }
            if !row.lower.is_finite() {
                report.dual_sign_violation = report.dual_sign_violation.max(per_hour);
            }
            let slack = if yr > 0.0 {
                activity - row.lower
            } else {
                row.upper - activity
            };
            if yr != 0.0 && slack.is_finite() {
                report.complementarity = report.complementarity.max(per_hour.abs() * slack.abs());
            }
        }
        let bound = if equality || yr > 0.0 { row.lower } else { row.upper };
        if bound.is_finite() {
            report.dual_objective += yr * bound;
        }
    }
    report
}
