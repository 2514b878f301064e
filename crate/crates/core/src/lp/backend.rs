use super::{LpProblem, SolveStatus};
use highs::{HighsModelStatus, RowProblem, Sense};

/// Name of the backend used when none is requested.
pub const DEFAULT_BACKEND: &str = "highs";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendCapabilities {
    pub returns_duals: bool,
    pub returns_reduced_costs: bool,
}

/// Raw solver output, indexed like the problem's columns and rows.
///
/// Row duals follow the minimisation convention `reduced cost = c − Aᵀy`: a binding
/// `≤` row has `y ≤ 0`, a binding `≥` row `y ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub row_duals: Vec<f64>,
    pub reduced_costs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{backend}: {message}")]
pub struct BackendError {
    pub backend: String,
    pub message: String,
}

pub trait LpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> BackendCapabilities;
    fn solve(&self, problem: &LpProblem) -> Result<RawSolution, BackendError>;
}

pub fn backend_by_name(name: &str) -> Option<Box<dyn LpBackend>> {
    match name.to_ascii_lowercase().as_str() {
        "highs" => Some(Box::new(HighsBackend::default())),
        _ => None,
    }
}

/// HiGHS dual simplex. Simplex keeps the solution at a vertex, so bound multipliers come
/// out complementary without a crossover step.
#[derive(Debug, Clone, Default)]
pub struct HighsBackend {
    /// Solver threads; `None` leaves the HiGHS default.
    pub threads: Option<u32>,
}

impl LpBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            returns_duals: true,
            returns_reduced_costs: true,
        }
    }

    fn solve(&self, problem: &LpProblem) -> Result<RawSolution, BackendError> {
        let mut pb = RowProblem::default();
        let cols: Vec<_> = problem
            .columns
            .iter()
            .map(|c| pb.add_column(c.cost, c.lower..=c.upper))
            .collect();
        for row in &problem.rows {
            let factors: Vec<_> = row
                .coefficients
                .iter()
                .map(|&(j, a)| (cols[j], a))
                .collect();
            pb.add_row(row.lower..=row.upper, factors);
        }
        let err = |message: String| BackendError {
            backend: self.name().to_string(),
            message,
        };
        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model
            .try_set_option("solver", "simplex")
            .map_err(|e| err(format!("cannot select simplex: {e:?}")))?;
        if let Some(n) = self.threads.and_then(std::num::NonZeroU32::new) {
            model.set_threads(n);
        }
        let solved = model
            .try_solve()
            .map_err(|status| err(format!("solver returned {status:?}")))?;
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                SolveStatus::Infeasible
            }
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            other => return Err(err(format!("model status {other:?}"))),
        };
        if status != SolveStatus::Optimal {
            return Ok(RawSolution {
                status,
                objective: f64::NAN,
                primal: Vec::new(),
                row_duals: Vec::new(),
                reduced_costs: None,
            });
        }
        let solution = solved.get_solution();
        Ok(RawSolution {
            status,
            objective: solved.objective_value(),
            primal: solution.columns().to_vec(),
            row_duals: solution.dual_rows().to_vec(),
            reduced_costs: Some(solution.dual_columns().to_vec()),
        })
    }
}
