//! Alignment solvers behind DTWSim and OTSim.
//!
//! - [`dtw`]: exact dynamic program over the symmetric three-step pattern,
//!   with path recovery and a fixed tie order.
//! - [`ot_exact`]: transportation simplex for small instances.
//! - [`sinkhorn`]: entropically regularized transport with potentials kept
//!   in the log domain.

mod dtw;
mod exact;
mod sinkhorn;

use thiserror::Error;

use crate::matrix::Matrix;

pub use dtw::{dtw, dtw_cost, WarpPath};
pub use exact::ot_exact;
pub use sinkhorn::sinkhorn;

/// Tolerated deviation of a marginal's total mass from 1.
pub const MARGINAL_SUM_TOL: f64 = 1e-12;

const COST_MAX: f64 = 2.0 + 1e-6;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("cost matrix must be non-empty, got {rows}x{cols}")]
    EmptyCost { rows: usize, cols: usize },
    #[error("cost entry ({row}, {col}) = {value} outside [0, 2]")]
    CostOutOfRange { row: usize, col: usize, value: f64 },
    #[error("marginal of length {found} does not match cost dimension {expected}")]
    MarginalLength { expected: usize, found: usize },
    #[error("marginal entry {index} = {value} is negative or non-finite")]
    NegativeMass { index: usize, value: f64 },
    #[error("infeasible marginals: source mass {source_mass}, target mass {target_mass} (both must be 1)")]
    InfeasibleMarginals { source_mass: f64, target_mass: f64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("sinkhorn did not converge: marginal violation {violation:.3e} after {iterations} iterations")]
    NonConvergence {
        violation: f64,
        iterations: usize,
        plan: Box<TransportPlan>,
    },
    #[error("transportation simplex exceeded {0} pivots")]
    PivotLimit(usize),
}

/// Nonnegative `m x n` alignment cost, typically `1 - cosine`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    pub fn new(values: Matrix) -> Result<Self, AlignError> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(AlignError::EmptyCost {
                rows: values.rows(),
                cols: values.cols(),
            });
        }
        for i in 0..values.rows() {
            for (j, &v) in values.row(i).iter().enumerate() {
                if !(0.0..=COST_MAX).contains(&v) {
                    return Err(AlignError::CostOutOfRange { row: i, col: j, value: v });
                }
            }
        }
        Ok(CostMatrix(values))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, AlignError> {
        Self::new(Matrix::from_rows(rows))
    }

    /// Cosine distance `max(0, 1 - g)` from unit-row dot products. Rounding
    /// can push `g` slightly above 1; those entries clip to zero cost.
    pub fn from_similarities(sim: &Matrix) -> Self {
        CostMatrix(sim.map(|g| (1.0 - g).clamp(0.0, 2.0)))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn transpose(&self) -> CostMatrix {
        CostMatrix(self.0.transpose())
    }
}

/// A coupling between two discrete distributions and its transport cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub plan: Matrix,
    /// `<plan, cost>`
    pub cost: f64,
    /// Simplex pivots or Sinkhorn sweeps performed.
    pub iterations: usize,
    /// Largest absolute deviation of a row or column sum from its marginal.
    pub marginal_violation: f64,
}

impl TransportPlan {
    pub(crate) fn assemble(plan: Matrix, cost: &CostMatrix, a: &[f64], b: &[f64], iterations: usize) -> Self {
        let total = plan
            .as_slice()
            .iter()
            .zip(cost.matrix().as_slice())
            .map(|(p, c)| p * c)
            .sum();
        let violation = marginal_violation(&plan, a, b);
        TransportPlan {
            plan,
            cost: total,
            iterations,
            marginal_violation: violation,
        }
    }
}

pub fn marginal_violation(plan: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    let rows = plan.row_sums().iter().zip(a).map(|(s, m)| (s - m).abs()).fold(0.0, f64::max);
    let cols = plan.col_sums().iter().zip(b).map(|(s, m)| (s - m).abs()).fold(0.0, f64::max);
    rows.max(cols)
}

/// Uniform distribution over `n` points.
pub fn uniform_marginal(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub(crate) fn check_marginals(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<(), AlignError> {
    for (marginal, expected) in [(a, cost.rows()), (b, cost.cols())] {
        if marginal.len() != expected {
            return Err(AlignError::MarginalLength {
                expected,
                found: marginal.len(),
            });
        }
        if let Some((index, &value)) = marginal.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(AlignError::NegativeMass { index, value });
        }
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - 1.0).abs() > MARGINAL_SUM_TOL || (sb - 1.0).abs() > MARGINAL_SUM_TOL {
        return Err(AlignError::InfeasibleMarginals {
            source_mass: sa,
            target_mass: sb,
        });
    }
    Ok(())
}
