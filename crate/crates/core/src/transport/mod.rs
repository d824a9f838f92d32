//! Exact discrete optimal transport and programs over the optimal faces.

mod face;
mod network;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

pub use face::{
    default_face_tol, is_plan_unique, max_over_dual_face, min_over_primal_face, potentials_unique,
    FaceOptions, OptimalFaces, Uniqueness,
};

/// A coupling of two discrete measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    #[serde(with = "crate::serde_rows")]
    pub entries: DMatrix<f64>,
}

impl TransportPlan {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `sum_ij g_ij pi_ij`.
    pub fn pair(&self, g: &DMatrix<f64>) -> f64 {
        self.entries.dot(g)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.sum()).collect()
    }

    /// Largest marginal violation against `mu` and `nu`.
    pub fn marginal_error(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let r = self
            .row_sums()
            .iter()
            .zip(mu.weights())
            .fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        self.col_sums()
            .iter()
            .zip(nu.weights())
            .fold(r, |e, (a, b)| e.max((a - b).abs()))
    }
}

/// Dual potentials `(phi, psi)` with `phi_i + psi_j <= c_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPair {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DualPair {
    pub fn value(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        mu.integrate(&self.phi) + nu.integrate(&self.psi)
    }

    /// Largest violation of `phi_i + psi_j <= c_ij` (zero if feasible).
    pub fn infeasibility(&self, c: &CostMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (i, p) in self.phi.iter().enumerate() {
            for (j, q) in self.psi.iter().enumerate() {
                worst = worst.max(p + q - c.get(i, j));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtSolution {
    pub value: f64,
    pub plan: TransportPlan,
    pub dual: DualPair,
    pub status: SolveStatus,
}

impl OtSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Converts a non-optimal status into an error.
    pub fn require_optimal(self) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            s => Err(Error::Numerical(format!("transport solver status {s:?}"))),
        }
    }
}

/// Solves `min_{pi in Pi(mu, nu)} <c, pi>` exactly.
///
/// Returns a vertex optimal plan and dual potentials with `phi_0 = 0`.
/// Solver stalls are reported in the status, shape errors as `Err`.
pub fn solve_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostMatrix) -> Result<OtSolution> {
    c.check_shape(mu, nu)?;
    let solved = network::transport_simplex(mu.weights(), nu.weights(), c.values());
    let status = match solved.outcome {
        network::Outcome::Optimal => SolveStatus::Optimal,
        network::Outcome::IterationLimit => SolveStatus::NumericalFailure,
    };
    let value = solved.flow.dot(c.values());
    Ok(OtSolution {
        value,
        plan: TransportPlan {
            entries: solved.flow,
        },
        dual: DualPair {
            phi: solved.u,
            psi: solved.v,
        },
        status,
    })
}

/// Optimal value only; errors if the solver does not reach optimality.
pub fn ot_value(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &CostMatrix) -> Result<f64> {
    Ok(solve_ot(mu, nu, c)?.require_optimal()?.value)
}
