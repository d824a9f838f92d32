//! OT between mixture weight vectors under a distance between components.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cost::{validate_pseudo_metric, CostMatrix};
use crate::error::{Error, Result};
use crate::limitlaw::{
    sample_limit_wcc, GaussianTripleModel, LimitOptions, LimitSampleSet, Scaling,
};
use crate::measure::DiscreteMeasure;
use crate::transport::solve_ot;

const SIMPLEX_TOL: f64 = 1e-12;

/// Two weight vectors over `K` mixture components and the component distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(with = "crate::serde_rows")]
    pub d_matrix: DMatrix<f64>,
    /// Also require `d_matrix` to be a pseudo-metric.
    #[serde(default)]
    pub metric: bool,
}

fn check_simplex(name: &str, w: &[f64]) -> Result<()> {
    if w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidMeasure(format!(
            "{name} is not a probability vector"
        )));
    }
    Ok(())
}

impl MixtureSpec {
    pub fn new(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        d_matrix: DMatrix<f64>,
        metric: bool,
    ) -> Result<Self> {
        let spec = Self {
            alpha,
            beta,
            d_matrix,
            metric,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alpha.len();
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        if self.beta.len() != k || self.d_matrix.shape() != (k, k) {
            return Err(Error::DimensionMismatch(format!(
                "alpha has {k} entries, beta {}, distance matrix {:?}",
                self.beta.len(),
                self.d_matrix.shape()
            )));
        }
        check_simplex("alpha", &self.alpha)?;
        check_simplex("beta", &self.beta)?;
        if self.d_matrix.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidInput(
                "component distances must be finite and nonnegative".into(),
            ));
        }
        if self.metric {
            validate_pseudo_metric(&self.d_matrix)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchedResult {
    pub value: f64,
    /// `K x K` optimal coupling of `alpha` and `beta`.
    #[serde(with = "crate::serde_rows")]
    pub plan: DMatrix<f64>,
}

fn positive(w: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let idx: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let s: f64 = idx.iter().map(|&i| w[i]).sum();
    let vals = idx.iter().map(|&i| w[i] / s).collect();
    (idx, vals)
}

/// Solves the `K x K` transport problem. Components with zero weight are
/// dropped before solving and receive no mass.
pub fn sketched_wasserstein(spec: &MixtureSpec) -> Result<SketchedResult> {
    spec.validate()?;
    let (ia, wa) = positive(&spec.alpha);
    let (ib, wb) = positive(&spec.beta);
    let mu = DiscreteMeasure::on_indices(&wa)?;
    let nu = DiscreteMeasure::on_indices(&wb)?;
    let c = CostMatrix::new(DMatrix::from_fn(ia.len(), ib.len(), |i, j| {
        spec.d_matrix[(ia[i], ib[j])]
    }))?;
    let sol = solve_ot(&mu, &nu, &c)?.require_optimal()?;
    let k = spec.k();
    let mut plan = DMatrix::zeros(k, k);
    for (a, &i) in ia.iter().enumerate() {
        for (b, &j) in ib.iter().enumerate() {
            plan[(i, j)] = sol.plan.entries()[(a, b)];
        }
    }
    Ok(SketchedResult {
        value: sol.value,
        plan,
    })
}

/// Limit law of the sketched distance with estimated `(alpha, beta, d)`:
/// the joint Gaussian model plays the roles of `(G^alpha, G^beta, G^d)`.
/// Requires strictly positive weights.
pub fn sketched_limit(
    spec: &MixtureSpec,
    model: &GaussianTripleModel,
    scaling: Scaling,
    n_draws: usize,
    opts: &LimitOptions,
    seed: u64,
) -> Result<LimitSampleSet> {
    spec.validate()?;
    let mu = DiscreteMeasure::on_indices(&spec.alpha)?;
    let nu = DiscreteMeasure::on_indices(&spec.beta)?;
    let c = CostMatrix::new(spec.d_matrix.clone())?;
    sample_limit_wcc(&mu, &nu, &c, model, scaling, n_draws, opts, seed)
}
