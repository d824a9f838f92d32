//! Goodness-of-fit against a group family generated by a reference measure.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::limitlaw::{
    bridge_covariance, gof_cost_process_model, sample_limit_wcc, CrossCov, GaussianTripleModel,
    LimitOptions, LimitSampleSet, Scaling,
};
use crate::measure::{DiscreteMeasure, EmpiricalSample, Point};
use crate::serde_rows;
use crate::transport::ot_value;

/// Transformations `g_theta` of `R^d`.
///
/// Parameter layouts: `Location` is the shift `b`; `LocationScale` is `(b, s)`
/// acting as `x -> s x + b`; `Affine` is `(b, A)` with `A` row-major, acting as
/// `x -> A x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupFamily {
    Location { dim: usize },
    LocationScale { dim: usize },
    Affine { dim: usize },
}

impl GroupFamily {
    pub fn dim(&self) -> usize {
        match *self {
            Self::Location { dim } | Self::LocationScale { dim } | Self::Affine { dim } => dim,
        }
    }

    pub fn dim_theta(&self) -> usize {
        let d = self.dim();
        match self {
            Self::Location { .. } => d,
            Self::LocationScale { .. } => d + 1,
            Self::Affine { .. } => d + d * d,
        }
    }

    pub fn identity(&self) -> Vec<f64> {
        let d = self.dim();
        let mut t = vec![0.0; self.dim_theta()];
        match self {
            Self::Location { .. } => {}
            Self::LocationScale { .. } => t[d] = 1.0,
            Self::Affine { .. } => (0..d).for_each(|i| t[d + i * d + i] = 1.0),
        }
        t
    }

    fn check(&self, theta: &[f64], x: &Point) -> Result<()> {
        if theta.len() != self.dim_theta() || x.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter of length {} and point of dimension {} for {:?}",
                theta.len(),
                x.dim(),
                self
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameter must be finite".into()));
        }
        Ok(())
    }

    fn linear_part(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        match self {
            Self::Location { .. } => DMatrix::identity(d, d),
            Self::LocationScale { .. } => DMatrix::identity(d, d) * theta[d],
            Self::Affine { .. } => DMatrix::from_row_slice(d, d, &theta[d..]),
        }
    }

    fn inverse_linear(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.linear_part(theta)
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("group element is not invertible".into()))
    }

    pub fn apply(&self, theta: &[f64], x: &Point) -> Result<Point> {
        self.check(theta, x)?;
        let d = self.dim();
        let y = self.linear_part(theta) * DVector::from_column_slice(x.coords());
        Ok(Point::new((0..d).map(|i| y[i] + theta[i]).collect()))
    }

    pub fn g_inverse(&self, theta: &[f64], x: &Point) -> Result<Point> {
        self.check(theta, x)?;
        let d = self.dim();
        let shifted = DVector::from_fn(d, |i, _| x.0[i] - theta[i]);
        Ok(Point::new(
            (self.inverse_linear(theta)? * shifted)
                .iter()
                .copied()
                .collect(),
        ))
    }

    /// `d x k` derivative of `theta -> g_theta^{-1}(x)`.
    pub fn g_inverse_jacobian(&self, theta: &[f64], x: &Point) -> Result<DMatrix<f64>> {
        self.check(theta, x)?;
        let d = self.dim();
        let inv = self.inverse_linear(theta)?;
        let z = &inv * DVector::from_fn(d, |i, _| x.0[i] - theta[i]);
        let mut j = DMatrix::zeros(d, self.dim_theta());
        j.columns_mut(0, d).copy_from(&(-&inv));
        match self {
            Self::Location { .. } => {}
            Self::LocationScale { .. } => {
                let s = theta[d];
                for r in 0..d {
                    j[(r, d)] = -z[r] / s;
                }
            }
            Self::Affine { .. } => {
                for a in 0..d {
                    for b in 0..d {
                        for r in 0..d {
                            j[(r, d + a * d + b)] = -inv[(r, a)] * z[b];
                        }
                    }
                }
            }
        }
        Ok(j)
    }

    /// `(g_theta)_# nu`.
    pub fn pushforward(&self, theta: &[f64], nu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        let pts = nu
            .support()
            .iter()
            .map(|y| self.apply(theta, y))
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::new(pts, nu.weights().to_vec())
    }

    /// Moment matching of the sample against `nu0`: means for `Location`,
    /// means and total variance for `LocationScale`, means and covariances for
    /// `Affine` (via symmetric square roots).
    pub fn moment_estimate(
        &self,
        sample: &EmpiricalSample,
        nu0: &DiscreteMeasure,
    ) -> Result<Vec<f64>> {
        let d = self.dim();
        if sample.is_empty() {
            return Err(Error::EmptyInput);
        }
        if sample.dim() != d || nu0.dim() != d {
            return Err(Error::DimensionMismatch(
                "sample, reference and family dimensions".into(),
            ));
        }
        let (mx, cx) = sample_moments(sample);
        let (my, cy) = measure_moments(nu0);
        let lin = match self {
            Self::Location { .. } => DMatrix::identity(d, d),
            Self::LocationScale { .. } => {
                let ty = cy.trace();
                if ty <= 0.0 {
                    return Err(Error::InvalidInput(
                        "reference measure has zero variance".into(),
                    ));
                }
                DMatrix::identity(d, d) * (cx.trace() / ty).sqrt()
            }
            Self::Affine { .. } => {
                let inv_sqrt = sym_power(&cy, -0.5)?;
                sym_power(&cx, 0.5)? * inv_sqrt
            }
        };
        let b = &mx - &lin * &my;
        let mut theta: Vec<f64> = b.iter().copied().collect();
        match self {
            Self::Location { .. } => {}
            Self::LocationScale { .. } => theta.push(lin[(0, 0)]),
            Self::Affine { .. } => theta.extend(
                (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .map(|ij| lin[ij]),
            ),
        }
        Ok(theta)
    }
}

fn sample_moments(s: &EmpiricalSample) -> (DVector<f64>, DMatrix<f64>) {
    let d = s.dim();
    let n = s.len() as f64;
    let m = DVector::from_vec(s.mean());
    let mut c = DMatrix::zeros(d, d);
    for x in &s.draws {
        let v = DVector::from_column_slice(x.coords()) - &m;
        c += &v * v.transpose();
    }
    (m, c / n)
}

fn measure_moments(mu: &DiscreteMeasure) -> (DVector<f64>, DMatrix<f64>) {
    let d = mu.dim();
    let mut m = DVector::zeros(d);
    for (x, w) in mu.support().iter().zip(mu.weights()) {
        m += DVector::from_column_slice(x.coords()) * *w;
    }
    let mut c = DMatrix::zeros(d, d);
    for (x, w) in mu.support().iter().zip(mu.weights()) {
        let v = DVector::from_column_slice(x.coords()) - &m;
        c += &v * v.transpose() * *w;
    }
    (m, c)
}

fn sym_power(a: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let e = SymmetricEigen::new(a.clone());
    if e.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput("covariance is singular".into()));
    }
    let diag = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.powf(p)));
    Ok(&e.eigenvectors * diag * e.eigenvectors.transpose())
}

/// Cost `||g_theta^{-1}(x) - y||^2` on the supports of `mu` and `nu0`.
pub fn gof_cost(
    mu: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    family: &GroupFamily,
    theta: &[f64],
) -> Result<CostMatrix> {
    let gx = mu
        .support()
        .iter()
        .map(|x| family.g_inverse(theta, x))
        .collect::<Result<Vec<_>>>()?;
    CostMatrix::from_supports(&gx, nu0.support(), |a, b| a.dist2(b))
}

/// `OT(mu_n, nu0, c_n)` with `c_n(x, y) = ||g_{theta_hat}^{-1}(x) - y||^2`.
pub fn gof_statistic(
    sample: &EmpiricalSample,
    nu0: &DiscreteMeasure,
    family: &GroupFamily,
    theta_hat: &[f64],
) -> Result<f64> {
    let mu = sample.to_measure()?;
    ot_value(&mu, nu0, &gof_cost(&mu, nu0, family, theta_hat)?)
}

/// Joint Gaussian limit of `(G^mu, sqrt(n) (theta_hat - theta))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofModel {
    #[serde(with = "serde_rows")]
    pub theta_cov: DMatrix<f64>,
    /// `Cov(G^mu_i, G^theta_l)`, `N x k`; `None` for independence.
    #[serde(default, with = "opt_rows")]
    pub cross_mu: Option<DMatrix<f64>>,
}

mod opt_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|m| {
                m.row_iter()
                    .map(|r| r.iter().copied().collect::<Vec<f64>>())
                    .collect::<Vec<_>>()
            })
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| crate::serde_rows::rows_to_matrix(&rows).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl GofModel {
    /// Model of the location moment estimator, whose fluctuation is
    /// `G^theta = G^mu(id)`.
    pub fn location_moments(mu: &DiscreteMeasure) -> Self {
        let d = mu.dim();
        let n = mu.len();
        let cov = bridge_covariance(mu.weights());
        let x = DMatrix::from_fn(n, d, |i, r| mu.support()[i].0[r]);
        let cross = &cov * &x;
        Self {
            theta_cov: x.transpose() * &cross,
            cross_mu: Some(cross),
        }
    }
}

/// One-sample limit of the goodness-of-fit statistic at the true parameter `theta`.
#[allow(clippy::too_many_arguments)]
pub fn gof_limit(
    mu: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    family: &GroupFamily,
    theta: &[f64],
    model: &GofModel,
    n_draws: usize,
    opts: &LimitOptions,
    seed: u64,
) -> Result<LimitSampleSet> {
    let k = family.dim_theta();
    if model.theta_cov.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "parameter covariance must be {k} x {k}"
        )));
    }
    let jac = mu
        .support()
        .iter()
        .map(|x| family.g_inverse_jacobian(theta, x))
        .collect::<Result<Vec<_>>>()?;
    let ginv = mu
        .support()
        .iter()
        .map(|x| family.g_inverse(theta, x))
        .collect::<Result<Vec<_>>>()?;
    let process = gof_cost_process_model(&model.theta_cov, &jac, &ginv, nu0.support())?;
    let mut tm = GaussianTripleModel::bridges(mu, nu0, process);
    if let Some(cross) = &model.cross_mu {
        if tm.cost_process != crate::limitlaw::CostProcess::Zero {
            tm = tm.with_cross_cov(CrossCov {
                mu_param: cross.clone(),
                nu_param: DMatrix::zeros(nu0.len(), k),
            });
        }
    }
    let c = gof_cost(mu, nu0, family, theta)?;
    sample_limit_wcc(mu, nu0, &c, &tm, Scaling::OneSample, n_draws, opts, seed)
}
