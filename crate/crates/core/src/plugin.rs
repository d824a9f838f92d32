//! A plug-in estimated cost with an explicit Gaussian limit.

use nalgebra::DMatrix;

use crate::bootstrap::CostEstimator;
use crate::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::limitlaw::{bridge_covariance, CostProcess, CrossCov, GaussianTripleModel};
use crate::measure::{DiscreteMeasure, EmpiricalSample, Point};

/// `c_theta(x, y) = ||x - y - theta||^2` where `theta = E[X] - E[Y]` is
/// estimated by the difference of sample means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeanShiftCost;

fn measure_mean(mu: &DiscreteMeasure) -> Vec<f64> {
    let mut m = vec![0.0; mu.dim()];
    for (x, w) in mu.support().iter().zip(mu.weights()) {
        m.iter_mut().zip(x.coords()).for_each(|(a, b)| *a += w * b);
    }
    m
}

impl MeanShiftCost {
    pub fn population_shift(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch(
                "measures live in different dimensions".into(),
            ));
        }
        Ok(measure_mean(mu)
            .iter()
            .zip(measure_mean(nu))
            .map(|(a, b)| a - b)
            .collect())
    }

    pub fn matrix(xs: &[Point], ys: &[Point], shift: &[f64]) -> Result<CostMatrix> {
        CostMatrix::from_supports(xs, ys, |x, y| {
            x.coords()
                .iter()
                .zip(y.coords())
                .zip(shift)
                .map(|((a, b), t)| (a - b - t) * (a - b - t))
                .sum()
        })
    }

    pub fn population_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<CostMatrix> {
        Self::matrix(mu.support(), nu.support(), &Self::population_shift(mu, nu)?)
    }

    /// Joint limit of the bridges and of `sqrt(nm/(n+m)) (c_n - c)` when
    /// `m / (n + m) -> lambda`.
    ///
    /// The shift fluctuation is `W = sqrt(lambda) G^mu(id) - sqrt(1 - lambda) G^nu(id)`
    /// and `Zc_ij = -2 <x_i - y_j - theta, W>`.
    pub fn limit_model(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        lambda: f64,
    ) -> Result<GaussianTripleModel> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must lie in (0, 1), got {lambda}"
            )));
        }
        let theta = Self::population_shift(mu, nu)?;
        let d = theta.len();
        let (n, m) = (mu.len(), nu.len());
        let x = DMatrix::from_fn(n, d, |i, r| mu.support()[i].0[r]);
        let y = DMatrix::from_fn(m, d, |j, r| nu.support()[j].0[r]);
        let (smu, snu) = (
            bridge_covariance(mu.weights()),
            bridge_covariance(nu.weights()),
        );
        let (a, b) = (lambda.sqrt(), (1.0 - lambda).sqrt());
        let cross_mu = &smu * &x * a;
        let cross_nu = &snu * &y * (-b);
        let cov_param =
            x.transpose() * &smu * &x * lambda + y.transpose() * &snu * &y * (1.0 - lambda);
        let amap = DMatrix::from_fn(n * m, d, |row, l| {
            let (i, j) = (row / m, row % m);
            -2.0 * (x[(i, l)] - y[(j, l)] - theta[l])
        });
        Ok(
            GaussianTripleModel::bridges(mu, nu, CostProcess::LinearMap { a: amap, cov_param })
                .with_cross_cov(CrossCov {
                    mu_param: cross_mu,
                    nu_param: cross_nu,
                }),
        )
    }
}

impl CostEstimator for MeanShiftCost {
    fn estimate(
        &self,
        x: &EmpiricalSample,
        y: &EmpiricalSample,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
    ) -> Result<CostMatrix> {
        let shift: Vec<f64> = x.mean().iter().zip(y.mean()).map(|(a, b)| a - b).collect();
        Self::matrix(mu.support(), nu.support(), &shift)
    }
}
