//! Regularity elevations: maps on cost matrices that fix regular costs and
//! return certified-regular surrogates for arbitrary ones.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{validate_pseudo_metric, CostMatrix, ModulusOfContinuity};
use crate::error::{Error, Result};
use crate::measure::Point;
use crate::rng::substream;
use crate::stats::Summary;

/// One chart of a combined elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    /// Row indices covered by the chart.
    pub indices: Vec<usize>,
    /// Partition weight for every row of the full support; zero outside `indices`.
    pub eta: Vec<f64>,
    /// Elevation applied to the chart's rows, expressed in chart-local row indices.
    pub spec: ElevationSpec,
}

/// Which elevation to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElevationSpec {
    /// Clamp into `[-bound, bound]`.
    Bdd { bound: f64 },
    /// Infimal convolution `min_i' c_i'j + 2 w(d(i, i'))`.
    Mod {
        w: ModulusOfContinuity,
        #[serde(with = "crate::serde_rows")]
        metric: DMatrix<f64>,
    },
    /// `min_i' c_i'j + <grad_x c(x_i', y_j), x_i - x_i'> + factor |x_i - x_i'|^gamma`.
    Hol {
        points: Vec<Point>,
        /// `gradient[i][j]` is the population gradient in `x` at `(x_i, y_j)`.
        gradient: Vec<Vec<Vec<f64>>>,
        gamma: f64,
        /// Defaults to `2 sqrt(d)`.
        factor: Option<f64>,
    },
    /// Partition-of-unity combination of chart-wise elevations.
    Com { charts: Vec<Chart> },
    /// Apply the steps in order.
    Chain { steps: Vec<ElevationSpec> },
}

impl ElevationSpec {
    /// Clamp to `[-2B, 2B]` with `B = |c|_inf + 1/2`, then the modulus elevation.
    pub fn bounded_modulus(c: &CostMatrix, w: ModulusOfContinuity, metric: DMatrix<f64>) -> Self {
        let b = c.sup_norm() + 0.5;
        Self::Chain {
            steps: vec![Self::Bdd { bound: 2.0 * b }, Self::Mod { w, metric }],
        }
    }

    /// Checks the spec against a cost with `n` rows and `m` columns.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        match self {
            Self::Bdd { bound } => {
                if !(*bound > 0.0 && bound.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "bound must be positive, got {bound}"
                    )));
                }
            }
            Self::Mod { w, metric } => {
                if metric.nrows() != n {
                    return Err(Error::InvalidSpec(format!(
                        "metric has {} points, cost has {n} rows",
                        metric.nrows()
                    )));
                }
                validate_pseudo_metric(metric)?;
                w.validate(metric.max())?;
            }
            Self::Hol {
                points,
                gradient,
                gamma,
                factor,
            } => {
                if !(*gamma > 1.0 && *gamma <= 2.0) {
                    return Err(Error::InvalidSpec(format!(
                        "gamma must lie in (1, 2], got {gamma}"
                    )));
                }
                if factor.is_some_and(|f| !(f >= 0.0)) {
                    return Err(Error::InvalidSpec("factor must be nonnegative".into()));
                }
                if points.len() != n || gradient.len() != n {
                    return Err(Error::InvalidSpec(
                        "points/gradient do not match cost rows".into(),
                    ));
                }
                let d = points.first().map_or(0, Point::dim);
                if points.iter().any(|p| p.dim() != d)
                    || gradient
                        .iter()
                        .any(|row| row.len() != m || row.iter().any(|g| g.len() != d))
                {
                    return Err(Error::InvalidSpec(
                        "gradient tensor has the wrong shape".into(),
                    ));
                }
            }
            Self::Com { charts } => {
                if charts.is_empty() {
                    return Err(Error::InvalidSpec("no charts".into()));
                }
                let mut total = vec![0.0; n];
                for (k, ch) in charts.iter().enumerate() {
                    if ch.eta.len() != n
                        || ch.indices.iter().any(|&i| i >= n)
                        || ch.indices.is_empty()
                    {
                        return Err(Error::InvalidSpec(format!("chart {k} has the wrong size")));
                    }
                    for (i, &e) in ch.eta.iter().enumerate() {
                        if e < 0.0 || (e > 0.0 && !ch.indices.contains(&i)) {
                            return Err(Error::InvalidSpec(format!(
                                "chart {k}: weight at row {i} must be nonnegative and inside the chart"
                            )));
                        }
                        total[i] += e;
                    }
                    ch.spec.validate(ch.indices.len(), m)?;
                }
                if let Some(i) = total.iter().position(|t| (t - 1.0).abs() > 1e-12) {
                    return Err(Error::InvalidSpec(format!(
                        "chart weights at row {i} do not sum to one"
                    )));
                }
            }
            Self::Chain { steps } => {
                for s in steps {
                    s.validate(n, m)?;
                }
            }
        }
        Ok(())
    }
}

/// Applies the elevation `spec` to `c`.
pub fn elevate(c: &CostMatrix, spec: &ElevationSpec) -> Result<CostMatrix> {
    spec.validate(c.nrows(), c.ncols())?;
    CostMatrix::new(apply(c.values(), spec))
}

fn apply(c: &DMatrix<f64>, spec: &ElevationSpec) -> DMatrix<f64> {
    let (n, m) = (c.nrows(), c.ncols());
    match spec {
        ElevationSpec::Bdd { bound } => c.map(|v| v.clamp(-bound, *bound)),
        ElevationSpec::Mod { w, metric } => {
            let pen = metric.map(|d| 2.0 * w.apply(d));
            DMatrix::from_fn(n, m, |i, j| {
                (0..n)
                    .map(|k| c[(k, j)] + pen[(i, k)])
                    .fold(f64::INFINITY, f64::min)
            })
        }
        ElevationSpec::Hol {
            points,
            gradient,
            gamma,
            factor,
        } => {
            let d = points[0].dim();
            let factor = factor.unwrap_or(2.0 * (d as f64).sqrt());
            DMatrix::from_fn(n, m, |i, j| {
                (0..n)
                    .map(|k| {
                        let diff: Vec<f64> = points[i]
                            .0
                            .iter()
                            .zip(&points[k].0)
                            .map(|(a, b)| a - b)
                            .collect();
                        let lin: f64 = gradient[k][j].iter().zip(&diff).map(|(g, h)| g * h).sum();
                        let norm = diff.iter().map(|h| h * h).sum::<f64>().sqrt();
                        c[(k, j)] + lin + factor * norm.powf(*gamma)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
        }
        ElevationSpec::Com { charts } => {
            let mut out = DMatrix::zeros(n, m);
            for ch in charts {
                let sub = DMatrix::from_fn(ch.indices.len(), m, |r, j| c[(ch.indices[r], j)]);
                let lifted = apply(&sub, &ch.spec);
                for (r, &i) in ch.indices.iter().enumerate() {
                    let e = ch.eta[i];
                    if e > 0.0 {
                        for j in 0..m {
                            out[(i, j)] += e * lifted[(r, j)];
                        }
                    }
                }
            }
            out
        }
        ElevationSpec::Chain { steps } => steps.iter().fold(c.clone(), |acc, s| apply(&acc, s)),
    }
}

/// `|Psi(c) - c|_inf`; zero exactly when `c` is a fixed point.
pub fn fixed_point_defect(c: &CostMatrix, spec: &ElevationSpec) -> Result<f64> {
    Ok(elevate(c, spec)?.sup_distance(c))
}

/// Rate schedule entry for [`elevation_convergence_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRate {
    pub n: usize,
    pub a_n: f64,
}

/// Monte Carlo summary of `a_n |Psi(c_n) - c_n|_inf` at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub a_n: f64,
    pub summary: Summary,
    /// Fraction of replicates with statistic exactly zero.
    pub zero_fraction: f64,
}

/// Probes `a_n |Psi(c_n) - c_n|_inf` for `c_n = c + (sigma / a_n) Z` with i.i.d. standard normal `Z`.
///
/// Fails if `c` is not itself a fixed point of the elevation.
pub fn elevation_convergence_probe(
    c: &CostMatrix,
    sigma: f64,
    spec: &ElevationSpec,
    rates: &[ProbeRate],
    reps: usize,
    seed: u64,
) -> Result<Vec<ProbeRow>> {
    let defect = fixed_point_defect(c, spec)?;
    if defect > 1e-12 * (1.0 + c.sup_norm()) {
        return Err(Error::NotFixedPoint(defect));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be positive".into()));
    }
    let (n, m) = (c.nrows(), c.ncols());
    rates
        .iter()
        .enumerate()
        .map(|(g, rate)| {
            let stats: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let mut rng = substream(seed, (g * reps + r) as u64);
                    let scale = sigma / rate.a_n;
                    let noisy = DMatrix::from_fn(n, m, |i, j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        c.get(i, j) + scale * z
                    });
                    let out = apply(&noisy, spec);
                    rate.a_n * (&out - &noisy).amax()
                })
                .collect();
            let zeros = stats.iter().filter(|&&s| s == 0.0).count();
            Ok(ProbeRow {
                n: rate.n,
                a_n: rate.a_n,
                summary: Summary::of(&stats),
                zero_fraction: zeros as f64 / reps as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{distance_matrix, modulus_bound_check};
    use proptest::prelude::*;

    fn line(n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| Point::scalar(i as f64 / (n - 1) as f64))
            .collect()
    }

    fn lipschitz_cost(n: usize, m: usize) -> CostMatrix {
        let xs = line(n);
        let ys = line(m);
        CostMatrix::from_supports(&xs, &ys, |x, y| (x.0[0] - y.0[0]).abs()).unwrap()
    }

    fn mod_spec(n: usize) -> ElevationSpec {
        ElevationSpec::Mod {
            w: ModulusOfContinuity::Linear { l: 1.0 },
            metric: distance_matrix(&line(n)),
        }
    }

    #[test]
    fn fixed_points() {
        let c = lipschitz_cost(6, 4);
        assert_eq!(elevate(&c, &ElevationSpec::Bdd { bound: 1.0 }).unwrap(), c);
        assert_eq!(elevate(&c, &mod_spec(6)).unwrap(), c);
    }

    #[test]
    fn spike_matches_brute_force() {
        let n = 5;
        let c = CostMatrix::new(DMatrix::from_fn(
            n,
            3,
            |i, _| if i == 2 { 1.0 } else { 0.0 },
        ))
        .unwrap();
        let spec = ElevationSpec::Mod {
            w: ModulusOfContinuity::Linear { l: 0.1 },
            metric: distance_matrix(&line(n)),
        };
        let out = elevate(&c, &spec).unwrap();
        let d = distance_matrix(&line(n));
        for i in 0..n {
            for j in 0..3 {
                let mut best = f64::INFINITY;
                for k in 0..n {
                    best = best.min(c.get(k, j) + 2.0 * 0.1 * d[(i, k)]);
                }
                assert_eq!(out.get(i, j), best);
            }
        }
        assert!((out.get(2, 0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn holder_fixed_point_for_smooth_cost() {
        // c(x, y) = (x - y)^2 has 2-Lipschitz gradient, so the gamma = 2 remainder
        // (x - x')^2 sits below 2 sqrt(1) (x - x')^2.
        let xs = line(7);
        let ys = line(3);
        let c = CostMatrix::from_supports(&xs, &ys, |x, y| (x.0[0] - y.0[0]).powi(2)).unwrap();
        let gradient: Vec<Vec<Vec<f64>>> = xs
            .iter()
            .map(|x| ys.iter().map(|y| vec![2.0 * (x.0[0] - y.0[0])]).collect())
            .collect();
        let spec = ElevationSpec::Hol {
            points: xs.clone(),
            gradient,
            gamma: 2.0,
            factor: None,
        };
        assert!(fixed_point_defect(&c, &spec).unwrap() < 1e-15);
        let mut vals = c.values().clone();
        vals[(3, 1)] += 0.5;
        let out = elevate(&CostMatrix::new(vals).unwrap(), &spec).unwrap();
        assert!(out.get(3, 1) < c.get(3, 1) + 0.5);
    }

    #[test]
    fn combination_of_charts() {
        let n = 4;
        let c = lipschitz_cost(n, 2);
        let sub = |idx: &[usize]| ElevationSpec::Mod {
            w: ModulusOfContinuity::Linear { l: 1.0 },
            metric: distance_matrix(&idx.iter().map(|&i| line(n)[i].clone()).collect::<Vec<_>>()),
        };
        let spec = ElevationSpec::Com {
            charts: vec![
                Chart {
                    indices: vec![0, 1, 2],
                    eta: vec![1.0, 0.5, 0.5, 0.0],
                    spec: sub(&[0, 1, 2]),
                },
                Chart {
                    indices: vec![1, 2, 3],
                    eta: vec![0.0, 0.5, 0.5, 1.0],
                    spec: sub(&[1, 2, 3]),
                },
            ],
        };
        assert!(fixed_point_defect(&c, &spec).unwrap() < 1e-15);
        let bad = ElevationSpec::Com {
            charts: vec![Chart {
                indices: vec![0, 1],
                eta: vec![0.5, 0.5, 0.0, 0.0],
                spec: sub(&[0, 1]),
            }],
        };
        assert!(elevate(&c, &bad).is_err());
    }

    #[test]
    fn probe_zero_noise_and_interior_clamp() {
        let c = lipschitz_cost(5, 3);
        let rates = [
            ProbeRate { n: 100, a_n: 10.0 },
            ProbeRate {
                n: 10_000,
                a_n: 100.0,
            },
        ];
        let rows = elevation_convergence_probe(&c, 0.0, &mod_spec(5), &rates, 20, 1).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.summary.mean == 0.0 && r.zero_fraction == 1.0));
        let rows = elevation_convergence_probe(
            &c,
            1e-3,
            &ElevationSpec::Bdd { bound: 2.0 },
            &rates,
            50,
            1,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.summary.mean == 0.0));
    }

    #[test]
    fn probe_rejects_non_fixed_point() {
        let c = lipschitz_cost(5, 3).map(|v| 3.0 * v).unwrap();
        let err = elevation_convergence_probe(
            &c,
            1.0,
            &mod_spec(5),
            &[ProbeRate { n: 1, a_n: 1.0 }],
            2,
            0,
        );
        assert!(matches!(err, Err(Error::NotFixedPoint(_))));
    }

    #[test]
    fn probe_medians_decrease() {
        let c = lipschitz_cost(10, 4);
        let rates: Vec<ProbeRate> = [100usize, 1_000, 10_000]
            .iter()
            .map(|&n| ProbeRate {
                n,
                a_n: (n as f64).sqrt(),
            })
            .collect();
        let rows = elevation_convergence_probe(&c, 1.0, &mod_spec(10), &rates, 200, 11).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].summary.median <= w[0].summary.median);
        }
        assert!(rows[0].summary.median > 0.0);
    }

    proptest! {
        #[test]
        fn outputs_are_certified(
            vals in prop::collection::vec(-5.0f64..5.0, 24),
            shift in prop::collection::vec(-5.0f64..5.0, 24),
        ) {
            let n = 6;
            let c = CostMatrix::new(DMatrix::from_fn(n, 4, |i, j| vals[i * 4 + j])).unwrap();
            let c2 = CostMatrix::new(DMatrix::from_fn(n, 4, |i, j| vals[i * 4 + j] + 0.1 * shift[i * 4 + j])).unwrap();
            let w = ModulusOfContinuity::Linear { l: 1.0 };
            let metric = distance_matrix(&line(n));
            let spec = ElevationSpec::Mod { w: w.clone(), metric: metric.clone() };
            let out = elevate(&c, &spec).unwrap();
            prop_assert!(modulus_bound_check(&out, &w.scaled(2.0), &metric).unwrap());
            let out2 = elevate(&c2, &spec).unwrap();
            prop_assert!(out.sup_distance(&out2) <= c.sup_distance(&c2) + 1e-12);

            let b = 1.0;
            let chain = ElevationSpec::Chain { steps: vec![ElevationSpec::Bdd { bound: b }, spec] };
            let out = elevate(&c, &chain).unwrap();
            prop_assert!(out.sup_norm() <= 2.0 * b);
            prop_assert!(modulus_bound_check(&out, &w.scaled(2.0), &metric).unwrap());
        }
    }
}
