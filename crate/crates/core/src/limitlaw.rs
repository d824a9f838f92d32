//! Samplers for the limit laws of empirical OT values under estimated costs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostFamily, CostMatrix};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Point, SampleRatio};
use crate::rng::substream;
use crate::stats::Summary;
use crate::transport::{FaceOptions, OptimalFaces};

/// Gaussian fluctuation of the estimated cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostProcess {
    Zero,
    /// Independent centered entries with the given standard deviations.
    IndependentEntries {
        #[serde(with = "crate::serde_rows")]
        std: DMatrix<f64>,
    },
    /// `Zc_ij = (A W)_{i M + j}` with `W ~ N(0, cov_param)`.
    LinearMap {
        #[serde(with = "crate::serde_rows")]
        a: DMatrix<f64>,
        #[serde(with = "crate::serde_rows")]
        cov_param: DMatrix<f64>,
    },
}

impl CostProcess {
    fn param_dim(&self) -> usize {
        match self {
            Self::LinearMap { cov_param, .. } => cov_param.nrows(),
            _ => 0,
        }
    }
}

/// Covariances between the bridges and the parameter `W` of a linear-map cost process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCov {
    /// `Cov(Zmu_i, W_l)`, `N x k`.
    #[serde(with = "crate::serde_rows")]
    pub mu_param: DMatrix<f64>,
    /// `Cov(Znu_j, W_l)`, `M x k`.
    #[serde(with = "crate::serde_rows")]
    pub nu_param: DMatrix<f64>,
}

/// Joint centered Gaussian law of `(G^mu, G^nu, G^c)` on finite supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTripleModel {
    #[serde(with = "crate::serde_rows")]
    pub cov_mu: DMatrix<f64>,
    #[serde(with = "crate::serde_rows")]
    pub cov_nu: DMatrix<f64>,
    pub cost_process: CostProcess,
    pub cross_cov: Option<CrossCov>,
}

/// Multinomial bridge covariance `diag(w) - w w^T`.
pub fn bridge_covariance(weights: &[f64]) -> DMatrix<f64> {
    let n = weights.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { weights[i] } else { 0.0 };
        d - weights[i] * weights[j]
    })
}

impl GaussianTripleModel {
    /// Independent Brownian bridges for `mu` and `nu` with the given cost process.
    pub fn bridges(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost_process: CostProcess) -> Self {
        Self {
            cov_mu: bridge_covariance(mu.weights()),
            cov_nu: bridge_covariance(nu.weights()),
            cost_process,
            cross_cov: None,
        }
    }

    pub fn with_cross_cov(mut self, cross: CrossCov) -> Self {
        self.cross_cov = Some(cross);
        self
    }

    pub fn n(&self) -> usize {
        self.cov_mu.nrows()
    }

    pub fn m(&self) -> usize {
        self.cov_nu.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let check_cov = |c: &DMatrix<f64>, name: &str| -> Result<()> {
            if !c.is_square() {
                return Err(Error::InvalidSpec(format!(
                    "{name} covariance is not square"
                )));
            }
            if (c - c.transpose()).amax() > 1e-12 * (1.0 + c.amax()) {
                return Err(Error::InvalidSpec(format!(
                    "{name} covariance is not symmetric"
                )));
            }
            Ok(())
        };
        check_cov(&self.cov_mu, "mu")?;
        check_cov(&self.cov_nu, "nu")?;
        for (c, name) in [(&self.cov_mu, "mu"), (&self.cov_nu, "nu")] {
            let row_sums = c.column_sum();
            if row_sums.amax() > 1e-10 {
                return Err(Error::InvalidSpec(format!(
                    "{name} covariance does not annihilate constants"
                )));
            }
        }
        match &self.cost_process {
            CostProcess::Zero => {}
            CostProcess::IndependentEntries { std } => {
                if std.nrows() != n || std.ncols() != m {
                    return Err(Error::DimensionMismatch("cost std shape".into()));
                }
                if std.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::InvalidSpec("cost std must be nonnegative".into()));
                }
                if self.cross_cov.is_some() {
                    return Err(Error::InvalidSpec(
                        "cross covariance requires a linear-map cost process".into(),
                    ));
                }
            }
            CostProcess::LinearMap { a, cov_param } => {
                check_cov(cov_param, "parameter")?;
                if a.nrows() != n * m || a.ncols() != cov_param.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "linear map is {}x{}, expected {}x{}",
                        a.nrows(),
                        a.ncols(),
                        n * m,
                        cov_param.nrows()
                    )));
                }
            }
        }
        if let Some(x) = &self.cross_cov {
            let k = self.cost_process.param_dim();
            if x.mu_param.shape() != (n, k) || x.nu_param.shape() != (m, k) {
                return Err(Error::DimensionMismatch("cross covariance blocks".into()));
            }
        }
        Ok(())
    }

    /// Covariance of `(Zmu, Znu, W)`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let (n, m, k) = (self.n(), self.m(), self.cost_process.param_dim());
        let mut s = DMatrix::zeros(n + m + k, n + m + k);
        s.view_mut((0, 0), (n, n)).copy_from(&self.cov_mu);
        s.view_mut((n, n), (m, m)).copy_from(&self.cov_nu);
        if let CostProcess::LinearMap { cov_param, .. } = &self.cost_process {
            s.view_mut((n + m, n + m), (k, k)).copy_from(cov_param);
        }
        if let Some(x) = &self.cross_cov {
            s.view_mut((0, n + m), (n, k)).copy_from(&x.mu_param);
            s.view_mut((n + m, 0), (k, n))
                .copy_from(&x.mu_param.transpose());
            s.view_mut((n, n + m), (m, k)).copy_from(&x.nu_param);
            s.view_mut((n + m, n), (k, m))
                .copy_from(&x.nu_param.transpose());
        }
        s
    }

    /// Factorizes the joint covariance for repeated sampling.
    pub fn sampler(&self) -> Result<BridgeSampler> {
        self.validate()?;
        let sigma = self.joint_covariance();
        let dim = sigma.nrows();
        let trace = sigma.trace();
        let factor = if trace <= 0.0 {
            DMatrix::zeros(dim, dim)
        } else {
            let jitter = 1e-12 * trace / dim as f64;
            let jittered = &sigma + DMatrix::identity(dim, dim) * jitter;
            match jittered.clone().cholesky() {
                Some(ch) => ch.l(),
                None => {
                    let eig = SymmetricEigen::new(jittered);
                    let scale = eig.eigenvalues.amax().max(1.0);
                    let min = eig.eigenvalues.min();
                    if min < -1e-9 * scale {
                        return Err(Error::NotPsd(min));
                    }
                    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                    &eig.eigenvectors * DMatrix::from_diagonal(&root)
                }
            }
        };
        Ok(BridgeSampler {
            factor,
            n: self.n(),
            m: self.m(),
            cost_process: self.cost_process.clone(),
        })
    }
}

/// One joint draw `(Zmu, Znu, Zc)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeDraw {
    pub zmu: Vec<f64>,
    pub znu: Vec<f64>,
    pub zc: DMatrix<f64>,
}

/// Precomputed square root of the joint covariance.
#[derive(Debug, Clone)]
pub struct BridgeSampler {
    factor: DMatrix<f64>,
    n: usize,
    m: usize,
    cost_process: CostProcess,
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

impl BridgeSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> BridgeDraw {
        let dim = self.factor.nrows();
        let xi = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = &self.factor * xi;
        let (n, m) = (self.n, self.m);
        let mut zmu: Vec<f64> = z.rows(0, n).iter().copied().collect();
        let mut znu: Vec<f64> = z.rows(n, m).iter().copied().collect();
        // Project onto the zero-sum subspace so constants are annihilated exactly.
        center(&mut zmu);
        center(&mut znu);
        let zc = match &self.cost_process {
            CostProcess::Zero => DMatrix::zeros(n, m),
            CostProcess::IndependentEntries { std } => DMatrix::from_fn(n, m, |i, j| {
                std[(i, j)] * rng.sample::<f64, _>(StandardNormal)
            }),
            CostProcess::LinearMap { a, .. } => {
                let w = z.rows(n + m, a.ncols()).into_owned();
                let flat = a * w;
                DMatrix::from_fn(n, m, |i, j| flat[i * m + j])
            }
        };
        BridgeDraw { zmu, znu, zc }
    }
}

/// `n_draws` joint draws; draw `i` uses substream `i` of `seed`.
pub fn sample_bridges(
    model: &GaussianTripleModel,
    seed: u64,
    n_draws: usize,
) -> Result<Vec<BridgeDraw>> {
    let sampler = model.sampler()?;
    Ok((0..n_draws)
        .into_par_iter()
        .map(|i| sampler.draw(&mut substream(seed, i as u64)))
        .collect())
}

/// How the two bridges enter the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaling {
    /// `sqrt(lambda) G^mu + sqrt(1 - lambda) G^nu`.
    TwoSample { lambda: f64 },
    /// Only `G^mu` with unit weight; `nu` is known.
    OneSample,
    /// Arbitrary weights on the two bridges.
    Custom { mu: f64, nu: f64 },
}

impl Scaling {
    pub fn from_ratio(r: &SampleRatio) -> Self {
        Self::TwoSample { lambda: r.lambda }
    }

    pub fn weights(&self) -> Result<(f64, f64)> {
        match *self {
            Self::TwoSample { lambda } => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "lambda must lie in (0, 1), got {lambda}"
                    )));
                }
                Ok((lambda.sqrt(), (1.0 - lambda).sqrt()))
            }
            Self::OneSample => Ok((1.0, 0.0)),
            Self::Custom { mu, nu } => Ok((mu, nu)),
        }
    }
}

/// Options shared by the limit samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub face_tol: Option<f64>,
    /// Replace face programs by point evaluations once uniqueness is certified.
    pub exploit_uniqueness: bool,
    /// Random probes used by the uniqueness certificates.
    pub uniqueness_trials: usize,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            face_tol: None,
            exploit_uniqueness: true,
            uniqueness_trials: 16,
        }
    }
}

/// Scalar draws from a limit law with their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSampleSet {
    pub draws: Vec<f64>,
    pub summary: Summary,
}

impl LimitSampleSet {
    pub fn new(draws: Vec<f64>) -> Result<Self> {
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::Numerical("non-finite limit draw".into()));
        }
        let summary = Summary::of(&draws);
        Ok(Self { draws, summary })
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut s = self.draws.clone();
        s.sort_by(f64::total_cmp);
        s
    }
}

/// Face programs for one instance, with optional uniqueness shortcuts.
struct LimitFaces {
    faces: OptimalFaces,
    plan_unique: bool,
    potentials_unique: bool,
}

impl LimitFaces {
    fn new(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        c: &CostMatrix,
        opts: &LimitOptions,
        seed: u64,
        need_plan: bool,
    ) -> Result<Self> {
        let faces = OptimalFaces::new(
            mu,
            nu,
            c,
            FaceOptions {
                face_tol: opts.face_tol,
                dual_box: false,
            },
        )?;
        let mut rng = substream(seed, u64::MAX);
        let (plan_unique, potentials_unique) = if opts.exploit_uniqueness {
            let p = need_plan
                && faces
                    .plan_uniqueness(opts.uniqueness_trials, 1e-7, &mut rng)?
                    .unique;
            let d = faces.potentials_unique(opts.uniqueness_trials, 1e-6, &mut rng)?;
            (p, d)
        } else {
            (false, false)
        };
        Ok(Self {
            faces,
            plan_unique,
            potentials_unique,
        })
    }

    fn primal(&self, g: &DMatrix<f64>) -> Result<f64> {
        if self.plan_unique {
            Ok(self.faces.solution().plan.pair(g))
        } else {
            self.faces.min_primal(g)
        }
    }

    fn dual(&self, gphi: &[f64], gpsi: &[f64]) -> Result<f64> {
        if self.potentials_unique {
            Ok(self.faces.point_eval(gphi, gpsi))
        } else {
            self.faces.max_dual(gphi, gpsi)
        }
    }
}

fn check_model(
    model: &GaussianTripleModel,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<()> {
    if model.n() != mu.len() || model.m() != nu.len() {
        return Err(Error::DimensionMismatch(format!(
            "model is for {}x{} supports, instance is {}x{}",
            model.n(),
            model.m(),
            mu.len(),
            nu.len()
        )));
    }
    Ok(())
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

/// Draws from the limit of the OT value under weakly converging costs:
/// `min_{pi optimal} <Zc, pi> + max_{(phi, psi) optimal} s_mu Zmu . phi + s_nu Znu . psi`.
#[allow(clippy::too_many_arguments)]
pub fn sample_limit_wcc(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostMatrix,
    model: &GaussianTripleModel,
    scaling: Scaling,
    n_draws: usize,
    opts: &LimitOptions,
    seed: u64,
) -> Result<LimitSampleSet> {
    check_model(model, mu, nu)?;
    let (smu, snu) = scaling.weights()?;
    let sampler = model.sampler()?;
    let need_plan = !matches!(model.cost_process, CostProcess::Zero);
    let lf = LimitFaces::new(mu, nu, c, opts, seed, need_plan)?;
    let draws = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let z = sampler.draw(&mut substream(seed, i as u64));
            let primal = if need_plan { lf.primal(&z.zc)? } else { 0.0 };
            Ok(primal + lf.dual(&scaled(&z.zmu, smu), &scaled(&z.znu, snu))?)
        })
        .collect::<Result<Vec<f64>>>()?;
    LimitSampleSet::new(draws)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalMode {
    Inf,
    Sup,
}

/// Limit draws for the infimum or supremum of OT values over a cost grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalLimit {
    pub samples: LimitSampleSet,
    /// OT value at each grid point.
    pub values: Vec<f64>,
    /// Grid indices attaining the extremum within `arg_tol`.
    pub active: Vec<usize>,
}

/// Default tolerance for membership in the set of extremizers.
pub fn default_arg_tol(extremum: f64) -> f64 {
    1e-7 * (1.0 + extremum.abs())
}

/// Limit law of `inf` / `sup` over a grid of costs `c_theta`.
///
/// The model must carry bridges only (a zero cost process). In `Inf` mode the
/// potentials at every minimizer must be unique up to shift.
#[allow(clippy::too_many_arguments)]
pub fn sample_limit_extremal(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    costs: &[CostMatrix],
    mode: ExtremalMode,
    model: &GaussianTripleModel,
    scaling: Scaling,
    n_draws: usize,
    arg_tol: Option<f64>,
    opts: &LimitOptions,
    seed: u64,
) -> Result<ExtremalLimit> {
    if costs.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_model(model, mu, nu)?;
    if model.cost_process != CostProcess::Zero {
        return Err(Error::InvalidSpec(
            "extremal limits take bridges only".into(),
        ));
    }
    let (smu, snu) = scaling.weights()?;
    let sampler = model.sampler()?;
    let values = costs
        .iter()
        .map(|c| crate::transport::ot_value(mu, nu, c))
        .collect::<Result<Vec<f64>>>()?;
    let ext = match mode {
        ExtremalMode::Inf => values.iter().copied().fold(f64::INFINITY, f64::min),
        ExtremalMode::Sup => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let tol = arg_tol.unwrap_or_else(|| default_arg_tol(ext));
    let active: Vec<usize> = (0..costs.len())
        .filter(|&t| (values[t] - ext).abs() <= tol)
        .collect();
    let faces = active
        .iter()
        .map(|&t| LimitFaces::new(mu, nu, &costs[t], opts, seed ^ t as u64, false))
        .collect::<Result<Vec<_>>>()?;
    if mode == ExtremalMode::Inf {
        for (lf, &t) in faces.iter().zip(&active) {
            let unique = if opts.exploit_uniqueness {
                lf.potentials_unique
            } else {
                lf.faces.potentials_unique(
                    opts.uniqueness_trials,
                    1e-6,
                    &mut substream(seed, u64::MAX - 1),
                )?
            };
            if !unique {
                return Err(Error::KpViolated(t));
            }
        }
    }
    let draws = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let z = sampler.draw(&mut substream(seed, i as u64));
            let (gphi, gpsi) = (scaled(&z.zmu, smu), scaled(&z.znu, snu));
            let mut best = match mode {
                ExtremalMode::Inf => f64::INFINITY,
                ExtremalMode::Sup => f64::NEG_INFINITY,
            };
            for lf in &faces {
                best = match mode {
                    ExtremalMode::Inf => best.min(lf.faces.point_eval(&gphi, &gpsi)),
                    ExtremalMode::Sup => best.max(lf.dual(&gphi, &gpsi)?),
                };
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ExtremalLimit {
        samples: LimitSampleSet::new(draws)?,
        values,
        active,
    })
}

/// [`sample_limit_extremal`] for a parametric family evaluated on the supports.
#[allow(clippy::too_many_arguments)]
pub fn sample_limit_extremal_family(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    family: &CostFamily,
    mode: ExtremalMode,
    model: &GaussianTripleModel,
    scaling: Scaling,
    n_draws: usize,
    arg_tol: Option<f64>,
    opts: &LimitOptions,
    seed: u64,
) -> Result<ExtremalLimit> {
    let costs = family.matrices(mu.support(), nu.support())?;
    sample_limit_extremal(
        mu, nu, &costs, mode, model, scaling, n_draws, arg_tol, opts, seed,
    )
}

/// Joint draws of the OT process limit `(max over S_c_theta of the dual functional)_theta`.
///
/// Row `i` of the result is draw `i` across the grid.
#[allow(clippy::too_many_arguments)]
pub fn sample_limit_process(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    costs: &[CostMatrix],
    model: &GaussianTripleModel,
    scaling: Scaling,
    n_draws: usize,
    opts: &LimitOptions,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_model(model, mu, nu)?;
    let (smu, snu) = scaling.weights()?;
    let sampler = model.sampler()?;
    let faces = costs
        .iter()
        .enumerate()
        .map(|(t, c)| LimitFaces::new(mu, nu, c, opts, seed ^ t as u64, false))
        .collect::<Result<Vec<_>>>()?;
    (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let z = sampler.draw(&mut substream(seed, i as u64));
            let (gphi, gpsi) = (scaled(&z.zmu, smu), scaled(&z.znu, snu));
            faces.iter().map(|lf| lf.dual(&gphi, &gpsi)).collect()
        })
        .collect()
}

/// Linear-map cost process of the group-family goodness-of-fit statistic.
///
/// `jacobian[i]` is the `d x k` derivative of `theta -> g_theta^{-1}(x_i)` at the
/// true parameter, `g_inv[i]` the point `g_theta^{-1}(x_i)`. The resulting
/// process is `Zc_ij = 2 <J_i Z_theta, g_inv_i - y_j>` with `Z_theta ~ N(0, theta_cov)`.
pub fn gof_cost_process_model(
    theta_cov: &DMatrix<f64>,
    jacobian: &[DMatrix<f64>],
    g_inv: &[Point],
    y_support: &[Point],
) -> Result<CostProcess> {
    let k = theta_cov.nrows();
    if !theta_cov.is_square() {
        return Err(Error::DimensionMismatch(
            "parameter covariance must be square".into(),
        ));
    }
    if jacobian.len() != g_inv.len() {
        return Err(Error::DimensionMismatch(
            "one Jacobian per support point".into(),
        ));
    }
    let d = g_inv.first().map_or(0, Point::dim);
    if jacobian.iter().any(|j| j.shape() != (d, k))
        || g_inv.iter().any(|p| p.dim() != d)
        || y_support.iter().any(|p| p.dim() != d)
    {
        return Err(Error::DimensionMismatch(
            "Jacobian or point dimensions".into(),
        ));
    }
    if theta_cov.iter().all(|&v| v == 0.0) {
        return Ok(CostProcess::Zero);
    }
    let (n, m) = (g_inv.len(), y_support.len());
    let a = DMatrix::from_fn(n * m, k, |row, l| {
        let (i, j) = (row / m, row % m);
        2.0 * (0..d)
            .map(|r| jacobian[i][(r, l)] * (g_inv[i].0[r] - y_support[j].0[r]))
            .sum::<f64>()
    });
    Ok(CostProcess::LinearMap {
        a,
        cov_param: theta_cov.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{covariance, variance};

    fn two_by_two() -> (DiscreteMeasure, DiscreteMeasure, CostMatrix) {
        let mu = DiscreteMeasure::on_indices(&[0.6, 0.4]).unwrap();
        let nu = DiscreteMeasure::on_indices(&[0.3, 0.7]).unwrap();
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        (mu, nu, c)
    }

    #[test]
    fn dirac_bridge_is_zero() {
        let d = DiscreteMeasure::dirac(Point::scalar(0.0));
        let model = GaussianTripleModel::bridges(&d, &d, CostProcess::Zero);
        let draws = sample_bridges(&model, 3, 10).unwrap();
        assert!(draws
            .iter()
            .all(|z| z.zmu == vec![0.0] && z.zc[(0, 0)] == 0.0));
        let c = CostMatrix::constant(1, 1, 2.0).unwrap();
        let s = sample_limit_wcc(
            &d,
            &d,
            &c,
            &model,
            Scaling::TwoSample { lambda: 0.5 },
            50,
            &LimitOptions::default(),
            1,
        )
        .unwrap();
        assert!(s.draws.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_two_point_bridge_moments() {
        let u = DiscreteMeasure::on_indices(&[0.5, 0.5]).unwrap();
        let model = GaussianTripleModel::bridges(&u, &u, CostProcess::Zero);
        let draws = sample_bridges(&model, 42, 100_000).unwrap();
        let z1: Vec<f64> = draws.iter().map(|d| d.zmu[0]).collect();
        let z2: Vec<f64> = draws.iter().map(|d| d.zmu[1]).collect();
        let v = variance(&z1);
        // Standard error of a normal variance estimate: sigma^2 sqrt(2 / n).
        let se = 0.25 * (2.0 / 1e5f64).sqrt();
        assert!((v - 0.25).abs() < 3.0 * se, "{v}");
        let corr = covariance(&z1, &z2) / (variance(&z1) * variance(&z2)).sqrt();
        assert!((corr + 1.0).abs() < 1e-9);
        for d in &draws {
            let norm = d.zmu.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(d.zmu.iter().sum::<f64>().abs() <= 1e-6 * norm.max(1e-300));
            assert!(d.zc.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn non_psd_is_rejected() {
        let (mu, nu, _) = two_by_two();
        let model = GaussianTripleModel::bridges(
            &mu,
            &nu,
            CostProcess::LinearMap {
                a: DMatrix::zeros(4, 1),
                cov_param: DMatrix::from_element(1, 1, 0.01),
            },
        )
        .with_cross_cov(CrossCov {
            mu_param: DMatrix::from_column_slice(2, 1, &[5.0, -5.0]),
            nu_param: DMatrix::zeros(2, 1),
        });
        assert!(matches!(model.sampler(), Err(Error::NotPsd(_))));
    }

    #[test]
    fn variance_without_cost_noise() {
        // phi = (0, -1), psi = (0, 1); Var = lambda Var_mu(phi) + (1 - lambda) Var_nu(psi).
        let (mu, nu, c) = two_by_two();
        let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
        let s = sample_limit_wcc(
            &mu,
            &nu,
            &c,
            &model,
            Scaling::TwoSample { lambda: 0.5 },
            40_000,
            &LimitOptions::default(),
            9,
        )
        .unwrap();
        let expected = 0.5 * 0.24 + 0.5 * 0.21;
        let v = variance(&s.draws);
        assert!((v / expected - 1.0).abs() < 0.05, "{v} vs {expected}");
    }

    #[test]
    fn shortcut_agrees_with_face_programs() {
        let (mu, nu, c) = two_by_two();
        let std = DMatrix::from_element(2, 2, 0.5);
        let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::IndependentEntries { std });
        let fast = LimitOptions::default();
        let slow = LimitOptions {
            exploit_uniqueness: false,
            ..fast
        };
        let sc = Scaling::TwoSample { lambda: 0.3 };
        let a = sample_limit_wcc(&mu, &nu, &c, &model, sc, 500, &fast, 5).unwrap();
        let b = sample_limit_wcc(&mu, &nu, &c, &model, sc, 500, &slow, 5).unwrap();
        for (x, y) in a.draws.iter().zip(&b.draws) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn scaling_equivariance() {
        let (mu, nu, c) = two_by_two();
        let std = DMatrix::from_element(2, 2, 0.3);
        let base = GaussianTripleModel::bridges(
            &mu,
            &nu,
            CostProcess::IndependentEntries { std: std.clone() },
        );
        let s = 2.5;
        let big = GaussianTripleModel {
            cov_mu: &base.cov_mu * (s * s),
            cov_nu: &base.cov_nu * (s * s),
            cost_process: CostProcess::IndependentEntries { std: std * s },
            cross_cov: None,
        };
        let opts = LimitOptions {
            exploit_uniqueness: false,
            ..Default::default()
        };
        let sc = Scaling::TwoSample { lambda: 0.5 };
        let a = sample_limit_wcc(&mu, &nu, &c, &base, sc, 200, &opts, 17).unwrap();
        let b = sample_limit_wcc(&mu, &nu, &c, &big, sc, 200, &opts, 17).unwrap();
        for (x, y) in a.draws.iter().zip(&b.draws) {
            assert!((s * x - y).abs() < 1e-6 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn constant_potentials_degenerate() {
        // Zero cost: every constant pair is optimal and the dual functional vanishes.
        let (mu, nu, _) = two_by_two();
        let c = CostMatrix::constant(2, 2, 0.0).unwrap();
        let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
        let s = sample_limit_wcc(
            &mu,
            &nu,
            &c,
            &model,
            Scaling::TwoSample { lambda: 0.5 },
            100,
            &LimitOptions::default(),
            2,
        )
        .unwrap();
        assert!(s.draws.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let (mu, nu, c) = two_by_two();
        let model = GaussianTripleModel::bridges(
            &mu,
            &nu,
            CostProcess::IndependentEntries {
                std: DMatrix::from_element(2, 2, 1.0),
            },
        );
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    sample_limit_wcc(
                        &mu,
                        &nu,
                        &c,
                        &model,
                        Scaling::OneSample,
                        300,
                        &LimitOptions::default(),
                        77,
                    )
                    .unwrap()
                })
        };
        assert_eq!(run(1).draws, run(4).draws);
    }

    #[test]
    fn extremal_singleton_and_dominated() {
        let (mu, nu, c) = two_by_two();
        let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
        let sc = Scaling::TwoSample { lambda: 0.5 };
        let opts = LimitOptions::default();
        let single = sample_limit_extremal(
            &mu,
            &nu,
            std::slice::from_ref(&c),
            ExtremalMode::Sup,
            &model,
            sc,
            300,
            None,
            &opts,
            4,
        )
        .unwrap();
        let fixed = sample_limit_wcc(&mu, &nu, &c, &model, sc, 300, &opts, 4).unwrap();
        assert_eq!(single.samples.draws, fixed.draws);
        let far = c.map(|v| v + 10.0).unwrap();
        let r = sample_limit_extremal(
            &mu,
            &nu,
            &[c.clone(), far],
            ExtremalMode::Inf,
            &model,
            sc,
            300,
            None,
            &opts,
            4,
        )
        .unwrap();
        assert_eq!(r.active, vec![0]);
        assert_eq!(r.samples.draws, fixed.draws);
    }

    #[test]
    fn extremal_inf_requires_unique_potentials() {
        let u = DiscreteMeasure::on_indices(&[0.5, 0.5]).unwrap();
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let model = GaussianTripleModel::bridges(&u, &u, CostProcess::Zero);
        let r = sample_limit_extremal(
            &u,
            &u,
            &[c],
            ExtremalMode::Inf,
            &model,
            Scaling::OneSample,
            10,
            None,
            &LimitOptions::default(),
            0,
        );
        assert!(matches!(r, Err(Error::KpViolated(0))));
    }

    #[test]
    fn extremal_matches_bivariate_oracle() {
        // Two costs with equal OT value 0.3 and distinct unique potentials.
        let (mu, nu, c1) = two_by_two();
        let c2 = CostMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
        let sc = Scaling::TwoSample { lambda: 0.5 };
        let opts = LimitOptions::default();
        let n = 20_000;
        let inf = sample_limit_extremal(
            &mu,
            &nu,
            &[c1.clone(), c2.clone()],
            ExtremalMode::Inf,
            &model,
            sc,
            n,
            None,
            &opts,
            8,
        )
        .unwrap();
        assert_eq!(inf.active, vec![0, 1]);
        // Direct oracle from the same bridge draws and hand-derived potentials:
        // c1: phi = (0, -1), psi = (0, 1); c2: phi = (0, 3), psi = (-3, 0).
        let draws = sample_bridges(&model, 8, n).unwrap();
        let h = 0.5f64.sqrt();
        let oracle: Vec<f64> = draws
            .iter()
            .map(|z| {
                let g1 = h * (-z.zmu[1]) + h * z.znu[1];
                let g2 = h * (3.0 * z.zmu[1]) + h * (-3.0 * z.znu[0]);
                g1.min(g2)
            })
            .collect();
        for (a, b) in inf.samples.draws.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(inf.samples.summary.mean < 0.0);
    }

    #[test]
    fn gof_location_family() {
        let xs = [Point::scalar(0.5), Point::scalar(2.0)];
        let ys = vec![Point::scalar(0.0), Point::scalar(1.0), Point::scalar(3.0)];
        let theta0 = 0.25;
        let g_inv: Vec<Point> = xs.iter().map(|x| Point::scalar(x.0[0] - theta0)).collect();
        let jac = vec![DMatrix::from_element(1, 1, -1.0); 2];
        let cov = DMatrix::from_element(1, 1, 0.7);
        let CostProcess::LinearMap { a, .. } =
            gof_cost_process_model(&cov, &jac, &g_inv, &ys).unwrap()
        else {
            panic!("expected a linear map");
        };
        for i in 0..2 {
            for j in 0..3 {
                let expected = -2.0 * (xs[i].0[0] - theta0 - ys[j].0[0]);
                assert!((a[(i * 3 + j, 0)] - expected).abs() < 1e-15);
            }
        }
        let zero = gof_cost_process_model(&DMatrix::zeros(1, 1), &jac, &g_inv, &ys).unwrap();
        assert_eq!(zero, CostProcess::Zero);
    }
}
