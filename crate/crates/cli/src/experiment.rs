//! Monte Carlo experiment runners behind `otlimit experiment`.

use nalgebra::DMatrix;
use otlimit_core::applications::{
    gof_limit, gof_statistic, procrustes_ot, sketched_limit, sketched_wasserstein, sliced::sliced_family,
    sliced::support_diameter, sliced_limits, GofModel, GroupFamily, MixtureSpec, RotationGrid, SlicedLimit,
    SlicedMode, SphereGrid,
};
use otlimit_core::bootstrap::{bootstrap_ot_process, bootstrap_ot_wcc, ProcessLaw};
use otlimit_core::limitlaw::{sample_limit_extremal, sample_limit_wcc, CostProcess, ExtremalMode};
use otlimit_core::regelev::{elevation_convergence_probe, fixed_point_defect};
use otlimit_core::rng::{child_seed, substream};
use otlimit_core::stats::ks_two_sample;
use otlimit_core::{
    d_bl_1d, ot_value, sandwich_bounds, BootstrapConfig, CostEstimator, CostFamily, CostMatrix, DiscreteMeasure,
    EmpiricalLaw1D, EmpiricalSample, GaussianTripleModel, LimitOptions, MeanShiftCost, PerturbationTriple, Point,
    ProcessMode, SampleRatio, Scaling, Summary,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{CostSpec, ExperimentConfig, FamilySpec, Scenario, StatMode};
use crate::error::{CliError, CliResult};
use crate::report::{ExperimentReport, ReportRow};

/// Runs the configured scenario.
pub fn run(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::new(cfg);
    match cfg.scenario {
        Scenario::WccClt => run_wcc_clt(cfg, &mut report)?,
        Scenario::BootstrapWcc => run_bootstrap_experiment(cfg, &mut report)?,
        Scenario::ExtremalClt | Scenario::Sliced => run_extremal_clt(cfg, &mut report)?,
        Scenario::BootstrapExtremal => run_bootstrap_extremal(cfg, &mut report)?,
        Scenario::Procrustes | Scenario::Sketched | Scenario::Gof => run_application(cfg, &mut report)?,
        Scenario::StabilityProbe => run_stability_probe(cfg, &mut report)?,
        Scenario::RegelevProbe => run_regelev_probe(cfg, &mut report)?,
    }
    report.finish();
    Ok(report)
}

/// How the cost is known to the experimenter.
pub enum PopulationCostKind {
    Fixed(CostMatrix),
    MeanShift,
}

/// Population measures with a known or plug-in estimated cost.
pub struct Population {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    cost: PopulationCostKind,
    matrix: CostMatrix,
}

impl Population {
    pub fn new(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: &CostSpec) -> CliResult<Self> {
        let kind = match cost {
            CostSpec::Power { p } => PopulationCostKind::Fixed(CostMatrix::power(&mu, &nu, *p)?),
            CostSpec::Matrix { rows } => PopulationCostKind::Fixed(CostMatrix::from_rows(rows)?),
            CostSpec::MeanShift => PopulationCostKind::MeanShift,
        };
        Self::with_kind(mu, nu, kind)
    }

    pub fn with_kind(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: PopulationCostKind) -> CliResult<Self> {
        let matrix = match &cost {
            PopulationCostKind::Fixed(c) => {
                c.check_shape(&mu, &nu)?;
                c.clone()
            }
            PopulationCostKind::MeanShift => MeanShiftCost::population_cost(&mu, &nu)?,
        };
        Ok(Self { mu, nu, cost, matrix })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> CliResult<Self> {
        Self::new(cfg.mu()?, cfg.nu()?, &cfg.cost)
    }

    pub fn cost_matrix(&self) -> &CostMatrix {
        &self.matrix
    }

    pub fn is_estimated(&self) -> bool {
        matches!(self.cost, PopulationCostKind::MeanShift)
    }

    /// Joint Gaussian model of the bridges and the cost fluctuation.
    pub fn limit_model(&self, lambda: f64) -> CliResult<GaussianTripleModel> {
        Ok(match self.cost {
            PopulationCostKind::Fixed(_) => GaussianTripleModel::bridges(&self.mu, &self.nu, CostProcess::Zero),
            PopulationCostKind::MeanShift => MeanShiftCost::limit_model(&self.mu, &self.nu, lambda)?,
        })
    }

    pub fn value(&self) -> CliResult<f64> {
        Ok(ot_value(&self.mu, &self.nu, &self.matrix)?)
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, m: usize, rng: &mut R) -> (EmpiricalSample, EmpiricalSample) {
        (self.mu.sample(n, rng), self.nu.sample(m, rng))
    }
}

/// Rows and columns of `full` (on the population supports) for the atoms of `mu_n`, `nu_n`.
pub fn restrict(
    full: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mu_n: &DiscreteMeasure,
    nu_n: &DiscreteMeasure,
) -> otlimit_core::Result<CostMatrix> {
    let missing = || otlimit_core::Error::InvalidInput("sample atom outside the population support".into());
    let rows = mu_n
        .support()
        .iter()
        .map(|p| mu.position(p).ok_or_else(missing))
        .collect::<otlimit_core::Result<Vec<_>>>()?;
    let cols = nu_n
        .support()
        .iter()
        .map(|p| nu.position(p).ok_or_else(missing))
        .collect::<otlimit_core::Result<Vec<_>>>()?;
    CostMatrix::new(DMatrix::from_fn(rows.len(), cols.len(), |i, j| full.get(rows[i], cols[j])))
}

impl CostEstimator for Population {
    fn estimate(
        &self,
        x: &EmpiricalSample,
        y: &EmpiricalSample,
        mu_n: &DiscreteMeasure,
        nu_n: &DiscreteMeasure,
    ) -> otlimit_core::Result<CostMatrix> {
        match &self.cost {
            PopulationCostKind::Fixed(c) => restrict(c, &self.mu, &self.nu, mu_n, nu_n),
            PopulationCostKind::MeanShift => MeanShiftCost.estimate(x, y, mu_n, nu_n),
        }
    }
}

fn limit_options(cfg: &ExperimentConfig) -> LimitOptions {
    LimitOptions {
        face_tol: cfg.tolerances.face_tol,
        ..LimitOptions::default()
    }
}

/// `(d_BL, KS)` between two scalar samples.
pub fn distances(a: &[f64], b: &[f64]) -> CliResult<(f64, f64)> {
    let (la, lb) = (EmpiricalLaw1D::new(a.to_vec())?, EmpiricalLaw1D::new(b.to_vec())?);
    Ok((d_bl_1d(&la, &lb), ks_two_sample(la.values(), lb.values())))
}

fn size_label(n: usize, m: usize) -> String {
    format!("n{n}_m{m}")
}

/// `reps` rescaled statistics `sqrt(nm/(n+m)) (OT(mu_n, nu_m, c_nm) - OT(mu, nu, c))`.
/// Failed replicates are dropped and counted.
pub fn rescaled_statistics(
    pop: &Population,
    n: usize,
    m: usize,
    reps: usize,
    seed: u64,
) -> CliResult<(Vec<f64>, usize)> {
    let rate = SampleRatio::new(n, m)?.rate();
    let base = pop.value()?;
    let out: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let (x, y) = pop.draw(n, m, &mut substream(seed, r as u64));
            let run = || -> otlimit_core::Result<f64> {
                let (mu_n, nu_n) = (x.to_measure()?, y.to_measure()?);
                let c = pop.estimate(&x, &y, &mu_n, &nu_n)?;
                ot_value(&mu_n, &nu_n, &c)
            };
            run().ok().map(|v| rate * (v - base))
        })
        .collect();
    let failures = out.iter().filter(|v| v.is_none()).count();
    Ok((out.into_iter().flatten().collect(), failures))
}

fn run_wcc_clt(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let pop = Population::from_config(cfg)?;
    let opts = limit_options(cfg);
    for (s, &(n, m)) in cfg.sizes.iter().enumerate() {
        let lambda = SampleRatio::new(n, m)?.lambda;
        let (stats, failures) = rescaled_statistics(&pop, n, m, cfg.reps, child_seed(cfg.seed, 100 + s as u64))?;
        if stats.is_empty() {
            return Err(CliError::Numerical("every replicate failed".into()));
        }
        let limit = sample_limit_wcc(
            &pop.mu,
            &pop.nu,
            pop.cost_matrix(),
            &pop.limit_model(lambda)?,
            Scaling::TwoSample { lambda },
            cfg.limit_draws,
            &opts,
            child_seed(cfg.seed, 200 + s as u64),
        )?;
        let (d_bl, ks) = distances(&stats, &limit.draws)?;
        let label = size_label(n, m);
        report.push_raw(format!("stat_{label}"), &stats);
        report.push_raw(format!("limit_{label}"), &limit.draws);
        let mut row = ReportRow::new(label).sizes(n, m).with("failures", failures as f64);
        row.statistic = Some(Summary::of(&stats));
        row.limit = Some(limit.summary);
        row.d_bl = Some(d_bl);
        row.ks = Some(ks);
        report.rows.push(row.with("population_value", pop.value()?));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Bootstrap laws on independent datasets compared with the limit law.
pub fn run_bootstrap_experiment(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let pop = Population::from_config(cfg)?;
    let opts = limit_options(cfg);
    let b = &cfg.bootstrap;
    for (s, &(n, m)) in cfg.sizes.iter().enumerate() {
        let lambda = SampleRatio::new(n, m)?.lambda;
        let limit = sample_limit_wcc(
            &pop.mu,
            &pop.nu,
            pop.cost_matrix(),
            &pop.limit_model(lambda)?,
            Scaling::TwoSample { lambda },
            cfg.limit_draws,
            &opts,
            child_seed(cfg.seed, 200 + s as u64),
        )?;
        let k = b.k.k(n);
        let mut ks_list = vec![k];
        if b.negative_control && k != n {
            ks_list.push(n);
        }
        let data_seed = child_seed(cfg.seed, 300 + s as u64);
        let boot_seed = child_seed(cfg.seed, 400 + s as u64);
        let mut dist: Vec<Vec<(f64, f64)>> = vec![Vec::new(); ks_list.len()];
        let mut failures = vec![0usize; ks_list.len()];
        for d in 0..b.datasets {
            let (x, y) = pop.draw(n, m, &mut substream(data_seed, d as u64));
            for (slot, &kk) in ks_list.iter().enumerate() {
                let bcfg = BootstrapConfig::new(b.replicates, child_seed(boot_seed, d as u64)).with_k(kk);
                let out = bootstrap_ot_wcc(&x, &y, &pop, &bcfg)?;
                failures[slot] += out.failures;
                for w in out.warnings {
                    if !report.warnings.contains(&w) {
                        report.warnings.push(w);
                    }
                }
                if d == 0 {
                    report.push_raw(format!("bootstrap_n{n}_k{kk}_dataset0"), out.law.values());
                }
                dist[slot].push(distances(out.law.values(), &limit.draws)?);
            }
        }
        report.push_raw(format!("limit_{}", size_label(n, m)), &limit.draws);
        for (slot, &kk) in ks_list.iter().enumerate() {
            let dbl: Vec<f64> = dist[slot].iter().map(|p| p.0).collect();
            let ks: Vec<f64> = dist[slot].iter().map(|p| p.1).collect();
            let label = if kk == k {
                format!("n{n}_k{kk}")
            } else {
                format!("n{n}_k{kk}_control")
            };
            let mut row = ReportRow::new(label)
                .sizes(n, m)
                .with("d_bl_max", dbl.iter().copied().fold(0.0, f64::max))
                .with("datasets", b.datasets as f64)
                .with("failures", failures[slot] as f64);
            row.k = Some(kk);
            row.limit = Some(limit.summary);
            row.d_bl = Some(mean(&dbl));
            row.ks = Some(mean(&ks));
            report.rows.push(row);
        }
    }
    Ok(())
}

/// Cost matrices of the configured family on the population supports, with quadrature
/// weights for sliced families.
fn family_costs(
    cfg: &ExperimentConfig,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> CliResult<(Vec<CostMatrix>, Option<SphereGrid>)> {
    match cfg.family.as_ref().expect("validated") {
        f @ FamilySpec::Matrices { .. } => {
            let mats = f.matrices()?;
            for c in &mats {
                c.check_shape(mu, nu)?;
            }
            Ok((mats, None))
        }
        FamilySpec::Sliced { directions, p } => {
            let grid = SphereGrid::uniform(mu.dim(), *directions, child_seed(cfg.seed, 7))?;
            let fam = sliced_family(&grid, *p, support_diameter(mu, nu))?;
            Ok((fam.matrices(mu.support(), nu.support())?, Some(grid)))
        }
    }
}

fn aggregate(values: &[f64], mode: StatMode, weights: Option<&[f64]>) -> f64 {
    match mode {
        StatMode::Inf => values.iter().copied().fold(f64::INFINITY, f64::min),
        StatMode::Sup | StatMode::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        StatMode::Average => match weights {
            Some(w) => values.iter().zip(w).map(|(a, b)| a * b).sum(),
            None => mean(values),
        },
    }
}

/// Whether an inf or sup is attained only at the first or last grid point.
fn on_boundary(values: &[f64], agg: f64, mode: StatMode) -> bool {
    if !matches!(mode, StatMode::Inf | StatMode::Sup) || values.len() < 3 {
        return false;
    }
    let hits: Vec<usize> = (0..values.len()).filter(|&i| values[i] == agg).collect();
    hits.iter().all(|&i| i == 0 || i == values.len() - 1)
}

/// Extremal (inf / sup) or sliced (average / max) statistics over a cost grid.
pub fn run_extremal_clt(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let (mu, nu) = (cfg.mu()?, cfg.nu()?);
    let mode = cfg.mode.expect("validated");
    let (costs, grid) = family_costs(cfg, &mu, &nu)?;
    let weights = grid.as_ref().map(|g| g.weights().to_vec());
    let base_values = costs
        .iter()
        .map(|c| ot_value(&mu, &nu, c))
        .collect::<otlimit_core::Result<Vec<f64>>>()?;
    let base = aggregate(&base_values, mode, weights.as_deref());
    let opts = limit_options(cfg);
    let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
    for (s, &(n, m)) in cfg.sizes.iter().enumerate() {
        let ratio = SampleRatio::new(n, m)?;
        let (rate, lambda) = (ratio.rate(), ratio.lambda);
        let seed = child_seed(cfg.seed, 100 + s as u64);
        let out: Vec<Option<(f64, bool)>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(seed, r as u64);
                let (x, y) = (mu.sample(n, &mut rng), nu.sample(m, &mut rng));
                let run = || -> otlimit_core::Result<(f64, bool)> {
                    let (mu_n, nu_n) = (x.to_measure()?, y.to_measure()?);
                    let vals = costs
                        .iter()
                        .map(|c| ot_value(&mu_n, &nu_n, &restrict(c, &mu, &nu, &mu_n, &nu_n)?))
                        .collect::<otlimit_core::Result<Vec<f64>>>()?;
                    let agg = aggregate(&vals, mode, weights.as_deref());
                    Ok((rate * (agg - base), on_boundary(&vals, agg, mode)))
                };
                run().ok()
            })
            .collect();
        let failures = out.iter().filter(|v| v.is_none()).count();
        let (stats, edges): (Vec<f64>, Vec<bool>) = out.into_iter().flatten().unzip();
        if stats.is_empty() {
            return Err(CliError::Numerical("every replicate failed".into()));
        }
        let boundary_fraction = if grid.is_none() && costs.len() > 2 {
            edges.iter().filter(|&&e| e).count() as f64 / edges.len() as f64
        } else {
            0.0
        };
        if boundary_fraction > 0.0 {
            report.warnings.push(format!(
                "{}: empirical extremizer at an end of the cost grid in {:.1}% of replicates",
                size_label(n, m),
                100.0 * boundary_fraction
            ));
        }
        let lseed = child_seed(cfg.seed, 200 + s as u64);
        let scaling = Scaling::TwoSample { lambda };
        let limit = match (mode, &grid, &cfg.family) {
            (StatMode::Average | StatMode::Max, Some(g), Some(FamilySpec::Sliced { p, .. })) => {
                let sm = if mode == StatMode::Average {
                    SlicedMode::Average
                } else {
                    SlicedMode::Max
                };
                match sliced_limits(&mu, &nu, g, *p, scaling, &model, sm, cfg.limit_draws, &opts, lseed)? {
                    SlicedLimit::Scalar(l) => l,
                    SlicedLimit::Process(_) => unreachable!("scalar mode"),
                }
            }
            _ => {
                let em = if mode == StatMode::Inf {
                    ExtremalMode::Inf
                } else {
                    ExtremalMode::Sup
                };
                let ext = sample_limit_extremal(
                    &mu,
                    &nu,
                    &costs,
                    em,
                    &model,
                    scaling,
                    cfg.limit_draws,
                    cfg.tolerances.arg_tol,
                    &opts,
                    lseed,
                )?;
                if s == 0 {
                    report.warnings.push(format!("active grid points: {:?}", ext.active));
                }
                ext.samples
            }
        };
        let (d_bl, ks) = distances(&stats, &limit.draws)?;
        let label = size_label(n, m);
        report.push_raw(format!("stat_{label}"), &stats);
        report.push_raw(format!("limit_{label}"), &limit.draws);
        let mut row = ReportRow::new(label)
            .sizes(n, m)
            .with("failures", failures as f64)
            .with("population_value", base)
            .with("grid_size", costs.len() as f64)
            .with("boundary_fraction", boundary_fraction);
        if let Some(g) = &grid {
            row = row.with("grid_mesh", g.mesh());
        }
        row.statistic = Some(Summary::of(&stats));
        row.limit = Some(limit.summary);
        row.d_bl = Some(d_bl);
        row.ks = Some(ks);
        report.rows.push(row);
    }
    Ok(())
}

/// The configured family as a [`CostFamily`] evaluable on any sample drawn from the populations.
fn population_family(cfg: &ExperimentConfig, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> CliResult<CostFamily> {
    match cfg.family.as_ref().expect("validated") {
        f @ FamilySpec::Matrices { .. } => {
            let mats = f.matrices()?;
            for c in &mats {
                c.check_shape(mu, nu)?;
            }
            let lip = (0..mats.len())
                .flat_map(|a| (0..mats.len()).map(move |b| (a, b)))
                .map(|(a, b)| mats[a].sup_distance(&mats[b]))
                .fold(0.0, f64::max);
            let params = (0..mats.len()).map(|t| vec![t as f64]).collect();
            let (mu, nu) = (mu.clone(), nu.clone());
            Ok(CostFamily::new(params, lip, move |t: &[f64], x: &Point, y: &Point| {
                match (mu.position(x), nu.position(y)) {
                    (Some(i), Some(j)) => mats[t[0] as usize].get(i, j),
                    _ => f64::NAN,
                }
            })?)
        }
        FamilySpec::Sliced { directions, p } => {
            let grid = SphereGrid::uniform(mu.dim(), *directions, child_seed(cfg.seed, 7))?;
            Ok(sliced_family(&grid, *p, support_diameter(mu, nu))?)
        }
    }
}

/// k-out-of-n bootstrap of the inf / sup over the grid against the extremal limit.
pub fn run_bootstrap_extremal(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let (mu, nu) = (cfg.mu()?, cfg.nu()?);
    let mode = cfg.mode.expect("validated");
    let (pm, em) = if mode == StatMode::Inf {
        (ProcessMode::Inf, ExtremalMode::Inf)
    } else {
        (ProcessMode::Sup, ExtremalMode::Sup)
    };
    let family = population_family(cfg, &mu, &nu)?;
    let costs = family.matrices(mu.support(), nu.support())?;
    let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
    let opts = limit_options(cfg);
    let b = &cfg.bootstrap;
    for (s, &(n, m)) in cfg.sizes.iter().enumerate() {
        let lambda = SampleRatio::new(n, m)?.lambda;
        let limit = sample_limit_extremal(
            &mu,
            &nu,
            &costs,
            em,
            &model,
            Scaling::TwoSample { lambda },
            cfg.limit_draws,
            cfg.tolerances.arg_tol,
            &opts,
            child_seed(cfg.seed, 200 + s as u64),
        )?
        .samples;
        let k = b.k.k(n);
        let data_seed = child_seed(cfg.seed, 300 + s as u64);
        let boot_seed = child_seed(cfg.seed, 400 + s as u64);
        let mut dist = Vec::new();
        let mut failures = 0;
        for d in 0..b.datasets {
            let mut rng = substream(data_seed, d as u64);
            let (x, y) = (mu.sample(n, &mut rng), nu.sample(m, &mut rng));
            let bcfg = BootstrapConfig::new(b.replicates, child_seed(boot_seed, d as u64)).with_k(k);
            let out = bootstrap_ot_process(&x, &y, &family, pm, &bcfg)?;
            failures += out.failures;
            for w in out.warnings {
                if !report.warnings.contains(&w) {
                    report.warnings.push(w);
                }
            }
            let ProcessLaw::Extremal(law) = out.law else {
                unreachable!("extremal mode")
            };
            dist.push(distances(law.values(), &limit.draws)?);
        }
        let dbl: Vec<f64> = dist.iter().map(|p| p.0).collect();
        let mut row = ReportRow::new(format!("n{n}_k{k}"))
            .sizes(n, m)
            .with("d_bl_max", dbl.iter().copied().fold(0.0, f64::max))
            .with("failures", failures as f64);
        row.k = Some(k);
        row.limit = Some(limit.summary);
        row.d_bl = Some(mean(&dbl));
        row.ks = Some(mean(&dist.iter().map(|p| p.1).collect::<Vec<_>>()));
        report.rows.push(row);
    }
    Ok(())
}

/// Procrustes, sketched Wasserstein and goodness-of-fit scenarios.
pub fn run_application(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    match cfg.scenario {
        Scenario::Procrustes => run_procrustes(cfg, report),
        Scenario::Sketched => run_sketched(cfg, report),
        Scenario::Gof => run_gof(cfg, report),
        other => Err(CliError::Config(format!("{other:?} is not an application scenario"))),
    }
}

fn run_procrustes(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let (mu, nu) = (cfg.mu()?, cfg.nu()?);
    let sec = cfg.procrustes.clone().unwrap_or(crate::config::ProcrustesSection {
        resolution: 360,
        refine: otlimit_core::applications::Refine::Alternating,
    });
    let grid = RotationGrid::new(mu.dim(), sec.resolution)?;
    let res = procrustes_ot(&mu, &nu, &grid, sec.refine)?;
    let mut row = ReportRow::new("procrustes")
        .with("value", res.value)
        .with("grid_value", res.grid_values[res.grid_index])
        .with("grid_index", res.grid_index as f64)
        .with("iterations", res.iterations as f64)
        .with("grid_mesh", grid.mesh());
    for i in 0..res.rotation.nrows() {
        for j in 0..res.rotation.ncols() {
            row = row.with(&format!("rotation_{i}{j}"), res.rotation[(i, j)]);
        }
    }
    report.push_raw("grid_values", &res.grid_values);
    report.rows.push(row);
    Ok(())
}

fn run_sketched(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let sec = cfg.sketched.as_ref().expect("validated");
    let spec = &sec.spec;
    let k = spec.k();
    let base = sketched_wasserstein(spec)?.value;
    let std = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { sec.noise_std });
    let alpha = DiscreteMeasure::on_indices(&spec.alpha)?;
    let beta = DiscreteMeasure::on_indices(&spec.beta)?;
    let model = GaussianTripleModel::bridges(&alpha, &beta, CostProcess::IndependentEntries { std: std.clone() });
    let opts = limit_options(cfg);
    report
        .rows
        .push(ReportRow::new("population").with("value", base).with("components", k as f64));
    for (s, &(n, m)) in cfg.sizes.iter().enumerate() {
        let ratio = SampleRatio::new(n, m)?;
        let rate = ratio.rate();
        let seed = child_seed(cfg.seed, 100 + s as u64);
        let frequencies = |idx: Vec<usize>, len: usize| {
            let mut w = vec![0.0; k];
            idx.into_iter().for_each(|i| w[i] += 1.0 / len as f64);
            w
        };
        let out: Vec<Option<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng: ChaCha8Rng = substream(seed, r as u64);
                let a = frequencies(alpha.sample_indices(n, &mut rng), n);
                let b = frequencies(beta.sample_indices(m, &mut rng), m);
                let d = DMatrix::from_fn(k, k, |i, j| {
                    let z: f64 = rng.sample(StandardNormal);
                    (spec.d_matrix[(i, j)] + std[(i, j)] * z / rate).max(0.0)
                });
                let renorm = |mut w: Vec<f64>| {
                    let rest: f64 = w[1..].iter().sum();
                    w[0] = (1.0 - rest).max(0.0);
                    w
                };
                let est = MixtureSpec::new(renorm(a), renorm(b), d, false).ok()?;
                sketched_wasserstein(&est).ok().map(|v| rate * (v.value - base))
            })
            .collect();
        let failures = out.iter().filter(|v| v.is_none()).count();
        let stats: Vec<f64> = out.into_iter().flatten().collect();
        if stats.is_empty() {
            return Err(CliError::Numerical("every replicate failed".into()));
        }
        let limit = sketched_limit(
            spec,
            &model,
            Scaling::TwoSample { lambda: ratio.lambda },
            cfg.limit_draws,
            &opts,
            child_seed(cfg.seed, 200 + s as u64),
        )?;
        let (d_bl, ks) = distances(&stats, &limit.draws)?;
        let label = size_label(n, m);
        report.push_raw(format!("stat_{label}"), &stats);
        report.push_raw(format!("limit_{label}"), &limit.draws);
        let mut row = ReportRow::new(label).sizes(n, m).with("failures", failures as f64);
        row.statistic = Some(Summary::of(&stats));
        row.limit = Some(limit.summary);
        row.d_bl = Some(d_bl);
        row.ks = Some(ks);
        report.rows.push(row);
    }
    Ok(())
}

fn run_gof(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let sec = cfg.gof.as_ref().expect("validated");
    let nu0 = sec.nu0.build()?;
    let family = sec.family;
    let mu = match &cfg.mu {
        Some(spec) => spec.build()?,
        None => family.pushforward(&sec.theta, &nu0)?,
    };
    let base = ot_value(&mu, &nu0, &otlimit_core::applications::gof_cost(&mu, &nu0, &family, &sec.theta)?)?;
    let opts = limit_options(cfg);
    let limit = match family {
        GroupFamily::Location { .. } => Some(gof_limit(
            &mu,
            &nu0,
            &family,
            &sec.theta,
            &GofModel::location_moments(&mu),
            cfg.limit_draws,
            &opts,
            child_seed(cfg.seed, 200),
        )?),
        _ => {
            report
                .warnings
                .push("limit law is only wired for location families; reporting the statistic alone".into());
            None
        }
    };
    for (s, &(n, _)) in cfg.sizes.iter().enumerate() {
        let seed = child_seed(cfg.seed, 100 + s as u64);
        let root_n = (n as f64).sqrt();
        let out: Vec<Option<f64>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let x = mu.sample(n, &mut substream(seed, r as u64));
                let theta_hat = family.moment_estimate(&x, &nu0).ok()?;
                gof_statistic(&x, &nu0, &family, &theta_hat)
                    .ok()
                    .map(|v| root_n * (v - base))
            })
            .collect();
        let failures = out.iter().filter(|v| v.is_none()).count();
        let stats: Vec<f64> = out.into_iter().flatten().collect();
        if stats.is_empty() {
            return Err(CliError::Numerical("every replicate failed".into()));
        }
        let label = format!("n{n}");
        report.push_raw(format!("stat_{label}"), &stats);
        let mut row = ReportRow::new(label)
            .with("failures", failures as f64)
            .with("population_value", base);
        row.n = Some(n);
        row.statistic = Some(Summary::of(&stats));
        if let Some(l) = &limit {
            let (d_bl, ks) = distances(&stats, &l.draws)?;
            row.limit = Some(l.summary);
            row.d_bl = Some(d_bl);
            row.ks = Some(ks);
        }
        report.rows.push(row);
    }
    if let Some(l) = &limit {
        report.push_raw("limit", &l.draws);
    }
    Ok(())
}

/// Random measures on `[0, 1]^dim` with weights bounded away from zero.
pub fn random_measure<R: Rng + ?Sized>(atoms: usize, dim: usize, rng: &mut R) -> otlimit_core::Result<DiscreteMeasure> {
    let pts: Vec<Point> = (0..atoms)
        .map(|_| Point::new((0..dim).map(|_| rng.random::<f64>()).collect()))
        .collect();
    let raw: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    DiscreteMeasure::new(pts, w)
}

/// A random admissible perturbation with zero-sum weight changes.
pub fn random_direction<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> PerturbationTriple {
    let zero_sum = |k: usize, rng: &mut R| {
        let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = v.iter().sum::<f64>() / k as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        v
    };
    PerturbationTriple {
        dmu: zero_sum(n, rng),
        dnu: zero_sum(m, rng),
        dc: DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)),
    }
}

fn run_stability_probe(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let sec = cfg.stability.as_ref().expect("validated");
    let seed = child_seed(cfg.seed, 500);
    let results: Vec<(bool, bool, f64, f64)> = (0..sec.instances)
        .into_par_iter()
        .map(|i| -> CliResult<(bool, bool, f64, f64)> {
            let mut rng = substream(seed, i as u64);
            let mu = random_measure(sec.atoms, 2, &mut rng)?;
            let nu = random_measure(sec.atoms, 2, &mut rng)?;
            let c = CostMatrix::squared_euclidean(&mu, &nu)?;
            let delta = random_direction(mu.len(), nu.len(), &mut rng);
            let t = (0.5 * delta.max_step(&mu, &nu)).min(0.2);
            let (mu_t, nu_t, c_t) = delta.apply(&mu, &nu, &c, t)?;
            let base = ot_value(&mu, &nu, &c)?;
            let diff = ot_value(&mu_t, &nu_t, &c_t)? - base;
            let bounds = sandwich_bounds(&mu, &nu, &mu_t, &nu_t, &c, &c_t, None)?;
            let fixed = ot_value(&mu, &nu, &c_t)? - base;
            let corollary = fixed.abs() <= c.sup_distance(&c_t) + 1e-9;
            let deriv = otlimit_core::gateaux_derivative(&mu, &nu, &c, &delta, None)?;
            let quotient = |s: f64| -> CliResult<f64> {
                let (a, b, cc) = delta.apply(&mu, &nu, &c, s)?;
                Ok((ot_value(&a, &b, &cc)? - base) / s)
            };
            let err_small = (quotient(1e-4)? - deriv).abs();
            let err_large = (quotient(1e-2)? - deriv).abs();
            Ok((
                bounds.contains(diff, 1e-9),
                corollary,
                err_small / (1.0 + deriv.abs()),
                if err_large <= 1e-9 { f64::INFINITY } else { err_large / err_small.max(1e-300) },
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let total = results.len() as f64;
    let bracketed = results.iter().filter(|r| r.0).count() as f64;
    let corollary = results.iter().filter(|r| r.1).count() as f64;
    let max_err = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let contracted = results.iter().filter(|r| r.3 >= 5.0).count() as f64;
    report.rows.push(
        ReportRow::new("sandwich")
            .with("instances", total)
            .with("bracketed_fraction", bracketed / total)
            .with("fixed_measure_fraction", corollary / total),
    );
    report.rows.push(
        ReportRow::new("gateaux")
            .with("instances", total)
            .with("max_relative_error_t1e-4", max_err)
            .with("contraction_fraction", contracted / total),
    );
    Ok(())
}

fn run_regelev_probe(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> CliResult<()> {
    let sec = cfg.regelev.as_ref().expect("validated");
    let pop = Population::from_config(cfg)?;
    let c = pop.cost_matrix();
    let defect = fixed_point_defect(c, &sec.spec)?;
    report.rows.push(ReportRow::new("fixed_point").with("defect", defect));
    let rows = elevation_convergence_probe(c, sec.sigma, &sec.spec, &sec.rates, cfg.reps, child_seed(cfg.seed, 600))?;
    for r in rows {
        let mut row = ReportRow::new(format!("n{}", r.n))
            .with("a_n", r.a_n)
            .with("zero_fraction", r.zero_fraction);
        row.n = Some(r.n);
        row.statistic = Some(r.summary);
        report.rows.push(row);
    }
    Ok(())
}
