//! k-out-of-n bootstrap for OT values under estimated costs, and the bounded
//! Lipschitz distance between one-dimensional laws.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostFamily, CostMatrix};
use crate::error::{Error, Result};
use crate::limitlaw::ExtremalMode;
use crate::measure::{DiscreteMeasure, EmpiricalSample, Point};
use crate::rng::substream;
use crate::transport::ot_value;

/// Computes a cost matrix on the supports of `(mu, nu)` from the samples they came from.
///
/// Implementations are called concurrently and must be reentrant.
pub trait CostEstimator: Sync {
    fn estimate(
        &self,
        x: &EmpiricalSample,
        y: &EmpiricalSample,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
    ) -> Result<CostMatrix>;
}

impl<F> CostEstimator for F
where
    F: Fn(
            &EmpiricalSample,
            &EmpiricalSample,
            &DiscreteMeasure,
            &DiscreteMeasure,
        ) -> Result<CostMatrix>
        + Sync,
{
    fn estimate(
        &self,
        x: &EmpiricalSample,
        y: &EmpiricalSample,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
    ) -> Result<CostMatrix> {
        self(x, y, mu, nu)
    }
}

/// A known cost function; nothing is estimated.
pub struct FixedCost<F>(pub F);

impl<F> CostEstimator for FixedCost<F>
where
    F: Fn(&Point, &Point) -> f64 + Sync,
{
    fn estimate(
        &self,
        _x: &EmpiricalSample,
        _y: &EmpiricalSample,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
    ) -> Result<CostMatrix> {
        CostMatrix::between(mu, nu, &self.0)
    }
}

/// Sorted scalar draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw1D {
    values: Vec<f64>,
}

impl EmpiricalLaw1D {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("law values must be finite".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Resampling plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Resample size for the first sample; `None` means `floor(n^(2/3))`.
    pub k: Option<usize>,
    /// Number of bootstrap replicates.
    pub replicates: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            k: None,
            replicates,
            seed,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }
}

/// Default resample size `floor(n^(2/3))`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0).floor() as usize).max(1)
}

/// Second resample size `l` with `l / (k + l)` as close as possible to `m / (n + m)`.
pub fn matched_l(k: usize, n: usize, m: usize) -> usize {
    if n == m {
        return k;
    }
    ((k as f64 * m as f64 / n as f64).round() as usize).max(1)
}

/// Bootstrap law together with bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome<T> {
    pub law: T,
    pub k: usize,
    pub l: usize,
    /// Replicates dropped because the estimator or solver failed.
    pub failures: usize,
    pub warnings: Vec<String>,
}

struct Plan {
    k: usize,
    l: usize,
    rate: f64,
    warnings: Vec<String>,
}

fn plan(x: &EmpiricalSample, y: &EmpiricalSample, cfg: &BootstrapConfig) -> Result<Plan> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cfg.replicates == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    let (n, m) = (x.len(), y.len());
    let k = cfg.k.unwrap_or_else(|| default_k(n));
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    let l = matched_l(k, n, m);
    let mut warnings = Vec::new();
    if k > n.min(m) {
        warnings.push(format!(
            "resample size {k} exceeds the sample size {}",
            n.min(m)
        ));
    }
    let (kf, lf) = (k as f64, l as f64);
    Ok(Plan {
        k,
        l,
        rate: (kf * lf / (kf + lf)).sqrt(),
        warnings,
    })
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed * 100 > total {
        return Err(Error::EstimatorFailures { failed, total });
    }
    Ok(())
}

/// Bootstrap law of `sqrt(kl/(k+l)) (OT(mu*_k, nu*_l, c*) - OT(mu_n, nu_m, c_nm))`.
///
/// Replicate `b` uses substream `b` of `cfg.seed`; results do not depend on
/// the number of worker threads.
pub fn bootstrap_ot_wcc<E: CostEstimator + ?Sized>(
    x: &EmpiricalSample,
    y: &EmpiricalSample,
    estimator: &E,
    cfg: &BootstrapConfig,
) -> Result<BootstrapOutcome<EmpiricalLaw1D>> {
    let p = plan(x, y, cfg)?;
    let mu = x.to_measure()?;
    let nu = y.to_measure()?;
    let c = estimator.estimate(x, y, &mu, &nu)?;
    let full = ot_value(&mu, &nu, &c)?;
    let stats: Vec<Option<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, b as u64);
            let xs = x.resample(p.k, &mut rng);
            let ys = y.resample(p.l, &mut rng);
            let run = || -> Result<f64> {
                let (bm, bn) = (xs.to_measure()?, ys.to_measure()?);
                let bc = estimator.estimate(&xs, &ys, &bm, &bn)?;
                ot_value(&bm, &bn, &bc)
            };
            run().ok().map(|v| p.rate * (v - full))
        })
        .collect();
    let failures = stats.iter().filter(|s| s.is_none()).count();
    check_failures(failures, cfg.replicates)?;
    Ok(BootstrapOutcome {
        law: EmpiricalLaw1D::new(stats.into_iter().flatten().collect())?,
        k: p.k,
        l: p.l,
        failures,
        warnings: p.warnings,
    })
}

/// Which functional of the OT process to bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessMode {
    PerTheta,
    Inf,
    Sup,
}

/// Result of [`bootstrap_ot_process`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProcessLaw {
    PerTheta(Vec<EmpiricalLaw1D>),
    Extremal(EmpiricalLaw1D),
}

fn family_values(
    family: &CostFamily,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Vec<f64>> {
    (0..family.len())
        .map(|t| ot_value(mu, nu, &family.matrix(t, mu.support(), nu.support())?))
        .collect()
}

fn extremum(values: &[f64], mode: ExtremalMode) -> f64 {
    match mode {
        ExtremalMode::Inf => values.iter().copied().fold(f64::INFINITY, f64::min),
        ExtremalMode::Sup => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Bootstrap of the OT process over a cost family, or of its infimum / supremum.
pub fn bootstrap_ot_process(
    x: &EmpiricalSample,
    y: &EmpiricalSample,
    family: &CostFamily,
    mode: ProcessMode,
    cfg: &BootstrapConfig,
) -> Result<BootstrapOutcome<ProcessLaw>> {
    let mut p = plan(x, y, cfg)?;
    let n = x.len();
    if mode != ProcessMode::PerTheta && p.k as f64 > (n as f64).powf(0.9) {
        p.warnings.push(format!(
            "resample size {} exceeds n^0.9 = {:.1}; extremal bootstrap needs k = o(n)",
            p.k,
            (n as f64).powf(0.9)
        ));
    }
    let mu = x.to_measure()?;
    let nu = y.to_measure()?;
    let full = family_values(family, &mu, &nu)?;
    let reps: Vec<Option<Vec<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, b as u64);
            let xs = x.resample(p.k, &mut rng);
            let ys = y.resample(p.l, &mut rng);
            let run = || -> Result<Vec<f64>> {
                family_values(family, &xs.to_measure()?, &ys.to_measure()?)
            };
            run().ok()
        })
        .collect();
    let failures = reps.iter().filter(|r| r.is_none()).count();
    check_failures(failures, cfg.replicates)?;
    let ok: Vec<Vec<f64>> = reps.into_iter().flatten().collect();
    let law = match mode {
        ProcessMode::PerTheta => ProcessLaw::PerTheta(
            (0..family.len())
                .map(|t| {
                    EmpiricalLaw1D::new(ok.iter().map(|r| p.rate * (r[t] - full[t])).collect())
                })
                .collect::<Result<_>>()?,
        ),
        ProcessMode::Inf | ProcessMode::Sup => {
            let em = if mode == ProcessMode::Inf {
                ExtremalMode::Inf
            } else {
                ExtremalMode::Sup
            };
            let base = extremum(&full, em);
            ProcessLaw::Extremal(EmpiricalLaw1D::new(
                ok.iter()
                    .map(|r| p.rate * (extremum(r, em) - base))
                    .collect(),
            )?)
        }
    };
    Ok(BootstrapOutcome {
        law,
        k: p.k,
        l: p.l,
        failures,
        warnings: p.warnings,
    })
}

/// Largest merged support handled without subsampling.
pub const D_BL_ATOM_CAP: usize = 40_000;
const D_BL_SEED: u64 = 0xd_b1;

/// Exact bounded Lipschitz distance between two empirical laws on the line.
///
/// Solves `max sum_k (p_k - q_k) f_k` over `|f_k| <= 1`, `|f_{k+1} - f_k| <= x_{k+1} - x_k`
/// on the merged atoms. Inputs larger than [`D_BL_ATOM_CAP`] atoms are
/// subsampled uniformly with a fixed seed.
pub fn d_bl_1d(p: &EmpiricalLaw1D, q: &EmpiricalLaw1D) -> f64 {
    d_bl_1d_capped(p, q, D_BL_ATOM_CAP, D_BL_SEED)
}

pub fn d_bl_1d_capped(p: &EmpiricalLaw1D, q: &EmpiricalLaw1D, cap: usize, seed: u64) -> f64 {
    let total = p.len() + q.len();
    if total > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = |law: &EmpiricalLaw1D, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let k = ((law.len() * cap) / total).max(1);
            let mut v: Vec<f64> = index::sample(rng, law.len(), k)
                .into_iter()
                .map(|i| law.values[i])
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let (a, b) = (keep(p, &mut rng), keep(q, &mut rng));
        return d_bl_sorted(&a, &b);
    }
    d_bl_sorted(&p.values, &q.values)
}

/// Merged atoms with signed masses `p_k - q_k`.
pub fn signed_atoms(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    let (wa, wb) = (1.0 / a.len() as f64, 1.0 / b.len() as f64);
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let mut w = 0.0;
        while i < a.len() && a[i] == t {
            w += wa;
            i += 1;
        }
        while j < b.len() && b[j] == t {
            w -= wb;
            j += 1;
        }
        out.push((t, w));
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Slope(f64);

impl PartialEq for Slope {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Slope {}
impl PartialOrd for Slope {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Slope {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Concave piecewise-linear value function on `[-1, 1]` stored as slope -> length.
struct ValueFn {
    left: f64,
    offset: f64,
    segs: BTreeMap<Slope, f64>,
}

impl ValueFn {
    fn new() -> Self {
        let mut segs = BTreeMap::new();
        segs.insert(Slope(0.0), 2.0);
        Self {
            left: 0.0,
            offset: 0.0,
            segs,
        }
    }

    fn add_linear(&mut self, w: f64) {
        self.offset += w;
        self.left -= w;
    }

    /// `f -> max_{|f' - f| <= g} V(f')`, restricted to `[-1, 1]`.
    fn dilate(&mut self, g: f64) {
        if g <= 0.0 {
            return;
        }
        let g = g.min(2.0);
        *self.segs.entry(Slope(-self.offset)).or_insert(0.0) += 2.0 * g;
        // Drop length g from the left (steepest ascent first), moving the left value.
        let mut rest = g;
        while rest > 0.0 {
            let Some(mut e) = self.segs.last_entry() else {
                break;
            };
            let slope = e.key().0 + self.offset;
            let len = *e.get();
            if len <= rest {
                self.left += slope * len;
                rest -= len;
                e.remove();
            } else {
                self.left += slope * rest;
                *e.get_mut() = len - rest;
                rest = 0.0;
            }
        }
        let mut rest = g;
        while rest > 0.0 {
            let Some(mut e) = self.segs.first_entry() else {
                break;
            };
            let len = *e.get();
            if len <= rest {
                rest -= len;
                e.remove();
            } else {
                *e.get_mut() = len - rest;
                rest = 0.0;
            }
        }
    }

    fn maximum(&self) -> f64 {
        self.left
            + self
                .segs
                .iter()
                .map(|(s, len)| (s.0 + self.offset).max(0.0) * len)
                .sum::<f64>()
    }
}

fn d_bl_sorted(a: &[f64], b: &[f64]) -> f64 {
    let atoms = signed_atoms(a, b);
    let mut v = ValueFn::new();
    for (k, &(x, w)) in atoms.iter().enumerate() {
        if k > 0 {
            v.dilate(x - atoms[k - 1].0);
        }
        v.add_linear(w);
    }
    v.maximum().clamp(0.0, 2.0)
}
