//! One-dimensional OT by quantile coupling, and average / max-sliced OT.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grids::{normalize, SphereGrid};
use crate::cost::{CostFamily, CostMatrix};
use crate::error::{Error, Result};
use crate::limitlaw::{
    sample_limit_extremal, sample_limit_process, ExtremalMode, GaussianTripleModel, LimitOptions,
    LimitSampleSet, Scaling,
};
use crate::measure::{DiscreteMeasure, EmpiricalSample, Point};

/// `W_p^p` between the uniform laws on `x` and `y` via the monotone coupling.
pub fn ot_1d(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "order p must be >= 1, got {p}"
        )));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    if n == m {
        return Ok(xs
            .iter()
            .zip(&ys)
            .map(|(a, b)| (a - b).abs().powf(p))
            .sum::<f64>()
            / n as f64);
    }
    // North-west corner on integer mass units: each x carries m units, each y carries n.
    let (mut i, mut j) = (0, 0);
    let (mut ri, mut rj) = (m, n);
    let mut total = 0.0;
    while i < n && j < m {
        let t = ri.min(rj);
        total += t as f64 * (xs[i] - ys[j]).abs().powf(p);
        ri -= t;
        rj -= t;
        if ri == 0 {
            i += 1;
            ri = m;
        }
        if rj == 0 {
            j += 1;
            rj = n;
        }
    }
    Ok(total / (n * m) as f64)
}

fn project(sample: &EmpiricalSample, theta: &Point) -> Vec<f64> {
    sample.draws.iter().map(|x| theta.dot(x.coords())).collect()
}

fn check_inputs(mu: &EmpiricalSample, nu: &EmpiricalSample, grid: &SphereGrid) -> Result<()> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = grid.dim();
    if mu.dim() != d || nu.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "samples in dimension {} and {}, directions in {d}",
            mu.dim(),
            nu.dim()
        )));
    }
    Ok(())
}

/// Projected OT value along one direction.
pub fn sliced_at(mu: &EmpiricalSample, nu: &EmpiricalSample, theta: &Point, p: f64) -> Result<f64> {
    ot_1d(&project(mu, theta), &project(nu, theta), p)
}

/// Per-direction projected OT values over the grid.
pub fn sliced_process(
    mu: &EmpiricalSample,
    nu: &EmpiricalSample,
    grid: &SphereGrid,
    p: f64,
) -> Result<Vec<f64>> {
    check_inputs(mu, nu, grid)?;
    grid.directions()
        .par_iter()
        .map(|t| sliced_at(mu, nu, t, p))
        .collect()
}

/// Quadrature approximation of the average-sliced `W_p^p`.
pub fn sliced_average(
    mu: &EmpiricalSample,
    nu: &EmpiricalSample,
    grid: &SphereGrid,
    p: f64,
) -> Result<f64> {
    let v = sliced_process(mu, nu, grid, p)?;
    Ok(v.iter().zip(grid.weights()).map(|(a, w)| a * w).sum())
}

/// Max-sliced `W_p^p` with the maximizing direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxSliced {
    pub value: f64,
    pub direction: Point,
    /// Maximum over the grid before local refinement.
    pub grid_value: f64,
    pub grid_index: usize,
}

/// Grid maximum followed by a local search: golden-section along the circle
/// for d = 2, a shrinking pattern search on the sphere otherwise.
pub fn sliced_max(
    mu: &EmpiricalSample,
    nu: &EmpiricalSample,
    grid: &SphereGrid,
    p: f64,
    refine: bool,
) -> Result<MaxSliced> {
    let v = sliced_process(mu, nu, grid, p)?;
    let (idx, &gv) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("grid is nonempty");
    let start = grid.directions()[idx].clone();
    let mut out = MaxSliced {
        value: gv,
        direction: start.clone(),
        grid_value: gv,
        grid_index: idx,
    };
    if !refine {
        return Ok(out);
    }
    let step = grid.mesh().max(1e-6);
    let f = |t: &Point| sliced_at(mu, nu, t, p);
    let (dir, val) = if grid.dim() == 2 {
        golden_on_circle(&f, &start, 4.0 * (step / 2.0).min(1.0).asin())?
    } else {
        pattern_search(&f, &start, gv, step)?
    };
    if val > out.value {
        out.value = val;
        out.direction = dir;
    }
    Ok(out)
}

fn golden_on_circle<F>(f: &F, start: &Point, half_width: f64) -> Result<(Point, f64)>
where
    F: Fn(&Point) -> Result<f64>,
{
    let a0 = start.0[1].atan2(start.0[0]);
    let at = |a: f64| Point::new(vec![a.cos(), a.sin()]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a0 - half_width, a0 + half_width);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(&at(x1))?;
    let mut f2 = f(&at(x2))?;
    let mut best = (start.clone(), f(start)?);
    while hi - lo > 1e-12 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(&at(x1))?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(&at(x2))?;
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v > best.1 {
                best = (at(x), v);
            }
        }
    }
    Ok(best)
}

fn tangent_basis(u: &Point) -> Vec<Vec<f64>> {
    let d = u.dim();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..d {
        let mut v: Vec<f64> = (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        for b in std::iter::once(&u.0).chain(basis.iter()) {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|a| a / n).collect());
        }
        if basis.len() == d - 1 {
            break;
        }
    }
    basis
}

fn pattern_search<F>(f: &F, start: &Point, f0: f64, step: f64) -> Result<(Point, f64)>
where
    F: Fn(&Point) -> Result<f64>,
{
    let mut cur = start.clone();
    let mut best = f0;
    let mut h = step;
    while h > 1e-10 {
        let mut moved = false;
        for t in tangent_basis(&cur) {
            for s in [h, -h] {
                let cand = normalize(cur.0.iter().zip(&t).map(|(a, b)| a + s * b).collect());
                let v = f(&cand)?;
                if v > best {
                    best = v;
                    cur = cand;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok((cur, best))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicedMode {
    Average,
    Max,
    Process,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicedOutput {
    Scalar(f64),
    Process(Vec<f64>),
}

/// Sliced OT in the requested mode, on the `W_p^p` scale.
pub fn sliced_ot(
    mu: &EmpiricalSample,
    nu: &EmpiricalSample,
    grid: &SphereGrid,
    p: f64,
    mode: SlicedMode,
) -> Result<SlicedOutput> {
    Ok(match mode {
        SlicedMode::Average => SlicedOutput::Scalar(sliced_average(mu, nu, grid, p)?),
        SlicedMode::Max => SlicedOutput::Scalar(sliced_max(mu, nu, grid, p, true)?.value),
        SlicedMode::Process => SlicedOutput::Process(sliced_process(mu, nu, grid, p)?),
    })
}

/// The projected costs `|<theta, x - y>|^p` as a family indexed by the grid.
///
/// `diameter` bounds `||x - y||` over the supports and fixes the Lipschitz
/// constant `p * diameter^p` in the direction.
pub fn sliced_family(grid: &SphereGrid, p: f64, diameter: f64) -> Result<CostFamily> {
    let params = grid.directions().iter().map(|t| t.0.clone()).collect();
    CostFamily::new(params, p * diameter.powf(p), move |t, x, y| {
        t.iter()
            .zip(x.coords().iter().zip(y.coords()))
            .map(|(a, (u, v))| a * (u - v))
            .sum::<f64>()
            .abs()
            .powf(p)
    })
}

/// Largest pairwise distance between the supports.
pub fn support_diameter(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    mu.support()
        .iter()
        .flat_map(|x| nu.support().iter().map(move |y| x.dist(y)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicedLimit {
    Scalar(LimitSampleSet),
    /// Draw-major matrix: one row per draw, one column per direction.
    Process(Vec<Vec<f64>>),
}

/// Limit laws of the sliced statistics: the process over the grid, its
/// quadrature average, or its supremum over maximizing directions.
#[allow(clippy::too_many_arguments)]
pub fn sliced_limits(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    grid: &SphereGrid,
    p: f64,
    scaling: Scaling,
    model: &GaussianTripleModel,
    mode: SlicedMode,
    n_draws: usize,
    opts: &LimitOptions,
    seed: u64,
) -> Result<SlicedLimit> {
    if mu.dim() != grid.dim() || nu.dim() != grid.dim() {
        return Err(Error::DimensionMismatch("measures and directions".into()));
    }
    let family = sliced_family(grid, p, support_diameter(mu, nu))?;
    let costs: Vec<CostMatrix> = family.matrices(mu.support(), nu.support())?;
    match mode {
        SlicedMode::Max => Ok(SlicedLimit::Scalar(
            sample_limit_extremal(
                mu,
                nu,
                &costs,
                ExtremalMode::Sup,
                model,
                scaling,
                n_draws,
                None,
                opts,
                seed,
            )?
            .samples,
        )),
        SlicedMode::Process => Ok(SlicedLimit::Process(sample_limit_process(
            mu, nu, &costs, model, scaling, n_draws, opts, seed,
        )?)),
        SlicedMode::Average => {
            let rows = sample_limit_process(mu, nu, &costs, model, scaling, n_draws, opts, seed)?;
            let w = grid.weights();
            Ok(SlicedLimit::Scalar(LimitSampleSet::new(
                rows.iter()
                    .map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum())
                    .collect(),
            )?))
        }
    }
}
