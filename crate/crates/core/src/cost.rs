//! Cost matrices, parametric cost families and moduli of continuity.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Point};

/// Cost evaluated on all pairs of two finite supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCost")]
pub struct CostMatrix {
    #[serde(with = "crate::serde_rows")]
    values: DMatrix<f64>,
}

#[derive(Deserialize)]
struct RawCost {
    #[serde(with = "crate::serde_rows")]
    values: DMatrix<f64>,
}

impl TryFrom<RawCost> for CostMatrix {
    type Error = Error;

    fn try_from(raw: RawCost) -> Result<Self> {
        Self::new(raw.values)
    }
}

impl CostMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cost entries must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = crate::serde_rows::rows_to_matrix(rows).map_err(Error::InvalidInput)?;
        Self::new(m)
    }

    /// Evaluates `f` on every pair of support points.
    pub fn from_supports<F>(xs: &[Point], ys: &[Point], f: F) -> Result<Self>
    where
        F: Fn(&Point, &Point) -> f64,
    {
        Self::new(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            f(&xs[i], &ys[j])
        }))
    }

    pub fn between<F>(mu: &DiscreteMeasure, nu: &DiscreteMeasure, f: F) -> Result<Self>
    where
        F: Fn(&Point, &Point) -> f64,
    {
        Self::from_supports(mu.support(), nu.support(), f)
    }

    /// `|x - y|^p` with the Euclidean norm.
    pub fn power(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<Self> {
        Self::between(mu, nu, |x, y| x.dist(y).powf(p))
    }

    pub fn squared_euclidean(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        Self::between(mu, nu, |x, y| x.dist2(y))
    }

    pub fn constant(n: usize, m: usize, value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(n, m, value))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.amax()
    }

    /// `max_ij |c_ij - other_ij|`.
    pub fn sup_distance(&self, other: &CostMatrix) -> f64 {
        (&self.values - &other.values).amax()
    }

    pub fn transpose(&self) -> CostMatrix {
        CostMatrix {
            values: self.values.transpose(),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<CostMatrix> {
        Self::new(self.values.map(f))
    }

    /// Checks that the matrix is `mu.len() x nu.len()`.
    pub fn check_shape(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
        if self.nrows() != mu.len() || self.ncols() != nu.len() {
            return Err(Error::DimensionMismatch(format!(
                "cost is {}x{}, measures have {} and {} atoms",
                self.nrows(),
                self.ncols(),
                mu.len(),
                nu.len()
            )));
        }
        Ok(())
    }
}

type CostFn = dyn Fn(&[f64], &Point, &Point) -> f64 + Send + Sync;
type ThetaMetric = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// Reads a headerless CSV of numeric rows.
pub fn read_matrix_csv<R: std::io::Read>(reader: R) -> Result<CostMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    CostMatrix::from_rows(&rows)
}

/// A family of costs `c_theta` indexed by a finite parameter grid.
#[derive(Clone)]
pub struct CostFamily {
    params: Vec<Vec<f64>>,
    eval: Arc<CostFn>,
    lipschitz: f64,
    metric: Option<Arc<ThetaMetric>>,
}

impl fmt::Debug for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFamily")
            .field("params", &self.params.len())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl CostFamily {
    pub fn new<F>(params: Vec<Vec<f64>>, lipschitz: f64, eval: F) -> Result<Self>
    where
        F: Fn(&[f64], &Point, &Point) -> f64 + Send + Sync + 'static,
    {
        if params.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::InvalidInput(
                "Lipschitz constant must be nonnegative".into(),
            ));
        }
        Ok(Self {
            params,
            eval: Arc::new(eval),
            lipschitz,
            metric: None,
        })
    }

    /// Replaces the default Euclidean distance on parameters.
    pub fn with_metric<F>(mut self, metric: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.metric = Some(Arc::new(metric));
        self
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn lipschitz_const(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, theta: usize, x: &Point, y: &Point) -> f64 {
        (self.eval)(&self.params[theta], x, y)
    }

    pub fn theta_distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (&self.params[a], &self.params[b]);
        match &self.metric {
            Some(m) => m(p, q),
            None => p
                .iter()
                .zip(q)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn matrix(&self, theta: usize, xs: &[Point], ys: &[Point]) -> Result<CostMatrix> {
        CostMatrix::from_supports(xs, ys, |x, y| self.eval(theta, x, y))
    }

    /// Cost matrices for every grid point.
    pub fn matrices(&self, xs: &[Point], ys: &[Point]) -> Result<Vec<CostMatrix>> {
        (0..self.len()).map(|t| self.matrix(t, xs, ys)).collect()
    }

    /// Exhaustive scan of the Lipschitz invariant over all grid pairs.
    pub fn check_lipschitz(&self, xs: &[Point], ys: &[Point]) -> Result<bool> {
        let mats = self.matrices(xs, ys)?;
        for a in 0..mats.len() {
            for b in a + 1..mats.len() {
                let lhs = mats[a].sup_distance(&mats[b]);
                if lhs > self.lipschitz * self.theta_distance(a, b) + 1e-12 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// A modulus of continuity `w: [0, inf) -> [0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusOfContinuity {
    /// `w(t) = l t`.
    Linear { l: f64 },
    /// `w(t) = lambda t^gamma`.
    Holder { gamma: f64, lambda: f64 },
    /// Piecewise linear through `(t[k], w[k])`, constant after the last knot.
    Table { t: Vec<f64>, w: Vec<f64> },
}

impl ModulusOfContinuity {
    pub fn apply(&self, t: f64) -> f64 {
        match self {
            Self::Linear { l } => l * t,
            Self::Holder { gamma, lambda } => {
                if t <= 0.0 {
                    0.0
                } else {
                    lambda * t.powf(*gamma)
                }
            }
            Self::Table { t: ts, w } => {
                if ts.is_empty() {
                    return 0.0;
                }
                let k = ts.partition_point(|&s| s <= t);
                if k == 0 {
                    // Interpolate from the origin.
                    if ts[0] > 0.0 {
                        w[0] * (t / ts[0]).max(0.0)
                    } else {
                        w[0]
                    }
                } else if k == ts.len() {
                    w[k - 1]
                } else {
                    let (t0, t1, w0, w1) = (ts[k - 1], ts[k], w[k - 1], w[k]);
                    w0 + (w1 - w0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    /// The modulus `s * w`.
    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Self::Linear { l } => Self::Linear { l: l * s },
            Self::Holder { gamma, lambda } => Self::Holder {
                gamma: *gamma,
                lambda: lambda * s,
            },
            Self::Table { t, w } => Self::Table {
                t: t.clone(),
                w: w.iter().map(|v| v * s).collect(),
            },
        }
    }

    /// Checks `w(0) = 0`, monotonicity and midpoint concavity on a 64-point grid up to `t_max`.
    pub fn validate(&self, t_max: f64) -> Result<()> {
        match self {
            Self::Linear { l } if *l < 0.0 => {
                return Err(Error::InvalidSpec("negative Lipschitz modulus".into()))
            }
            Self::Holder { gamma, lambda } if !(*gamma > 0.0 && *gamma <= 1.0) || *lambda < 0.0 => {
                return Err(Error::InvalidSpec(format!(
                    "Hölder modulus needs gamma in (0, 1] and lambda >= 0, got ({gamma}, {lambda})"
                )))
            }
            Self::Table { t, w }
                if (t.len() != w.len()
                    || t.windows(2).any(|p| p[1] <= p[0])
                    || t.first().is_some_and(|&x| x < 0.0))
                => {
                    return Err(Error::InvalidSpec(
                        "modulus table needs increasing nonnegative knots".into(),
                    ));
                }
            _ => {}
        }
        if self.apply(0.0).abs() > 1e-15 {
            return Err(Error::InvalidSpec("modulus must vanish at zero".into()));
        }
        let t_max = if t_max > 0.0 { t_max } else { 1.0 };
        let grid: Vec<f64> = (0..64).map(|k| t_max * k as f64 / 63.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| self.apply(t)).collect();
        if vals.windows(2).any(|p| p[1] < p[0] - 1e-12) {
            return Err(Error::InvalidSpec("modulus must be nondecreasing".into()));
        }
        for a in 0..64 {
            for b in a + 1..64 {
                let mid = self.apply(0.5 * (grid[a] + grid[b]));
                if mid < 0.5 * (vals[a] + vals[b]) - 1e-12 {
                    return Err(Error::InvalidSpec("modulus must be concave".into()));
                }
            }
        }
        Ok(())
    }
}

/// Checks symmetry, zero diagonal, nonnegativity and the triangle inequality.
///
/// Matrices up to 64 points are checked on all triples, larger ones on a fixed
/// pseudo-random sample of triples.
pub fn validate_pseudo_metric(d: &DMatrix<f64>) -> Result<()> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::DimensionMismatch("metric must be square".into()));
    }
    for i in 0..n {
        if d[(i, i)] != 0.0 {
            return Err(Error::InvalidSpec(format!(
                "metric diagonal entry {i} is not zero"
            )));
        }
        for j in 0..n {
            let v = d[(i, j)];
            if !(v >= 0.0 && v.is_finite()) || (v - d[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "metric entry ({i}, {j}) invalid"
                )));
            }
        }
    }
    let violates = |i: usize, j: usize, k: usize| d[(i, k)] > d[(i, j)] + d[(j, k)] + 1e-12;
    if n <= 64 {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if violates(i, j, k) {
                        return Err(Error::InvalidSpec(
                            "metric violates triangle inequality".into(),
                        ));
                    }
                }
            }
        }
    } else {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..20_000 {
            let (i, j, k) = (
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_range(0..n),
            );
            if violates(i, j, k) {
                return Err(Error::InvalidSpec(
                    "metric violates triangle inequality".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Euclidean distance matrix of a support.
pub fn distance_matrix(points: &[Point]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), points.len(), |i, j| {
        points[i].dist(&points[j])
    })
}

/// True iff `|c_ij - c_i'j| <= w(d(i, i')) + 1e-12` for all rows `i, i'` and columns `j`.
pub fn modulus_bound_check(
    c: &CostMatrix,
    w: &ModulusOfContinuity,
    metric: &DMatrix<f64>,
) -> Result<bool> {
    let n = c.nrows();
    if metric.nrows() != n || metric.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "metric is {}x{}, cost has {n} rows",
            metric.nrows(),
            metric.ncols()
        )));
    }
    validate_pseudo_metric(metric)?;
    let v = c.values();
    for i in 0..n {
        for k in i + 1..n {
            let bound = w.apply(metric[(i, k)]) + 1e-12;
            if (0..c.ncols()).any(|j| (v[(i, j)] - v[(k, j)]).abs() > bound) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

const MAX_COMPONENTS: usize = 24;

fn component_masses(m: &DiscreteMeasure, parts: &[Vec<usize>], name: &str) -> Result<Vec<f64>> {
    let mut seen = vec![false; m.len()];
    let mut masses = Vec::with_capacity(parts.len());
    for part in parts {
        if part.is_empty() {
            return Err(Error::PartitionMismatch(format!(
                "{name} has an empty component"
            )));
        }
        let mut mass = 0.0;
        for &i in part {
            if i >= m.len() || seen[i] {
                return Err(Error::PartitionMismatch(format!(
                    "{name} index {i} out of range or repeated"
                )));
            }
            seen[i] = true;
            mass += m.weights()[i];
        }
        masses.push(mass);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::PartitionMismatch(format!(
            "{name} components do not cover the support"
        )));
    }
    if parts.len() > MAX_COMPONENTS {
        return Err(Error::PartitionMismatch(format!(
            "{name} has more than {MAX_COMPONENTS} components"
        )));
    }
    Ok(masses)
}

fn proper_subset_sums(masses: &[f64]) -> Vec<f64> {
    let k = masses.len();
    let full = (1usize << k) - 1;
    let mut sums = vec![0.0; 1 << k];
    for s in 1..=full {
        let low = s.trailing_zeros() as usize;
        sums[s] = sums[s & (s - 1)] + masses[low];
    }
    let mut out: Vec<f64> = sums[1..full].to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// True iff no proper nonempty union of `mu` components has the same mass as a
/// proper nonempty union of `nu` components (up to 1e-12).
pub fn validate_nondegeneracy(
    mu: &DiscreteMeasure,
    mu_parts: &[Vec<usize>],
    nu: &DiscreteMeasure,
    nu_parts: &[Vec<usize>],
) -> Result<bool> {
    let a = proper_subset_sums(&component_masses(mu, mu_parts, "mu")?);
    let b = proper_subset_sums(&component_masses(nu, nu_parts, "nu")?);
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if (a[i] - b[j]).abs() <= 1e-12 {
            return Ok(false);
        }
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(true)
}
